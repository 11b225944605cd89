#pragma once

#include <cstdint>
#include <cstring>

namespace qcgla {

// IEEE 754 binary16 stored as a raw bit pattern. Conversions below are
// round-to-nearest-even on narrowing and exact on widening.
using fp16_t = uint16_t;

inline float fp16_to_f32(fp16_t h) {
    const uint32_t sign = (uint32_t(h) & 0x8000u) << 16;
    const uint32_t exp  = (h >> 10) & 0x1Fu;
    const uint32_t mant = h & 0x3FFu;

    uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign; // +/- 0
        } else {
            // subnormal: normalize into f32
            uint32_t m = mant;
            int e = -1;
            do {
                m <<= 1;
                ++e;
            } while ((m & 0x400u) == 0);
            bits = sign | uint32_t(127 - 15 - e) << 23 | (m & 0x3FFu) << 13;
        }
    } else if (exp == 0x1F) {
        bits = sign | 0x7F800000u | mant << 13; // inf / nan
    } else {
        bits = sign | (exp + 127 - 15) << 23 | mant << 13;
    }
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
}

inline fp16_t f32_to_fp16(float f) {
    uint32_t x;
    std::memcpy(&x, &f, sizeof x);
    const uint32_t sign = (x >> 16) & 0x8000u;
    x &= 0x7FFFFFFFu;

    if (x >= 0x7F800000u) { // inf / nan
        uint32_t mant = (x > 0x7F800000u) ? ((x >> 13) & 0x3FFu) | 0x200u : 0;
        return fp16_t(sign | 0x7C00u | mant);
    }
    if (x >= 0x477FF000u) { // rounds to >= 2^16: overflow to inf
        return fp16_t(sign | 0x7C00u);
    }
    if (x < 0x38800000u) { // subnormal or zero in fp16
        if (x < 0x33000000u) return fp16_t(sign); // underflows to 0
        // result mantissa = round(value / 2^-24): shift the 24-bit
        // significand right by (126 - e), rounding to nearest even
        const int shift = 126 - int(x >> 23);
        const uint32_t m = (x & 0x7FFFFFu) | 0x800000u;
        const uint32_t round = (1u << (shift - 1)) - 1 + ((m >> shift) & 1u);
        return fp16_t(sign | ((m + round) >> shift));
    }
    // normal range
    const uint32_t lsb_parity = (x >> 13) & 1u;
    const uint32_t rounded = x + 0xFFFu + lsb_parity;
    return fp16_t(sign | ((rounded - 0x38000000u) >> 13));
}

} // namespace qcgla
