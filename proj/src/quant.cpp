#include "qcgla/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "qcgla/errors.hpp"

namespace qcgla {

namespace {

constexpr float kFp16Max = 65504.0f;

int round_half_away(float v) {
    return int(std::lroundf(v));
}

// clamp first: quotients against a saturated scale can overflow lround
int round_clamped(float v, int lo, int hi) {
    if (v <= float(lo)) return lo;
    if (v >= float(hi)) return hi;
    return round_half_away(v);
}

void require_finite(std::span<const float> x, const char* what) {
    for (float v : x) {
        if (!std::isfinite(v)) throw invalid_input(std::string(what) + ": non-finite input");
    }
}

// Largest-magnitude element, sign preserved; earliest index wins ties.
float extreme_element(std::span<const float> x) {
    float ext = 0.0f;
    float amax = 0.0f;
    for (float v : x) {
        const float a = std::fabs(v);
        if (a > amax) {
            amax = a;
            ext = v;
        }
    }
    return ext;
}

// Nudge a freshly computed f32 scale onto a fixpoint of the x127 product /
// quotient round trip. Requantizing a dequantized Q8_K block recomputes the
// scale as fl(fl(127*d)/127), which for ~0.5% of raw quotients lands one ulp
// off; stepping d down by at most a few ulps restores bit-exact recovery
// without disturbing the quant codes.
float stabilize_scale_q8k(float d) {
    for (int i = 0; i < 64 && float(float(d * 127.0f) / 127.0f) != d; ++i) {
        d = std::nextafterf(d, 0.0f);
    }
    return d;
}

} // namespace

block_q8_0 quantize_q8_0(std::span<const float, kQ8_0BlockLen> x) {
    require_finite(x, "quantize_q8_0");
    block_q8_0 b;
    float amax = 0.0f;
    for (float v : x) amax = std::max(amax, std::fabs(v));
    if (amax == 0.0f) return b;

    b.d = f32_to_fp16(std::min(amax / 127.0f, kFp16Max));
    const float d = fp16_to_f32(b.d);
    if (d == 0.0f) return block_q8_0{}; // scale underflowed: all-zero block
    for (int i = 0; i < kQ8_0BlockLen; ++i) {
        b.q[i] = int8_t(round_clamped(x[i] / d, -127, 127));
    }
    return b;
}

void dequantize_q8_0(const block_q8_0& b, std::span<float, kQ8_0BlockLen> out) {
    const float d = fp16_to_f32(b.d);
    for (int i = 0; i < kQ8_0BlockLen; ++i) out[i] = d * float(b.q[i]);
}

block_q8_k quantize_q8_k(std::span<const float, kQ3KBlockLen> x) {
    require_finite(x, "quantize_q8_k");
    block_q8_k b;
    float amax = 0.0f;
    for (float v : x) amax = std::max(amax, std::fabs(v));
    if (amax == 0.0f) return b;

    b.d = stabilize_scale_q8k(amax / 127.0f);
    if (b.d == 0.0f) return block_q8_k{}; // scale underflowed: all-zero block
    for (int i = 0; i < kQ3KBlockLen; ++i) {
        b.q[i] = int8_t(round_clamped(x[i] / b.d, -127, 127));
    }
    return b;
}

void dequantize_q8_k(const block_q8_k& b, std::span<float, kQ3KBlockLen> out) {
    for (int i = 0; i < kQ3KBlockLen; ++i) out[i] = b.d * float(b.q[i]);
}

superblock_q3_k quantize_q3_k(std::span<const float, kQ3KBlockLen> x) {
    require_finite(x, "quantize_q3_k");

    superblock_q3_k b;
    b.scales_raw.fill(32); // signed 0
    b.quants_raw.fill(4);  // signed 0

    // Per-sub-block signed scale estimate: the extreme element maps to the
    // -4 end of the quant lattice.
    std::array<float, kQ3KSubBlocks> t{};
    float t_max = 0.0f;
    for (int j = 0; j < kQ3KSubBlocks; ++j) {
        const float ext = extreme_element(x.subspan(size_t(j) * kQ3KSubBlockLen, kQ3KSubBlockLen));
        t[j] = -ext / 4.0f;
        t_max = std::max(t_max, std::fabs(t[j]));
    }
    if (t_max == 0.0f) return b;

    b.d = f32_to_fp16(std::min(t_max / 30.0f, kFp16Max));
    const float d = fp16_to_f32(b.d);
    if (d == 0.0f) { // super-scale underflowed
        b.d = 0;
        return b;
    }

    for (int j = 0; j < kQ3KSubBlocks; ++j) {
        // Scale codes are fit on the even sublattice (the exact image of the
        // 5-bit repacked scales), largest sub-block on +/-30, so repacking
        // loses nothing. Truncation toward zero (with a magnitude nudge
        // against fp noise at integer ratios) never overstates a scale, so
        // the extreme element always re-rounds to -4 and requantization is
        // bit-stable.
        const double v = 15.0 * double(t[j]) / double(t_max);
        int sc = 2 * int(std::trunc(v + std::copysign(1e-9, v)));
        sc = std::clamp(sc, -30, 30);
        b.scales_raw[j] = uint8_t(sc + 32);

        const float m = d * float(sc);
        if (m == 0.0f) continue;
        for (int i = 0; i < kQ3KSubBlockLen; ++i) {
            const float xv = x[size_t(j) * kQ3KSubBlockLen + size_t(i)];
            const int q = round_clamped(xv / m, -4, 3);
            b.quants_raw[size_t(j) * kQ3KSubBlockLen + size_t(i)] = uint8_t(q + 4);
        }
    }
    return b;
}

void dequantize_q3_k(const superblock_q3_k& b, std::span<float, kQ3KBlockLen> out) {
    const float d = fp16_to_f32(b.d);
    for (int j = 0; j < kQ3KSubBlocks; ++j) {
        const float m = d * float(int(b.scales_raw[j]) - 32);
        for (int i = 0; i < kQ3KSubBlockLen; ++i) {
            const size_t e = size_t(j) * kQ3KSubBlockLen + size_t(i);
            out[e] = m * float(int(b.quants_raw[e]) - 4);
        }
    }
}

int repack_scale_code(uint8_t scale_raw) {
    const int v = int(scale_raw) - 32;
    const int s5 = round_half_away(float(v) / 2.0f);
    return std::clamp(s5, -16, 15);
}

repacked_q3_k repack_q3_k(const superblock_q3_k& b) {
    repacked_q3_k r;
    r.d = b.d;
    for (int way = 0; way < kQ3KBlockLen / 4; ++way) {
        const int sub = way / 4;
        uint32_t bits = uint32_t(repack_scale_code(b.scales_raw[sub]) & 0x1F) << 12;
        for (int k = 0; k < 4; ++k) {
            bits |= uint32_t(b.quants_raw[size_t(way) * 4 + size_t(k)] & 0x7u) << (3 * k);
        }
        r.words[way / 2] |= uint64_t(bits) << (32 * (way % 2));
    }
    return r;
}

// --- GGML 110-byte layout --------------------------------------------------
// Element e: high bit of the 3-bit code at hmask[e % 32] bit (e / 32); low
// two bits at qs[(e/128)*32 + e%32] shifted by 2*((e%128)/32). Scale j: low
// nibble in scales[j] (j < 8) or the high nibble of scales[j-8] (j >= 8);
// top two bits in scales[8 + j%4] at bit 2*(j/4).

void pack_q3_k(const superblock_q3_k& b, std::span<uint8_t, kQ3KBlockBytes> out) {
    std::fill(out.begin(), out.end(), uint8_t(0));
    uint8_t* hmask = out.data();
    uint8_t* qs = out.data() + 32;
    uint8_t* scales = out.data() + 96;

    for (int e = 0; e < kQ3KBlockLen; ++e) {
        const uint8_t code = b.quants_raw[e] & 0x7u;
        if (code & 4u) hmask[e % 32] |= uint8_t(1u << (e / 32));
        qs[(e / 128) * 32 + e % 32] |= uint8_t((code & 3u) << (2 * ((e % 128) / 32)));
    }
    for (int j = 0; j < kQ3KSubBlocks; ++j) {
        const uint8_t s = b.scales_raw[j] & 0x3Fu;
        if (j < 8) {
            scales[j] |= uint8_t(s & 0xFu);
        } else {
            scales[j - 8] |= uint8_t((s & 0xFu) << 4);
        }
        scales[8 + j % 4] |= uint8_t((s >> 4) << (2 * (j / 4)));
    }
    out[108] = uint8_t(b.d & 0xFF);
    out[109] = uint8_t(b.d >> 8);
}

superblock_q3_k unpack_q3_k(std::span<const uint8_t, kQ3KBlockBytes> in) {
    superblock_q3_k b;
    const uint8_t* hmask = in.data();
    const uint8_t* qs = in.data() + 32;
    const uint8_t* scales = in.data() + 96;

    for (int e = 0; e < kQ3KBlockLen; ++e) {
        const uint8_t lo = (qs[(e / 128) * 32 + e % 32] >> (2 * ((e % 128) / 32))) & 3u;
        const uint8_t hi = (hmask[e % 32] >> (e / 32)) & 1u;
        b.quants_raw[e] = uint8_t(lo | hi << 2);
    }
    for (int j = 0; j < kQ3KSubBlocks; ++j) {
        const uint8_t lo4 = (j < 8) ? (scales[j] & 0xFu) : uint8_t(scales[j - 8] >> 4);
        const uint8_t hi2 = (scales[8 + j % 4] >> (2 * (j / 4))) & 3u;
        b.scales_raw[j] = uint8_t(lo4 | hi2 << 4);
    }
    b.d = fp16_t(in[108] | uint16_t(in[109]) << 8);
    return b;
}

// --- Reference dot products ------------------------------------------------

float ref_dot_q8_0(std::span<const block_q8_0> a, std::span<const block_q8_0> b) {
    if (a.size() != b.size()) throw shape_error("ref_dot_q8_0: sequence length mismatch");
    float acc = 0.0f;
    for (size_t n = 0; n < a.size(); ++n) {
        int64_t isum = 0;
        for (int i = 0; i < kQ8_0BlockLen; ++i) {
            isum += int64_t(a[n].q[i]) * int64_t(b[n].q[i]);
        }
        const float ds = fp16_to_f32(a[n].d) * fp16_to_f32(b[n].d);
        acc += ds * float(isum);
    }
    return acc;
}

float ref_dot_q3_k(std::span<const superblock_q3_k> w, std::span<const block_q8_k> a) {
    if (w.size() != a.size()) throw shape_error("ref_dot_q3_k: sequence length mismatch");
    float acc = 0.0f;
    for (size_t n = 0; n < w.size(); ++n) {
        int64_t isum = 0;
        for (int e = 0; e < kQ3KBlockLen; ++e) {
            const int scale = int(w[n].scales_raw[e / kQ3KSubBlockLen]) - 32;
            isum += int64_t(scale) * int64_t(int(w[n].quants_raw[e]) - 4) * int64_t(a[n].q[e]);
        }
        const float ds = fp16_to_f32(w[n].d) * a[n].d;
        acc += ds * float(isum);
    }
    return acc;
}

float ref_dot_q3_k_repacked(std::span<const repacked_q3_k> w, std::span<const block_q8_k> a) {
    if (w.size() != a.size()) throw shape_error("ref_dot_q3_k_repacked: sequence length mismatch");
    float acc = 0.0f;
    for (size_t n = 0; n < w.size(); ++n) {
        int64_t isum = 0;
        for (int e = 0; e < kQ3KBlockLen; ++e) {
            const uint32_t way = uint32_t(w[n].words[e / 8] >> (32 * ((e / 4) % 2)));
            const int s5 = int(way << 15) >> 27; // sign-extend bits 16..12
            const int q = int((way >> (3 * (e % 4))) & 0x7u) - 4;
            isum += int64_t(2 * s5) * int64_t(q) * int64_t(a[n].q[e]);
        }
        const float ds = fp16_to_f32(w[n].d) * a[n].d;
        acc += ds * float(isum);
    }
    return acc;
}

} // namespace qcgla
