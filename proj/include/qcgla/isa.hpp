#pragma once

#include <cstdint>
#include <string>

#include "qcgla/errors.hpp"

namespace qcgla {

// ---------------------------------------------------------------------------
// word64: the 2-way SIMD operand unit. Way 0 occupies the low 32 bits,
// way 1 the high 32 bits. A way is interpreted per instruction as either
// four packed signed 8-bit lanes, a sign-extended 24-bit signed integer
// (bits 31..24 replicate bit 23), or the CVT53 field layout (signed 5-bit
// scale in bits 16..12, four 3-bit quant codes in bits 11..0, bits 31..17
// zero).
// ---------------------------------------------------------------------------

struct word64 {
    uint64_t bits = 0;

    constexpr uint32_t way(int i) const { return uint32_t(bits >> (32 * i)); }
    constexpr void set_way(int i, uint32_t v) {
        bits = (bits & ~(0xFFFFFFFFull << (32 * i))) | uint64_t(v) << (32 * i);
    }

    constexpr int8_t lane8(int way_index, int lane) const {
        return int8_t(way(way_index) >> (8 * lane));
    }
    constexpr void set_lane8(int way_index, int lane, int8_t v) {
        const int shift = 32 * way_index + 8 * lane;
        bits = (bits & ~(0xFFull << shift)) | uint64_t(uint8_t(v)) << shift;
    }

    // way as a signed 24-bit integer in canonical sign-extended form
    constexpr int32_t int24(int i) const { return int32_t(way(i)); }
    constexpr bool operator==(const word64&) const = default;
};

constexpr word64 make_lanes8(int8_t a0, int8_t a1, int8_t a2, int8_t a3,
                             int8_t b0, int8_t b1, int8_t b2, int8_t b3) {
    word64 w;
    w.set_lane8(0, 0, a0); w.set_lane8(0, 1, a1); w.set_lane8(0, 2, a2); w.set_lane8(0, 3, a3);
    w.set_lane8(1, 0, b0); w.set_lane8(1, 1, b1); w.set_lane8(1, 2, b2); w.set_lane8(1, 3, b3);
    return w;
}

inline constexpr int32_t kInt24Max = (1 << 23) - 1;
inline constexpr int32_t kInt24Min = -(1 << 23);

constexpr uint32_t sign_extend_24(int32_t v) {
    return (uint32_t(v) & 0xFFFFFFu) | ((v & 0x800000) ? 0xFF000000u : 0u);
}

constexpr bool is_canonical_24(uint32_t way) {
    return way == sign_extend_24(int32_t(way << 8) >> 8);
}

// ---------------------------------------------------------------------------
// Instruction set used by the dot-product pipelines.
// ---------------------------------------------------------------------------

enum class pe_op : uint8_t { sml8, ad24, cvt53, fmul32, move };

inline const char* pe_op_name(pe_op op) {
    switch (op) {
        case pe_op::sml8: return "SML8";
        case pe_op::ad24: return "AD24";
        case pe_op::cvt53: return "CVT53";
        case pe_op::fmul32: return "FMUL32";
        case pe_op::move: return "MOVE";
    }
    return "?";
}

inline pe_op pe_op_from_name(const std::string& name) {
    for (pe_op op : {pe_op::sml8, pe_op::ad24, pe_op::cvt53, pe_op::fmul32, pe_op::move}) {
        if (name == pe_op_name(op)) return op;
    }
    throw parse_error("unknown op: " + name);
}

// 2-way SIMD signed 8-bit multiply-add: per way, the exact sum of the four
// lane products, sign-extended to a 24-bit output. |sum| <= 4*127*127 always
// fits.
constexpr word64 op_sml8(word64 a, word64 b) {
    word64 r;
    for (int w = 0; w < 2; ++w) {
        int32_t s = 0;
        for (int k = 0; k < 4; ++k) s += int32_t(a.lane8(w, k)) * int32_t(b.lane8(w, k));
        r.set_way(w, sign_extend_24(s));
    }
    return r;
}

// 2-way 24-bit integer addition. The sum must stay representable in 24 bits;
// anything else is a kernel-construction bug and raises overflow24_error.
inline word64 op_ad24(word64 a, word64 b) {
    word64 r;
    for (int w = 0; w < 2; ++w) {
        const int64_t s = int64_t(a.int24(w)) + int64_t(b.int24(w));
        if (s < kInt24Min || s > kInt24Max) {
            throw overflow24_error("op_ad24: way " + std::to_string(w) + " sum " +
                                   std::to_string(s) + " exceeds 24 bits");
        }
        r.set_way(w, sign_extend_24(int32_t(s)));
    }
    return r;
}

// Fused scale/multiply for the repacked Q3_K layout: per way, with s5 the
// signed 5-bit scale and q_k the raw 3-bit quant codes of w, computes
// sum_k (2*s5)*(q_k - 4)*a_k over the four activation lanes of a;
// |result| <= 4*32*4*127 fits 24 bits.
inline word64 op_cvt53(word64 w, word64 a) {
    word64 r;
    for (int wi = 0; wi < 2; ++wi) {
        const uint32_t way = w.way(wi);
        if (way & 0xFFFE0000u) {
            throw invalid_operand("op_cvt53: nonzero pad bits in way " + std::to_string(wi));
        }
        const int32_t s5 = int32_t(way << 15) >> 27; // sign-extend bits 16..12
        int32_t sum = 0;
        for (int k = 0; k < 4; ++k) {
            const int32_t q = int32_t((way >> (3 * k)) & 0x7u) - 4;
            sum += 2 * s5 * q * int32_t(a.lane8(wi, k));
        }
        r.set_way(wi, sign_extend_24(sum));
    }
    return r;
}

constexpr float op_fmul32(float x, float y) {
    return x * y;
}

// Exact: every 24-bit integer is representable in binary32.
constexpr float int24_to_f32(word64 w, int way_index) {
    return float(w.int24(way_index));
}

// Data-mover stage: forwards a word while exchanging its two SIMD ways.
constexpr word64 op_move(word64 w) {
    word64 r;
    r.set_way(0, w.way(1));
    r.set_way(1, w.way(0));
    return r;
}

} // namespace qcgla
