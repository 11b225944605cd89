#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qcgla/fp16.hpp"

namespace qcgla {

// ---------------------------------------------------------------------------
// Quantized block containers
//
// Q8_0:  32 elements, fp16 scale, signed 8-bit quants in [-127, 127].
// Q3_K:  256-element superblock, fp16 super-scale, 16 six-bit sub-block scale
//        codes (signed value = raw - 32) and 256 three-bit quant codes
//        (signed value = raw - 4).
// Q8_K:  256-element activation superblock, f32 scale, signed 8-bit quants.
// ---------------------------------------------------------------------------

inline constexpr int kQ8_0BlockLen = 32;
inline constexpr int kQ3KBlockLen = 256;
inline constexpr int kQ3KSubBlockLen = 16;
inline constexpr int kQ3KSubBlocks = kQ3KBlockLen / kQ3KSubBlockLen;

inline constexpr size_t kQ8_0BlockBytes = 2 + kQ8_0BlockLen;          // 34
inline constexpr size_t kQ3KBlockBytes = 32 + 64 + 12 + 2;            // 110
inline constexpr size_t kQ3KRepackedBlockBytes = 32 * 8 + 2;          // 258
inline constexpr size_t kQ8KBlockBytes = 4 + kQ3KBlockLen;            // 260

struct block_q8_0 {
    fp16_t d = 0;                               // scale
    std::array<int8_t, kQ8_0BlockLen> q{};      // quants, each in [-127, 127]
};

struct superblock_q3_k {
    fp16_t d = 0;                                    // super-scale
    std::array<uint8_t, kQ3KSubBlocks> scales_raw{}; // 6-bit codes, value = raw - 32
    std::array<uint8_t, kQ3KBlockLen> quants_raw{};  // 3-bit codes, value = raw - 4

    bool operator==(const superblock_q3_k&) const = default;
};

// IMAX-ready layout: 32 64-bit words per superblock. Each 32-bit way carries
// one signed 5-bit sub-block scale in bits 16..12 and four 3-bit quant codes
// in bits 11..0 (code k for element 4*way+k at bits 3k+2..3k). Bits 31..17
// are zero. The sub-block scale is duplicated across the 4 ways spanning its
// 16 elements. Effective sub-block scale is 2*s5.
struct repacked_q3_k {
    fp16_t d = 0;
    std::array<uint64_t, kQ3KBlockLen / 8> words{};

    bool operator==(const repacked_q3_k&) const = default;
};

struct block_q8_k {
    float d = 0.0f;
    std::array<int8_t, kQ3KBlockLen> q{};
};

// ---------------------------------------------------------------------------
// Quantize / dequantize
//
// Rounding is half-away-from-zero throughout, with one exception: Q3_K
// sub-block scale codes round toward zero, which keeps every nonzero
// sub-block's extreme element on the -4 quant code and thereby makes the
// quantizer a projection (re-quantizing a dequantized block is bit-exact).
// Q3_K scale codes are fit on the even sublattice -- the exact image of the
// 5-bit repacked scales -- so repack_q3_k is lossless for self-produced
// blocks; decoding accepts the full 6-bit code range either way.
// ---------------------------------------------------------------------------

block_q8_0 quantize_q8_0(std::span<const float, kQ8_0BlockLen> x);
void dequantize_q8_0(const block_q8_0& b, std::span<float, kQ8_0BlockLen> out);

superblock_q3_k quantize_q3_k(std::span<const float, kQ3KBlockLen> x);
void dequantize_q3_k(const superblock_q3_k& b, std::span<float, kQ3KBlockLen> out);

block_q8_k quantize_q8_k(std::span<const float, kQ3KBlockLen> x);
void dequantize_q8_k(const block_q8_k& b, std::span<float, kQ3KBlockLen> out);

// 6-bit signed scale code (raw - 32) halved to a 5-bit code. Guarantees
// |2*repack_scale_code(raw) - (raw - 32)| <= 1 for every raw in [0, 63].
int repack_scale_code(uint8_t scale_raw);

repacked_q3_k repack_q3_k(const superblock_q3_k& b);

// ---------------------------------------------------------------------------
// Packed byte layout (GGML-compatible): 32 bytes high-bit mask, 64 bytes of
// 2-bit low pairs, 12 bytes of 6-bit scales, 2 bytes of fp16 d -- 110 total.
// Round-trips losslessly against the field view.
// ---------------------------------------------------------------------------

void pack_q3_k(const superblock_q3_k& b, std::span<uint8_t, kQ3KBlockBytes> out);
superblock_q3_k unpack_q3_k(std::span<const uint8_t, kQ3KBlockBytes> in);

// ---------------------------------------------------------------------------
// Reference dot products (serial oracles for the pipeline kernels).
// Integer inner sums are exact; the outer accumulation is binary32 in
// sequential block order so kernel results can be compared bit-exactly.
// ---------------------------------------------------------------------------

float ref_dot_q8_0(std::span<const block_q8_0> a, std::span<const block_q8_0> b);
float ref_dot_q3_k(std::span<const superblock_q3_k> w, std::span<const block_q8_k> a);
float ref_dot_q3_k_repacked(std::span<const repacked_q3_k> w, std::span<const block_q8_k> a);

} // namespace qcgla
