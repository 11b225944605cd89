#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qcgla/quant.hpp"

namespace qcgla {

enum class dtype : uint8_t {
    f32 = 0,
    q8_0 = 1,
    q3_k = 2,
    q3_k_repacked = 3,
    q8_k = 4,
};

const char* dtype_name(dtype t);
dtype dtype_from_name(const std::string& name);
int dtype_block_len(dtype t);          // elements per block
size_t dtype_block_bytes(dtype t);     // wire bytes per block (4 per element for f32)

// Row-major tensor of quantized blocks; cols is a multiple of the dtype's
// block length and each row holds cols/block_len consecutive blocks.
struct quantized_tensor {
    dtype type = dtype::f32;
    uint32_t rows = 0;
    uint32_t cols = 0;
    std::variant<std::vector<float>,
                 std::vector<block_q8_0>,
                 std::vector<superblock_q3_k>,
                 std::vector<repacked_q3_k>,
                 std::vector<block_q8_k>>
        data;

    size_t blocks_per_row() const;
    size_t total_blocks() const;

    template <typename T>
    std::span<const T> row(size_t r) const {
        const auto& v = std::get<std::vector<T>>(data);
        const size_t n = blocks_per_row();
        return std::span<const T>(v).subspan(r * n, n);
    }
};

// Block-parallel conversion between f32 tensors and quantized forms.
quantized_tensor quantize_tensor(const quantized_tensor& f32_in, dtype target);
quantized_tensor dequantize_tensor(const quantized_tensor& in);
quantized_tensor repack_tensor(const quantized_tensor& q3k_in);

quantized_tensor make_f32_tensor(uint32_t rows, uint32_t cols, std::vector<float> values);

// QCGT container: "QCGT" | u16 version=1 | u8 dtype | u8 reserved |
// u32 rows | u32 cols | raw little-endian block bytes, rows consecutive.
void write_qcgt(std::ostream& os, const quantized_tensor& t);
quantized_tensor read_qcgt(std::istream& is);
void write_qcgt_file(const std::string& path, const quantized_tensor& t);
quantized_tensor read_qcgt_file(const std::string& path);

} // namespace qcgla
