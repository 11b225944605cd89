#include "qcgla/tensor.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "qcgla/errors.hpp"

namespace qcgla {

namespace {

void store_le16(uint8_t* p, uint16_t v) {
    p[0] = uint8_t(v);
    p[1] = uint8_t(v >> 8);
}
void store_le32(uint8_t* p, uint32_t v) {
    store_le16(p, uint16_t(v));
    store_le16(p + 2, uint16_t(v >> 16));
}
void store_le64(uint8_t* p, uint64_t v) {
    store_le32(p, uint32_t(v));
    store_le32(p + 4, uint32_t(v >> 32));
}
uint16_t load_le16(const uint8_t* p) {
    return uint16_t(p[0] | uint16_t(p[1]) << 8);
}
uint32_t load_le32(const uint8_t* p) {
    return load_le16(p) | uint32_t(load_le16(p + 2)) << 16;
}
uint64_t load_le64(const uint8_t* p) {
    return load_le32(p) | uint64_t(load_le32(p + 4)) << 32;
}

template <typename Fn>
void parallel_blocks(size_t n, Fn&& fn) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(n); ++i) {
        fn(size_t(i));
    }
}

} // namespace

const char* dtype_name(dtype t) {
    switch (t) {
        case dtype::f32: return "f32";
        case dtype::q8_0: return "q8_0";
        case dtype::q3_k: return "q3_k";
        case dtype::q3_k_repacked: return "q3_k_repacked";
        case dtype::q8_k: return "q8_k";
    }
    return "?";
}

dtype dtype_from_name(const std::string& name) {
    for (dtype t : {dtype::f32, dtype::q8_0, dtype::q3_k, dtype::q3_k_repacked, dtype::q8_k}) {
        if (name == dtype_name(t)) return t;
    }
    throw invalid_input("unknown dtype: " + name);
}

int dtype_block_len(dtype t) {
    switch (t) {
        case dtype::f32: return 1;
        case dtype::q8_0: return kQ8_0BlockLen;
        default: return kQ3KBlockLen;
    }
}

size_t dtype_block_bytes(dtype t) {
    switch (t) {
        case dtype::f32: return 4;
        case dtype::q8_0: return kQ8_0BlockBytes;
        case dtype::q3_k: return kQ3KBlockBytes;
        case dtype::q3_k_repacked: return kQ3KRepackedBlockBytes;
        case dtype::q8_k: return kQ8KBlockBytes;
    }
    return 0;
}

size_t quantized_tensor::blocks_per_row() const {
    return size_t(cols) / size_t(dtype_block_len(type));
}

size_t quantized_tensor::total_blocks() const {
    return blocks_per_row() * rows;
}

quantized_tensor make_f32_tensor(uint32_t rows, uint32_t cols, std::vector<float> values) {
    if (values.size() != size_t(rows) * cols) {
        throw shape_error("make_f32_tensor: value count does not match rows*cols");
    }
    quantized_tensor t;
    t.type = dtype::f32;
    t.rows = rows;
    t.cols = cols;
    t.data = std::move(values);
    return t;
}

quantized_tensor quantize_tensor(const quantized_tensor& f32_in, dtype target) {
    if (f32_in.type != dtype::f32) throw invalid_input("quantize_tensor: input must be f32");
    const int bl = dtype_block_len(target);
    if (f32_in.cols % uint32_t(bl) != 0) {
        throw shape_error("quantize_tensor: cols (" + std::to_string(f32_in.cols) +
                          ") not divisible by block length " + std::to_string(bl));
    }
    const auto& src = std::get<std::vector<float>>(f32_in.data);
    const size_t nblocks = size_t(f32_in.rows) * f32_in.cols / size_t(bl);

    quantized_tensor out;
    out.type = target;
    out.rows = f32_in.rows;
    out.cols = f32_in.cols;

    switch (target) {
        case dtype::f32:
            out.data = src;
            break;
        case dtype::q8_0: {
            std::vector<block_q8_0> blocks(nblocks);
            parallel_blocks(nblocks, [&](size_t i) {
                blocks[i] = quantize_q8_0(
                    std::span<const float, kQ8_0BlockLen>(src.data() + i * kQ8_0BlockLen, kQ8_0BlockLen));
            });
            out.data = std::move(blocks);
            break;
        }
        case dtype::q3_k: {
            std::vector<superblock_q3_k> blocks(nblocks);
            parallel_blocks(nblocks, [&](size_t i) {
                blocks[i] = quantize_q3_k(
                    std::span<const float, kQ3KBlockLen>(src.data() + i * kQ3KBlockLen, kQ3KBlockLen));
            });
            out.data = std::move(blocks);
            break;
        }
        case dtype::q3_k_repacked: {
            std::vector<repacked_q3_k> blocks(nblocks);
            parallel_blocks(nblocks, [&](size_t i) {
                blocks[i] = repack_q3_k(quantize_q3_k(
                    std::span<const float, kQ3KBlockLen>(src.data() + i * kQ3KBlockLen, kQ3KBlockLen)));
            });
            out.data = std::move(blocks);
            break;
        }
        case dtype::q8_k: {
            std::vector<block_q8_k> blocks(nblocks);
            parallel_blocks(nblocks, [&](size_t i) {
                blocks[i] = quantize_q8_k(
                    std::span<const float, kQ3KBlockLen>(src.data() + i * kQ3KBlockLen, kQ3KBlockLen));
            });
            out.data = std::move(blocks);
            break;
        }
    }
    return out;
}

quantized_tensor dequantize_tensor(const quantized_tensor& in) {
    quantized_tensor out;
    out.type = dtype::f32;
    out.rows = in.rows;
    out.cols = in.cols;
    std::vector<float> values(size_t(in.rows) * in.cols);

    switch (in.type) {
        case dtype::f32:
            values = std::get<std::vector<float>>(in.data);
            break;
        case dtype::q8_0: {
            const auto& blocks = std::get<std::vector<block_q8_0>>(in.data);
            parallel_blocks(blocks.size(), [&](size_t i) {
                dequantize_q8_0(blocks[i],
                                std::span<float, kQ8_0BlockLen>(values.data() + i * kQ8_0BlockLen, kQ8_0BlockLen));
            });
            break;
        }
        case dtype::q3_k: {
            const auto& blocks = std::get<std::vector<superblock_q3_k>>(in.data);
            parallel_blocks(blocks.size(), [&](size_t i) {
                dequantize_q3_k(blocks[i],
                                std::span<float, kQ3KBlockLen>(values.data() + i * kQ3KBlockLen, kQ3KBlockLen));
            });
            break;
        }
        case dtype::q3_k_repacked:
            throw invalid_input("dequantize_tensor: dequantize repacked data via the exact q3_k form");
        case dtype::q8_k: {
            const auto& blocks = std::get<std::vector<block_q8_k>>(in.data);
            parallel_blocks(blocks.size(), [&](size_t i) {
                dequantize_q8_k(blocks[i],
                                std::span<float, kQ3KBlockLen>(values.data() + i * kQ3KBlockLen, kQ3KBlockLen));
            });
            break;
        }
    }
    out.data = std::move(values);
    return out;
}

quantized_tensor repack_tensor(const quantized_tensor& q3k_in) {
    if (q3k_in.type != dtype::q3_k) throw invalid_input("repack_tensor: input must be q3_k");
    const auto& blocks = std::get<std::vector<superblock_q3_k>>(q3k_in.data);
    std::vector<repacked_q3_k> out_blocks(blocks.size());
    parallel_blocks(blocks.size(), [&](size_t i) { out_blocks[i] = repack_q3_k(blocks[i]); });

    quantized_tensor out;
    out.type = dtype::q3_k_repacked;
    out.rows = q3k_in.rows;
    out.cols = q3k_in.cols;
    out.data = std::move(out_blocks);
    return out;
}

// --- QCGT serialization ------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'Q', 'C', 'G', 'T'};
constexpr uint16_t kVersion = 1;

void serialize_blocks(const quantized_tensor& t, std::vector<uint8_t>& buf) {
    switch (t.type) {
        case dtype::f32: {
            const auto& v = std::get<std::vector<float>>(t.data);
            buf.resize(v.size() * 4);
            for (size_t i = 0; i < v.size(); ++i) {
                uint32_t bits;
                std::memcpy(&bits, &v[i], 4);
                store_le32(buf.data() + i * 4, bits);
            }
            break;
        }
        case dtype::q8_0: {
            const auto& v = std::get<std::vector<block_q8_0>>(t.data);
            buf.resize(v.size() * kQ8_0BlockBytes);
            for (size_t i = 0; i < v.size(); ++i) {
                uint8_t* p = buf.data() + i * kQ8_0BlockBytes;
                store_le16(p, v[i].d);
                std::memcpy(p + 2, v[i].q.data(), kQ8_0BlockLen);
            }
            break;
        }
        case dtype::q3_k: {
            const auto& v = std::get<std::vector<superblock_q3_k>>(t.data);
            buf.resize(v.size() * kQ3KBlockBytes);
            for (size_t i = 0; i < v.size(); ++i) {
                pack_q3_k(v[i], std::span<uint8_t, kQ3KBlockBytes>(buf.data() + i * kQ3KBlockBytes,
                                                                   kQ3KBlockBytes));
            }
            break;
        }
        case dtype::q3_k_repacked: {
            const auto& v = std::get<std::vector<repacked_q3_k>>(t.data);
            buf.resize(v.size() * kQ3KRepackedBlockBytes);
            for (size_t i = 0; i < v.size(); ++i) {
                uint8_t* p = buf.data() + i * kQ3KRepackedBlockBytes;
                for (size_t w = 0; w < v[i].words.size(); ++w) store_le64(p + w * 8, v[i].words[w]);
                store_le16(p + 256, v[i].d);
            }
            break;
        }
        case dtype::q8_k: {
            const auto& v = std::get<std::vector<block_q8_k>>(t.data);
            buf.resize(v.size() * kQ8KBlockBytes);
            for (size_t i = 0; i < v.size(); ++i) {
                uint8_t* p = buf.data() + i * kQ8KBlockBytes;
                uint32_t bits;
                std::memcpy(&bits, &v[i].d, 4);
                store_le32(p, bits);
                std::memcpy(p + 4, v[i].q.data(), kQ3KBlockLen);
            }
            break;
        }
    }
}

void deserialize_blocks(quantized_tensor& t, const std::vector<uint8_t>& buf) {
    const size_t nblocks = t.total_blocks();
    switch (t.type) {
        case dtype::f32: {
            std::vector<float> v(nblocks);
            for (size_t i = 0; i < nblocks; ++i) {
                const uint32_t bits = load_le32(buf.data() + i * 4);
                std::memcpy(&v[i], &bits, 4);
            }
            t.data = std::move(v);
            break;
        }
        case dtype::q8_0: {
            std::vector<block_q8_0> v(nblocks);
            for (size_t i = 0; i < nblocks; ++i) {
                const uint8_t* p = buf.data() + i * kQ8_0BlockBytes;
                v[i].d = load_le16(p);
                std::memcpy(v[i].q.data(), p + 2, kQ8_0BlockLen);
            }
            t.data = std::move(v);
            break;
        }
        case dtype::q3_k: {
            std::vector<superblock_q3_k> v(nblocks);
            for (size_t i = 0; i < nblocks; ++i) {
                v[i] = unpack_q3_k(std::span<const uint8_t, kQ3KBlockBytes>(
                    buf.data() + i * kQ3KBlockBytes, kQ3KBlockBytes));
            }
            t.data = std::move(v);
            break;
        }
        case dtype::q3_k_repacked: {
            std::vector<repacked_q3_k> v(nblocks);
            for (size_t i = 0; i < nblocks; ++i) {
                const uint8_t* p = buf.data() + i * kQ3KRepackedBlockBytes;
                for (size_t w = 0; w < v[i].words.size(); ++w) v[i].words[w] = load_le64(p + w * 8);
                v[i].d = load_le16(p + 256);
            }
            t.data = std::move(v);
            break;
        }
        case dtype::q8_k: {
            std::vector<block_q8_k> v(nblocks);
            for (size_t i = 0; i < nblocks; ++i) {
                const uint8_t* p = buf.data() + i * kQ8KBlockBytes;
                const uint32_t bits = load_le32(p);
                std::memcpy(&v[i].d, &bits, 4);
                std::memcpy(v[i].q.data(), p + 4, kQ3KBlockLen);
            }
            t.data = std::move(v);
            break;
        }
    }
}

} // namespace

void write_qcgt(std::ostream& os, const quantized_tensor& t) {
    if (t.cols % uint32_t(dtype_block_len(t.type)) != 0) {
        throw shape_error("write_qcgt: cols not divisible by block length");
    }
    uint8_t header[16];
    std::memcpy(header, kMagic, 4);
    store_le16(header + 4, kVersion);
    header[6] = uint8_t(t.type);
    header[7] = 0;
    store_le32(header + 8, t.rows);
    store_le32(header + 12, t.cols);
    os.write(reinterpret_cast<const char*>(header), sizeof header);

    std::vector<uint8_t> buf;
    serialize_blocks(t, buf);
    os.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    if (!os) throw io_error("write_qcgt: stream write failed");
}

quantized_tensor read_qcgt(std::istream& is) {
    uint8_t header[16];
    is.read(reinterpret_cast<char*>(header), sizeof header);
    if (!is || std::memcmp(header, kMagic, 4) != 0) {
        throw parse_error("not a QCGT file (bad magic)");
    }
    if (load_le16(header + 4) != kVersion) {
        throw parse_error("unsupported QCGT version " + std::to_string(load_le16(header + 4)));
    }
    if (header[6] > uint8_t(dtype::q8_k)) {
        throw parse_error("unknown dtype tag " + std::to_string(header[6]));
    }
    quantized_tensor t;
    t.type = dtype(header[6]);
    t.rows = load_le32(header + 8);
    t.cols = load_le32(header + 12);
    if (t.cols % uint32_t(dtype_block_len(t.type)) != 0) {
        throw parse_error("cols not divisible by dtype block length");
    }

    const size_t nbytes = t.total_blocks() * dtype_block_bytes(t.type);
    std::vector<uint8_t> buf(nbytes);
    is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(nbytes));
    if (size_t(is.gcount()) != nbytes) throw parse_error("truncated QCGT payload");
    deserialize_blocks(t, buf);
    return t;
}

void write_qcgt_file(const std::string& path, const quantized_tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open for writing: " + path);
    write_qcgt(f, t);
}

quantized_tensor read_qcgt_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open: " + path);
    return read_qcgt(f);
}

} // namespace qcgla
