#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <vector>

#include "qcgla/kernels.hpp"
#include "qcgla/quant.hpp"
#include "qcgla/rng.hpp"
#include "qcgla/errors.hpp"

using namespace qcgla;

namespace {

std::vector<float> gaussian_vec(rng& r, size_t n, float scale = 1.0f) {
    std::vector<float> v(n);
    for (auto& x : v) x = float(r.next_gaussian()) * scale;
    return v;
}

block_q8_0 random_q8_0(rng& r) {
    auto x = gaussian_vec(r, 32, r.next_float(0.1f, 10.0f));
    return quantize_q8_0(std::span<const float, 32>(x.data(), 32));
}

block_q8_k random_q8_k(rng& r) {
    auto x = gaussian_vec(r, 256, r.next_float(0.1f, 10.0f));
    return quantize_q8_k(std::span<const float, 256>(x.data(), 256));
}

superblock_q3_k random_q3_k_block(rng& r) {
    // raw codes across the full ranges, not just quantizer output
    superblock_q3_k b;
    b.d = f32_to_fp16(r.next_float(0.001f, 4.0f));
    for (auto& s : b.scales_raw) s = uint8_t(r.next_below(64));
    for (auto& q : b.quants_raw) q = uint8_t(r.next_below(8));
    return b;
}

block_q8_0 extreme_q8_0(rng& r) {
    block_q8_0 b;
    b.d = f32_to_fp16(1.0f);
    for (auto& q : b.q) q = r.next_below(2) ? int8_t(127) : int8_t(-127);
    return b;
}

} // namespace

TEST_CASE("default mappings hit the published PE totals and validate") {
    const auto& q8 = default_mapping(kernel_tag::q8_0);
    CHECK(q8.pe_count() == 46);
    CHECK(q8.kernel == kernel_tag::q8_0);
    CHECK_NOTHROW(q8.validate());
    CHECK(q8.blocks_per_firing() == 4);

    const auto& q3 = default_mapping(kernel_tag::q3_k);
    CHECK(q3.pe_count() == 51);
    CHECK(q3.kernel == kernel_tag::q3_k);
    CHECK_NOTHROW(q3.validate());
    CHECK(q3.blocks_per_firing() == 1);

    // text round-trip through the parser reproduces the stage list
    for (kernel_tag t : {kernel_tag::q8_0, kernel_tag::q3_k}) {
        const auto& m = default_mapping(t);
        const auto re = parse_mapping(m.to_text(), t);
        REQUIRE(re.stages.size() == m.stages.size());
        for (size_t i = 0; i < m.stages.size(); ++i) {
            CHECK(re.stages[i].pe == m.stages[i].pe);
            CHECK(re.stages[i].op == m.stages[i].op);
            CHECK(re.stages[i].inputs == m.stages[i].inputs);
        }
    }
}

TEST_CASE("mapping validation rejects malformed descriptors") {
    // forward reference
    CHECK_THROWS_AS(parse_mapping("pe=0 op=MOVE in=1\n"
                                  "pe=1 op=MOVE in=0\n",
                                  kernel_tag::q8_0),
                    config_error);
    // non-increasing pe indices
    CHECK_THROWS_AS(parse_mapping("pe=3 op=SML8 in=stream:A,stream:B\n"
                                  "pe=3 op=MOVE in=0\n",
                                  kernel_tag::q8_0),
                    config_error);
    // wrong leaf op for the kernel
    CHECK_THROWS_AS(parse_mapping("pe=0 op=CVT53 in=stream:A,stream:B\n", kernel_tag::q8_0),
                    config_error);
    // AD24 wants two operands
    CHECK_THROWS_AS(parse_mapping("pe=0 op=AD24 in=stream:A\n", kernel_tag::q8_0), config_error);
    // unknown op name
    CHECK_THROWS_AS(parse_mapping("pe=0 op=XADD in=stream:A\n", kernel_tag::q8_0), parse_error);
    // garbage line
    CHECK_THROWS_AS(parse_mapping("pe=0 MOVE\n", kernel_tag::q8_0), parse_error);
    // no scale stage
    CHECK_THROWS_AS(parse_mapping("pe=0 op=SML8 in=stream:A,stream:B\n", kernel_tag::q8_0),
                    config_error);
    // pe out of the 64-PE lane
    CHECK_THROWS_AS(parse_mapping("pe=64 op=SML8 in=stream:A,stream:B\n", kernel_tag::q8_0),
                    config_error);
}

TEST_CASE("q8_0_dot trivial cases") {
    const auto& m = default_mapping(kernel_tag::q8_0);
    CHECK(q8_0_dot({}, {}, m) == 0.0f);

    std::vector<block_q8_0> a(3), b(3); // all-zero blocks
    CHECK(q8_0_dot(a, b, m) == 0.0f);

    block_q8_0 ua, ub;
    ua.d = ub.d = f32_to_fp16(1.0f);
    ua.q[0] = ub.q[0] = 1;
    const block_q8_0 av[] = {ua};
    const block_q8_0 bv[] = {ub};
    CHECK(q8_0_dot(av, bv, m) == 1.0f);

    std::vector<block_q8_0> longer(2);
    CHECK_THROWS_AS(q8_0_dot(longer, bv, m), shape_error);
    CHECK_THROWS_AS(q8_0_dot(av, bv, default_mapping(kernel_tag::q3_k)), config_error);
}

TEST_CASE("q8_0_dot is bit-identical to the reference over random sequences") {
    rng r(21);
    const auto& m = default_mapping(kernel_tag::q8_0);
    for (int trial = 0; trial < 3000; ++trial) {
        const size_t nblocks = 1 + r.next_below(40); // covers ragged firing tails
        std::vector<block_q8_0> a(nblocks), b(nblocks);
        for (size_t n = 0; n < nblocks; ++n) {
            a[n] = random_q8_0(r);
            b[n] = random_q8_0(r);
        }
        const float pipe = q8_0_dot(a, b, m);
        const float ref = ref_dot_q8_0(a, b);
        CHECK(std::memcmp(&pipe, &ref, 4) == 0);
    }
}

TEST_CASE("q3_k_dot trivial cases and the single-product example") {
    const auto& m = default_mapping(kernel_tag::q3_k);
    CHECK(q3_k_dot({}, {}, m) == 0.0f);

    superblock_q3_k w;
    w.d = f32_to_fp16(1.0f);
    w.scales_raw.fill(32);
    w.quants_raw.fill(4);
    w.scales_raw[0] = 26; // signed -6 -> s5 = -3
    w.quants_raw[0] = 7;
    block_q8_k a;
    a.d = 1.0f;
    a.q[0] = 10;
    const repacked_q3_k rv[] = {repack_q3_k(w)};
    const block_q8_k av[] = {a};
    CHECK(q3_k_dot(rv, av, m) == -180.0f);

    block_q8_k zero;
    zero.d = 0.5f;
    const block_q8_k zv[] = {zero};
    CHECK(q3_k_dot(rv, zv, m) == 0.0f);

    CHECK_THROWS_AS(q3_k_dot(rv, av, default_mapping(kernel_tag::q8_0)), config_error);
}

TEST_CASE("q3_k_dot is bit-identical to the repacked reference") {
    rng r(22);
    const auto& m = default_mapping(kernel_tag::q3_k);
    for (int trial = 0; trial < 2000; ++trial) {
        const size_t nblocks = 1 + r.next_below(16);
        std::vector<repacked_q3_k> w(nblocks);
        std::vector<block_q8_k> a(nblocks);
        for (size_t n = 0; n < nblocks; ++n) {
            w[n] = repack_q3_k(random_q3_k_block(r));
            a[n] = random_q8_k(r);
        }
        const float pipe = q3_k_dot(w, a, m);
        const float ref = ref_dot_q3_k_repacked(w, a);
        CHECK(std::memcmp(&pipe, &ref, 4) == 0);
    }
}

TEST_CASE("extreme-value stress never overflows the 24-bit adds") {
    rng r(23);
    const auto& m8 = default_mapping(kernel_tag::q8_0);
    const auto& m3 = default_mapping(kernel_tag::q3_k);
    for (int trial = 0; trial < 300; ++trial) {
        const size_t nblocks = 1 + r.next_below(64);
        std::vector<block_q8_0> a(nblocks), b(nblocks);
        for (size_t n = 0; n < nblocks; ++n) {
            a[n] = extreme_q8_0(r);
            b[n] = extreme_q8_0(r);
        }
        float out = 0.0f;
        CHECK_NOTHROW(out = q8_0_dot(a, b, m8));
        CHECK(out == ref_dot_q8_0(a, b));
    }
    for (int trial = 0; trial < 300; ++trial) {
        const size_t nblocks = 1 + r.next_below(8);
        std::vector<repacked_q3_k> w(nblocks);
        std::vector<block_q8_k> a(nblocks);
        for (size_t n = 0; n < nblocks; ++n) {
            superblock_q3_k sb;
            sb.d = f32_to_fp16(1.0f);
            // worst case: scale codes at the +/-32 ends, quants at -4,
            // activations saturated
            for (auto& s : sb.scales_raw) s = r.next_below(2) ? uint8_t(0) : uint8_t(63);
            for (auto& q : sb.quants_raw) q = r.next_below(2) ? uint8_t(0) : uint8_t(7);
            w[n] = repack_q3_k(sb);
            a[n].d = 1.0f;
            for (auto& q : a[n].q) q = r.next_below(2) ? int8_t(127) : int8_t(-127);
        }
        float out = 0.0f;
        CHECK_NOTHROW(out = q3_k_dot(w, a, m3));
        CHECK(out == ref_dot_q3_k_repacked(w, a));
    }
}

TEST_CASE("matvec matches per-row references and ignores lane count") {
    rng r(24);

    const uint32_t m = 64, k = 2048;
    auto wf = make_f32_tensor(m, k, gaussian_vec(r, size_t(m) * k));
    auto xf = make_f32_tensor(1, k, gaussian_vec(r, k));

    SUBCASE("q8_0") {
        const auto w = quantize_tensor(wf, dtype::q8_0);
        const auto x = quantize_tensor(xf, dtype::q8_0);
        const auto& map = default_mapping(kernel_tag::q8_0);
        const auto y1 = matvec(w, x, map, 1);
        const auto y8 = matvec(w, x, map, 8);
        REQUIRE(y1.size() == m);
        CHECK(std::memcmp(y1.data(), y8.data(), m * 4) == 0);
        for (uint32_t row = 0; row < m; ++row) {
            const float ref = ref_dot_q8_0(w.row<block_q8_0>(row), x.row<block_q8_0>(0));
            CHECK(std::memcmp(&y1[row], &ref, 4) == 0);
        }
    }
    SUBCASE("q3_k") {
        const auto w = quantize_tensor(wf, dtype::q3_k_repacked);
        const auto x = quantize_tensor(xf, dtype::q8_k);
        const auto& map = default_mapping(kernel_tag::q3_k);
        const auto y1 = matvec(w, x, map, 1);
        const auto y8 = matvec(w, x, map, 8);
        CHECK(std::memcmp(y1.data(), y8.data(), m * 4) == 0);
        for (uint32_t row = 0; row < m; ++row) {
            const float ref = ref_dot_q3_k_repacked(w.row<repacked_q3_k>(row), x.row<block_q8_k>(0));
            CHECK(std::memcmp(&y1[row], &ref, 4) == 0);
        }
    }
    SUBCASE("1xk trivial row is the scalar dot") {
        auto wf1 = make_f32_tensor(1, 256, gaussian_vec(r, 256));
        const auto w = quantize_tensor(wf1, dtype::q8_0);
        auto xf1 = make_f32_tensor(1, 256, gaussian_vec(r, 256));
        const auto x = quantize_tensor(xf1, dtype::q8_0);
        const auto y = matvec(w, x, default_mapping(kernel_tag::q8_0), 3);
        REQUIRE(y.size() == 1);
        CHECK(y[0] == ref_dot_q8_0(w.row<block_q8_0>(0), x.row<block_q8_0>(0)));
    }
    SUBCASE("shape and config errors") {
        const auto w = quantize_tensor(wf, dtype::q8_0);
        const auto x = quantize_tensor(xf, dtype::q8_0);
        CHECK_THROWS_AS(matvec(w, x, default_mapping(kernel_tag::q8_0), 0), shape_error);
        CHECK_THROWS_AS(matvec(w, x, default_mapping(kernel_tag::q8_0), 9), shape_error);
        CHECK_THROWS_AS(matvec(w, x, default_mapping(kernel_tag::q3_k), 1), config_error);
        auto xshort = make_f32_tensor(1, 1024, gaussian_vec(r, 1024));
        CHECK_THROWS_AS(matvec(w, quantize_tensor(xshort, dtype::q8_0),
                               default_mapping(kernel_tag::q8_0), 1),
                        shape_error);
        const auto xq8k = quantize_tensor(xf, dtype::q8_k);
        CHECK_THROWS_AS(matvec(w, xq8k, default_mapping(kernel_tag::q8_0), 1), shape_error);
    }
}

TEST_CASE("matvec surfaces per-row failures instead of terminating") {
    // corrupt repacked words (nonzero pad bits) coming from an untrusted file
    quantized_tensor w;
    w.type = dtype::q3_k_repacked;
    w.rows = 4;
    w.cols = 256;
    std::vector<repacked_q3_k> blocks(4);
    blocks[2].words[5] = 1ull << 20; // pad bit set
    w.data = std::move(blocks);

    quantized_tensor x;
    x.type = dtype::q8_k;
    x.rows = 1;
    x.cols = 256;
    x.data = std::vector<block_q8_k>(1);

    CHECK_THROWS_AS(matvec(w, x, default_mapping(kernel_tag::q3_k), 1), invalid_operand);
}

TEST_CASE("matmul lays out columns row-major") {
    rng r(25);
    const uint32_t m = 8, k = 256;
    auto wf = make_f32_tensor(m, k, gaussian_vec(r, size_t(m) * k));
    const auto w = quantize_tensor(wf, dtype::q8_0);
    std::vector<quantized_tensor> cols;
    for (int c = 0; c < 3; ++c) {
        cols.push_back(quantize_tensor(make_f32_tensor(1, k, gaussian_vec(r, k)), dtype::q8_0));
    }
    const auto& map = default_mapping(kernel_tag::q8_0);
    const auto out = matmul(w, cols, map);
    REQUIRE(out.size() == size_t(m) * 3);
    for (size_t c = 0; c < 3; ++c) {
        const auto col = matvec(w, cols[c], map);
        for (size_t row = 0; row < m; ++row) {
            CHECK(out[row * 3 + c] == col[row]);
        }
    }
}

TEST_CASE("a custom descriptor with a different tree shape still matches the reference") {
    // same dataflow contract, one chain-shaped group per firing
    const std::string text =
        "pe=0 op=SML8 in=stream:A,stream:B\n"
        "pe=1 op=SML8 in=stream:A,stream:B\n"
        "pe=2 op=SML8 in=stream:A,stream:B\n"
        "pe=3 op=SML8 in=stream:A,stream:B\n"
        "pe=4 op=AD24 in=0,1\n"
        "pe=5 op=AD24 in=4,2\n"
        "pe=6 op=AD24 in=5,3\n"
        "pe=7 op=MOVE in=6\n"
        "pe=8 op=AD24 in=6,7\n"
        "pe=9 op=FMUL32 in=stream:A,stream:B\n"
        "pe=10 op=FMUL32 in=8,9\n";
    const auto m = parse_mapping(text, kernel_tag::q8_0);
    CHECK(m.pe_count() == 11);
    CHECK(m.blocks_per_firing() == 1);

    rng r(26);
    for (int trial = 0; trial < 200; ++trial) {
        const size_t nblocks = 1 + r.next_below(16);
        std::vector<block_q8_0> a(nblocks), b(nblocks);
        for (size_t n = 0; n < nblocks; ++n) {
            a[n] = random_q8_0(r);
            b[n] = random_q8_0(r);
        }
        const float pipe = q8_0_dot(a, b, m);
        const float ref = ref_dot_q8_0(a, b);
        CHECK(std::memcmp(&pipe, &ref, 4) == 0);
    }
}
