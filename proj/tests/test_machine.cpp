#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "qcgla/machine.hpp"
#include "qcgla/errors.hpp"

using namespace qcgla;

namespace {

machine_config fpga_config() {
    machine_config c;
    c.freq_hz = 145e6;
    return c;
}

std::vector<kernel_call> uniform_trace(kernel_tag kernel, uint32_t m, uint32_t k, size_t count,
                                       bool first_reconf = true) {
    std::vector<kernel_call> t;
    for (size_t i = 0; i < count; ++i) {
        t.push_back(make_kernel_call(kernel, m, k, first_reconf && i == 0));
    }
    return t;
}

} // namespace

TEST_CASE("kernel_call byte derivation follows the wire formats") {
    const auto q8 = make_kernel_call(kernel_tag::q8_0, 4, 256, false);
    CHECK(q8.bytes_in == 4 * 8 * 34 + 8 * 34); // weights + activations
    CHECK(q8.bytes_out == 16);

    const auto q3 = make_kernel_call(kernel_tag::q3_k, 4, 256, false);
    CHECK(q3.bytes_in == 4 * 110 + 260);
    CHECK(q3.bytes_out == 16);

    // q8_0 carries 8.5 bits/weight vs ~3.4 for q3_k: same shape loads more
    const auto big8 = make_kernel_call(kernel_tag::q8_0, 64, 2048, false);
    const auto big3 = make_kernel_call(kernel_tag::q3_k, 64, 2048, false);
    CHECK(big8.bytes_in > big3.bytes_in);
    CHECK(double(big8.bytes_in) / double(64 * 2048) > 1.05);   // > 8.4 bits
    CHECK(double(big3.bytes_in) / double(64 * 2048) < 0.45);   // < 3.6 bits

    CHECK_THROWS_AS(make_kernel_call(kernel_tag::q8_0, 1, 33, false), shape_error);
    CHECK_THROWS_AS(make_kernel_call(kernel_tag::q3_k, 1, 128, false), shape_error);
}

TEST_CASE("exec_cycles pipeline-fill model") {
    const auto cfg = fpga_config();
    const auto& m8 = default_mapping(kernel_tag::q8_0);

    CHECK(exec_cycles(make_kernel_call(kernel_tag::q8_0, 1, 256, false), m8, cfg) == 78);
    CHECK(exec_cycles(make_kernel_call(kernel_tag::q8_0, 0, 256, false), m8, cfg) == 0);

    // within one tile, doubling k adds exactly ceil(k/8) cycles per row
    const uint64_t c256 = exec_cycles(make_kernel_call(kernel_tag::q8_0, 3, 256, false), m8, cfg);
    const uint64_t c512 = exec_cycles(make_kernel_call(kernel_tag::q8_0, 3, 512, false), m8, cfg);
    CHECK(c512 - c256 == 3 * (256 / 8));

    // fill is repaid per tile once the row working set exceeds the LMM
    machine_config small = cfg;
    small.lmm_bytes_per_lane = 1024;
    const auto call = make_kernel_call(kernel_tag::q8_0, 2, 2048, false);
    const uint64_t ws = 64 * 34 + 64 * 34; // 4352 bytes per row
    const uint64_t tiles = (ws + 1023) / 1024;
    CHECK(tiles == 5);
    CHECK(exec_cycles(call, m8, small) == 2 * (tiles * 46 + 2048 / 8));
    CHECK(exec_cycles(call, m8, cfg) == 2 * (46 + 256));
}

TEST_CASE("phase_times composition and frequency linearity") {
    const auto cfg = fpga_config();
    const auto& m8 = default_mapping(kernel_tag::q8_0);

    SUBCASE("zero-size call leaves only the configuration constants") {
        const auto p = phase_times(make_kernel_call(kernel_tag::q8_0, 0, 0, true), cfg, m8);
        CHECK(p.conf_s == double(cfg.conf_cycles) / 145e6);
        CHECK(p.regv_s == double(cfg.regv_cycles) / 145e6);
        CHECK(p.range_s == double(cfg.range_cycles) / 145e6);
        CHECK(p.cpu_s == 0.0);
        CHECK(p.load_s == 0.0);
        CHECK(p.exec_s == 0.0);
        CHECK(p.drain_s == 0.0);
    }
    SUBCASE("no reconfiguration, no configuration phases") {
        const auto p = phase_times(make_kernel_call(kernel_tag::q8_0, 1, 256, false), cfg, m8);
        CHECK(p.conf_s == 0.0);
        CHECK(p.regv_s == 0.0);
        CHECK(p.range_s == 0.0);
        CHECK(p.exec_s == 78.0 / 145e6);
        CHECK(p.load_s == double(16 * 34) / 8.0 / 145e6); // 8 weight + 8 activation blocks
    }
    SUBCASE("cycle-derived phases scale by exactly the frequency ratio") {
        const auto call = make_kernel_call(kernel_tag::q8_0, 16, 2048, true);
        machine_config asic = cfg;
        asic.freq_hz = 840e6;
        const auto pf = phase_times(call, cfg, m8);
        const auto pa = phase_times(call, asic, m8);
        for (auto sel : {&phase_breakdown::conf_s, &phase_breakdown::regv_s,
                         &phase_breakdown::range_s, &phase_breakdown::load_s,
                         &phase_breakdown::exec_s, &phase_breakdown::drain_s}) {
            CHECK(std::fabs(pf.*sel / pa.*sel - 840.0 / 145.0) <= 1e-9);
        }
    }
    SUBCASE("makespan of cycle-derived phases is inversely proportional to frequency") {
        std::vector<kernel_call> trace;
        for (int i = 0; i < 12; ++i) {
            trace.push_back(make_kernel_call(i % 2 ? kernel_tag::q3_k : kernel_tag::q8_0,
                                             uint32_t(8 + i), uint32_t(256 * (1 + i % 4)), i == 0));
        }
        machine_config lo = cfg, hi = cfg;
        lo.lanes = hi.lanes = 3;
        hi.freq_hz = 840e6;
        const double r = simulate_trace(trace, lo).makespan_s / simulate_trace(trace, hi).makespan_s;
        CHECK(std::fabs(r - 840.0 / 145.0) <= 1e-9);
    }
    SUBCASE("q8_0 loads longer than q3_k at the same logical shape") {
        const auto p8 = phase_times(make_kernel_call(kernel_tag::q8_0, 64, 2048, false), cfg, m8);
        const auto p3 = phase_times(make_kernel_call(kernel_tag::q3_k, 64, 2048, false), cfg,
                                    default_mapping(kernel_tag::q3_k));
        CHECK(p8.load_s > p3.load_s);
    }
}

TEST_CASE("simulate_trace single call equals phase_times") {
    const auto cfg = fpga_config();
    const auto call = make_kernel_call(kernel_tag::q8_0, 8, 512, true);
    const auto p = phase_times(call, cfg, default_mapping(kernel_tag::q8_0));

    for (int lanes = 1; lanes <= 8; ++lanes) {
        machine_config c = cfg;
        c.lanes = lanes;
        const kernel_call tv[] = {call};
        const auto res = simulate_trace(tv, c);
        CHECK(res.makespan_s == doctest::Approx(p.total()).epsilon(1e-12));
        CHECK(res.aggregate.total() == doctest::Approx(p.total()).epsilon(1e-12));
    }
}

TEST_CASE("host-bound uniform trace: two lanes halve, more lanes saturate") {
    machine_config cfg = fpga_config();
    cfg.host_service_seconds_per_call = 1e-4;
    const auto trace = uniform_trace(kernel_tag::q8_0, 4, 256, 64);

    double mk[9] = {};
    for (int lanes : {1, 2, 3, 8}) {
        cfg.lanes = lanes;
        mk[lanes] = simulate_trace(trace, cfg).makespan_s;
    }
    CHECK(mk[1] / mk[2] >= 1.8);
    CHECK(mk[2] / mk[3] < 1.1);                   // saturation: host cores exhausted
    CHECK(std::fabs(mk[8] - mk[2]) / mk[2] < 0.10); // within 10% of two lanes
}

TEST_CASE("work conservation and determinism across lane counts") {
    machine_config cfg = fpga_config();
    cfg.host_service_seconds_per_call = 5e-5;
    std::vector<kernel_call> trace;
    for (int i = 0; i < 30; ++i) {
        trace.push_back(make_kernel_call(i % 2 ? kernel_tag::q3_k : kernel_tag::q8_0,
                                         uint32_t(4 + (i % 5) * 8), uint32_t(256 * (1 + i % 3)),
                                         i == 0));
    }

    cfg.lanes = 1;
    const auto base = simulate_trace(trace, cfg);
    for (int lanes = 2; lanes <= 8; ++lanes) {
        cfg.lanes = lanes;
        const auto res = simulate_trace(trace, cfg);
        CHECK(res.aggregate.cpu_s == base.aggregate.cpu_s);
        CHECK(res.aggregate.conf_s == base.aggregate.conf_s);
        CHECK(res.aggregate.load_s == base.aggregate.load_s);
        CHECK(res.aggregate.exec_s == base.aggregate.exec_s);
        CHECK(res.aggregate.drain_s == base.aggregate.drain_s);

        const auto again = simulate_trace(trace, cfg);
        CHECK(again.makespan_s == res.makespan_s);
    }
}

TEST_CASE("monotonicity on uniform traces: lanes and host cores never hurt") {
    // FIFO host service under static round-robin dispatch admits classic
    // scheduling anomalies of a percent or two at the phase boundaries, so
    // monotonicity is asserted with a small allowance plus strict endpoints.
    machine_config cfg = fpga_config();
    cfg.host_service_seconds_per_call = 2e-5;
    const auto trace = uniform_trace(kernel_tag::q3_k, 16, 1024, 48);

    double prev = std::numeric_limits<double>::infinity();
    double first = 0.0, last = 0.0;
    for (int lanes = 1; lanes <= 8; ++lanes) {
        cfg.lanes = lanes;
        const double mk = simulate_trace(trace, cfg).makespan_s;
        if (lanes == 1) first = mk;
        last = mk;
        CHECK(mk <= prev * 1.02);
        prev = std::min(prev, mk);
    }
    CHECK(last < first);

    cfg.lanes = 4;
    prev = std::numeric_limits<double>::infinity();
    for (int cores = 1; cores <= 6; ++cores) {
        cfg.host_cores = cores;
        const double mk = simulate_trace(trace, cfg).makespan_s;
        CHECK(mk <= prev * 1.02);
        prev = std::min(prev, mk);
    }
}

TEST_CASE("sweep_lanes reports knee on host-bound and scaling on exec-bound traces") {
    SUBCASE("host-bound: knee at three lanes") {
        machine_config cfg = fpga_config();
        cfg.host_service_seconds_per_call = 1e-4;
        const auto trace = uniform_trace(kernel_tag::q8_0, 4, 256, 64);
        const auto sweep = sweep_lanes(trace, cfg, 8);
        REQUIRE(sweep.points.size() == 8);
        CHECK(sweep.points[1].speedup_vs_1 >= 1.8);
        CHECK(sweep.knee_lanes == 3);
    }
    SUBCASE("exec-bound: at least 6x at eight lanes") {
        machine_config cfg = fpga_config();
        cfg.load_bw_bytes_per_cycle = 64.0;
        cfg.drain_bw_bytes_per_cycle = 64.0;
        const auto trace = uniform_trace(kernel_tag::q3_k, 64, 8192, 64);
        const auto sweep = sweep_lanes(trace, cfg, 8);
        CHECK(sweep.points[7].speedup_vs_1 >= 6.0);
    }
    SUBCASE("single-lane sweep has no knee") {
        const auto sweep = sweep_lanes(uniform_trace(kernel_tag::q8_0, 1, 256, 4), fpga_config(), 1);
        CHECK(sweep.points.size() == 1);
        CHECK(sweep.knee_lanes == 0);
    }
}

TEST_CASE("trace files parse, round-trip, and report line numbers on errors") {
    const std::string text =
        R"({"kernel":"q8_0","m":64,"k":2048,"reconf":true})" "\n"
        R"({"kernel":"q3_k","m":8,"k":512})" "\n";
    std::istringstream in(text);
    const auto trace = parse_trace(in);
    REQUIRE(trace.size() == 2);
    CHECK(trace[0].kernel == kernel_tag::q8_0);
    CHECK(trace[0].reconf);
    CHECK(trace[1].kernel == kernel_tag::q3_k);
    CHECK_FALSE(trace[1].reconf);

    std::ostringstream out;
    write_trace(out, trace);
    std::istringstream in2(out.str());
    const auto trace2 = parse_trace(in2);
    REQUIRE(trace2.size() == 2);
    CHECK(trace2[0].bytes_in == trace[0].bytes_in);

    std::istringstream bad("{\"kernel\":\"q8_0\",\"m\":1,\"k\":256}\nnot json\n");
    try {
        parse_trace(bad);
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(e.line_number == 2);
    }

    std::istringstream badk(R"({"kernel":"q8_0","m":1,"k":100})");
    CHECK_THROWS_AS(parse_trace(badk), parse_error);
}

TEST_CASE("machine config files parse and validate") {
    std::istringstream in(
        "# test config\n"
        "lanes = 4\n"
        "freq_hz = 840e6\n"
        "host_cores = 2\n"
        "load_bw_bytes_per_cycle = 16\n"
        "host_service_seconds_per_call = 1e-5\n");
    const auto cfg = parse_machine_config(in);
    CHECK(cfg.lanes == 4);
    CHECK(cfg.freq_hz == 840e6);
    CHECK(cfg.load_bw_bytes_per_cycle == 16.0);
    CHECK(cfg.host_service_seconds_per_call == 1e-5);
    CHECK(cfg.pes_per_lane == 64); // defaults survive

    std::istringstream unknown("frequency = 3\n");
    CHECK_THROWS_AS(parse_machine_config(unknown), parse_error);
    std::istringstream invalid("lanes = 9\n");
    CHECK_THROWS_AS(parse_machine_config(invalid), config_error);
}
