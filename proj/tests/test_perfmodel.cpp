#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "qcgla/perfmodel.hpp"
#include "qcgla/rng.hpp"
#include "qcgla/errors.hpp"

using namespace qcgla;

TEST_CASE("pdp scalar arithmetic") {
    CHECK(pdp(16.2, 250.0) == 4050.0);  // GPU, q3_k end-to-end
    CHECK(pdp(59.3, 200.0) == 11860.0); // Xeon, q3_k end-to-end
    CHECK(pdp(0.0, 123.0) == 0.0);
    CHECK_THROWS_AS(pdp(-1.0, 10.0), invalid_input);
    CHECK_THROWS_AS(pdp(1.0, -10.0), invalid_input);
}

TEST_CASE("pdp is linear in time and matches the scalar form under uniform power") {
    rng r(31);
    for (int i = 0; i < 1000; ++i) {
        const double t = r.next_unit() * 100.0;
        const double p = r.next_unit() * 300.0;
        // exact for power-of-two factors, 1-ulp-tight otherwise
        const double pow2 = std::ldexp(1.0, int(r.next_below(8)) - 3);
        CHECK(pdp(pow2 * t, p) == pow2 * pdp(t, p));
        const double a = 1.0 + r.next_unit() * 7.0;
        CHECK(pdp(a * t, p) == doctest::Approx(a * pdp(t, p)).epsilon(1e-15));
    }

    phase_breakdown b;
    b.cpu_s = 1.5;
    b.conf_s = 0.25;
    b.regv_s = 0.125;
    b.range_s = 0.0625;
    b.load_s = 2.0;
    b.exec_s = 4.0;
    b.drain_s = 0.5;
    phase_power uniform;
    uniform.cpu_w = uniform.conf_w = uniform.regv_w = uniform.range_w = uniform.load_w =
        uniform.exec_w = uniform.drain_w = 37.5;
    CHECK(pdp(b, uniform) == pdp(b.total(), 37.5));

    const auto split = make_phase_power(1.5, 52.8);
    CHECK(pdp(b, split) == 1.5 * b.cpu_s + (52.8 + 1.5) * (b.total() - b.cpu_s));
}

TEST_CASE("e2e_compose basics") {
    CHECK(e2e_compose({809.7, 0.0, 0.0, 0.0}) == 809.7);

    // break-even: accelerator exactly as fast as the host share it replaces
    const double h = 100.0, f = 0.2;
    CHECK(e2e_compose({h, f, h * f, 0.0}) == doctest::Approx(h).epsilon(1e-12));

    CHECK_THROWS_AS(e2e_compose({1.0, 1.5, 0.0, 0.0}), invalid_input);
    CHECK_THROWS_AS(e2e_compose({-1.0, 0.5, 0.0, 0.0}), invalid_input);

    // monotone: faster accelerator never slower end to end
    double prev = std::numeric_limits<double>::infinity();
    for (double accel = 50.0; accel >= 0.0; accel -= 5.0) {
        const double v = e2e_compose({200.0, 0.3, accel, 1.0});
        CHECK(v <= prev);
        prev = v;
    }
}

TEST_CASE("freq_projection scalar and breakdown forms") {
    CHECK(freq_projection(5.8, 840e6, 840e6) == 5.8);
    CHECK(std::fabs(freq_projection(1.0, 145e6, 840e6) - 145.0 / 840.0) <= 1e-15);

    rng r(32);
    for (int i = 0; i < 1000; ++i) {
        const double t = r.next_unit() * 1000.0;
        const double back = freq_projection(freq_projection(t, 145e6, 840e6), 840e6, 145e6);
        if (t > 0.0) CHECK(std::fabs(back - t) / t <= 1e-12);
    }
    CHECK_THROWS_AS(freq_projection(1.0, 0.0, 1.0), invalid_input);

    phase_breakdown b;
    b.cpu_s = 3.0;
    b.exec_s = 5.8;
    b.load_s = 1.45;
    const auto p = freq_projection(b, 145e6, 840e6);
    CHECK(p.cpu_s == 3.0); // host time does not scale with the array clock
    CHECK(std::fabs(p.exec_s - 5.8 * 145.0 / 840.0) <= 1e-12);
    CHECK(std::fabs(p.load_s - 1.45 * 145.0 / 840.0) <= 1e-12);
}

TEST_CASE("two-point calibration reproduces the projected compositions") {
    const double exact = 840.0 / 145.0;

    const auto q3 = calibrate_e2e(809.7, 790.3, 754.5, 5.8, exact);
    CHECK(std::fabs(q3.accel_fpga_s - 43.3) < 0.1);
    CHECK(std::fabs(q3.projected_asic_s - 754.5) / 754.5 <= 0.01);
    CHECK(q3.offload_fraction_net == doctest::Approx(q3.host_kernel_net_s / 809.7));
    // the offloaded kernels were already faster on the FPGA than on the host
    CHECK(q3.accel_fpga_s < q3.host_kernel_net_s);

    const auto q8 = calibrate_e2e(625.1, 654.7, 558.0, 5.8, exact);
    CHECK(std::fabs(q8.projected_asic_s - 558.0) / 558.0 <= 0.02);
    // q8_0 on the FPGA was slower than the host share it replaced
    CHECK(q8.accel_fpga_s > q8.host_kernel_net_s);

    CHECK_THROWS_AS(calibrate_e2e(1.0, 1.0, 1.0, 1.0, exact), invalid_input);
}

TEST_CASE("compare_report on the built-in q3_k scenario") {
    const auto devices = builtin_device_profiles();
    const auto rows = compare_report(devices, builtin_scenario(kernel_tag::q3_k));
    REQUIRE(rows.size() == 5);

    auto find = [&](const std::string& label) -> const report_row& {
        for (const auto& r : rows) {
            if (r.label == label) return r;
        }
        FAIL("missing row ", label);
        return rows[0];
    };

    CHECK(find("gtx-1080ti").pdp_j == 4050.0);
    CHECK(find("xeon-w5-2465x").pdp_j == 11860.0);

    // ranking is PDP ascending; the named subset must order
    // ARM < IMAX-28nm < GPU < Xeon
    std::vector<std::string> order;
    for (const auto& r : rows) order.push_back(r.label);
    const auto pos = [&](const std::string& l) {
        return std::find(order.begin(), order.end(), l) - order.begin();
    };
    CHECK(pos("arm-cortex-a72") < pos("imax3-28nm"));
    CHECK(pos("imax3-28nm") < pos("gtx-1080ti"));
    CHECK(pos("gtx-1080ti") < pos("xeon-w5-2465x"));

    const auto& imax = find("imax3-28nm");
    CHECK(imax.latency_s == doctest::Approx(754.5).epsilon(0.01));
    CHECK(imax.power_accel_w == 52.8);
    CHECK(imax.power_host_w == 1.5);
    CHECK(imax.accel_fpga_s > 0.0);
    CHECK(imax.offload_fraction_net > 0.0);
}

TEST_CASE("compare_report ordering is deterministic with ties broken by label") {
    std::vector<device_profile> devices;
    devices.push_back({"dev", 10.0, {}, 1e9, "", ""});
    pdp_scenario s;
    s.kernel = "q8_0";
    for (const char* name : {"zeta", "alpha", "mid"}) {
        scenario_entry e;
        e.label = name;
        e.device = "dev";
        e.latency_s = 5.0;
        s.entries.push_back(e);
    }
    const auto rows = compare_report(devices, s);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].label == "alpha");
    CHECK(rows[1].label == "mid");
    CHECK(rows[2].label == "zeta");
    for (const auto& r : rows) CHECK(r.pdp_j == 50.0);

    pdp_scenario bad = s;
    bad.entries[0].device = "nonexistent";
    CHECK_THROWS_AS(compare_report(devices, bad), config_error);
}

TEST_CASE("device profile and scenario text round-trips") {
    const std::string profiles_text =
        "# devices\n"
        "[device arm]\n"
        "power_w = 1.5\n"
        "freq_hz = 1.4e9\n"
        "\n"
        "[device accel]\n"
        "power_w = 50\n"
        "power_w.q8_0 = 47.7\n"
        "power_w.q3_k = 52.8\n"
        "freq_hz = 840e6\n"
        "host = arm\n"
        "note = synthesis estimate\n";
    std::istringstream in(profiles_text);
    const auto devices = parse_device_profiles(in);
    REQUIRE(devices.size() == 2);
    CHECK(devices[1].power_for("q8_0") == 47.7);
    CHECK(devices[1].power_for("q3_k") == 52.8);
    CHECK(devices[1].power_for("other") == 50.0);
    CHECK(devices[1].host == "arm");

    const std::string scenario_text =
        "name = demo\n"
        "kernel = q3_k\n"
        "[entry arm]\n"
        "device = arm\n"
        "latency_s = 809.7\n"
        "[entry accel]\n"
        "device = accel\n"
        "calibrate.host_only_s = 809.7\n"
        "calibrate.composed_fpga_s = 790.3\n"
        "calibrate.composed_asic_s = 754.5\n"
        "calibrate.mode = asic\n";
    std::istringstream sin(scenario_text);
    const auto sc = parse_scenario(sin);
    CHECK(sc.name == "demo");
    CHECK(sc.kernel == "q3_k");
    REQUIRE(sc.entries.size() == 2);
    CHECK(sc.entries[1].cal_mode == "asic");

    const auto rows = compare_report(devices, sc);
    REQUIRE(rows.size() == 2);

    std::istringstream bad("[device d]\nwattage = 3\n");
    CHECK_THROWS_AS(parse_device_profiles(bad), parse_error);
    std::istringstream bad2("kernel = q3_k\n[entry e]\nlatency_s = 1\n");
    CHECK_THROWS_AS(parse_scenario(bad2), parse_error);
}
