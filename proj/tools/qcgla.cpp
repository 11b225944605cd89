// qcgla: quantized dot-product kernels for a linear-array accelerator model,
// with codecs, a cycle-approximate simulator, and energy analytics.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "qcgla/errors.hpp"
#include "qcgla/kernels.hpp"
#include "qcgla/machine.hpp"
#include "qcgla/perfmodel.hpp"
#include "qcgla/quant.hpp"
#include "qcgla/report.hpp"
#include "qcgla/rng.hpp"
#include "qcgla/tensor.hpp"

using namespace qcgla;

namespace {

struct global_opts {
    uint64_t seed = 42;
    std::optional<double> freq_hz;
    std::optional<int> lanes;
    std::optional<int> host_cores;
    std::string config_path;
    std::string out_path;
    std::string format = "csv";
};

machine_config resolve_config(const global_opts& g) {
    machine_config cfg;
    std::string path = g.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("QCGLA_CONFIG")) path = env;
    }
    if (!path.empty()) cfg = load_machine_config_file(path);
    if (g.freq_hz) cfg.freq_hz = *g.freq_hz;
    if (g.lanes) cfg.lanes = *g.lanes;
    if (g.host_cores) cfg.host_cores = *g.host_cores;
    cfg.validate();
    return cfg;
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw io_error("cannot open output file: " + path);
    return file;
}

std::vector<float> gaussian_values(rng& r, size_t n, float scale = 1.0f) {
    std::vector<float> v(n);
    for (auto& x : v) x = float(r.next_gaussian()) * scale;
    return v;
}

bool is_qcgt_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    char magic[4] = {};
    f.read(magic, 4);
    return f && std::memcmp(magic, "QCGT", 4) == 0;
}

// --- quantize / dequantize -----------------------------------------------------

int cmd_quantize(const global_opts& g, const std::string& in_path, const std::string& dtype_name_s,
                 uint32_t rows, uint32_t cols) {
    quantized_tensor f32;
    if (is_qcgt_file(in_path)) {
        f32 = read_qcgt_file(in_path);
        if (f32.type != dtype::f32) throw invalid_input("quantize: QCGT input must be f32");
    } else {
        if (rows == 0 || cols == 0) {
            throw invalid_input("quantize: raw input needs --rows and --cols");
        }
        std::ifstream f(in_path, std::ios::binary);
        if (!f) throw io_error("cannot open: " + in_path);
        std::vector<float> values(size_t(rows) * cols);
        f.read(reinterpret_cast<char*>(values.data()), std::streamsize(values.size() * 4));
        if (size_t(f.gcount()) != values.size() * 4) {
            throw invalid_input("quantize: raw input shorter than rows*cols floats");
        }
        f32 = make_f32_tensor(rows, cols, std::move(values));
    }

    const dtype target = dtype_from_name(dtype_name_s);
    const auto q = quantize_tensor(f32, target);
    if (g.out_path.empty()) throw invalid_input("quantize: --out is required");
    write_qcgt_file(g.out_path, q);

    const uint64_t in_bytes = uint64_t(f32.rows) * f32.cols * 4;
    const uint64_t out_bytes = q.total_blocks() * dtype_block_bytes(q.type);
    std::cout << "blocks=" << q.total_blocks() << " dtype=" << dtype_name(q.type)
              << " in_bytes=" << in_bytes << " out_bytes=" << out_bytes
              << " ratio=" << fmt_num(double(in_bytes) / double(out_bytes)) << "\n";
    return 0;
}

int cmd_dequantize(const global_opts& g, const std::string& in_path, bool raw) {
    const auto q = read_qcgt_file(in_path);
    const auto f32 = dequantize_tensor(q);
    if (g.out_path.empty()) throw invalid_input("dequantize: --out is required");
    if (raw) {
        std::ofstream f(g.out_path, std::ios::binary);
        if (!f) throw io_error("cannot open output file: " + g.out_path);
        const auto& v = std::get<std::vector<float>>(f32.data);
        f.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 4));
    } else {
        write_qcgt_file(g.out_path, f32);
    }
    std::cout << "rows=" << f32.rows << " cols=" << f32.cols << "\n";
    return 0;
}

// --- check -----------------------------------------------------------------------

struct suite_result {
    std::string name;
    size_t cases = 0;
    size_t failures = 0;
    std::string detail;
    std::string counterexample;
};

void print_suites(const std::vector<suite_result>& suites) {
    bool all_ok = true;
    for (const auto& s : suites) {
        const bool ok = s.failures == 0;
        all_ok &= ok;
        std::cout << (ok ? "[PASS] " : "[FAIL] ") << s.name << ": " << s.cases - s.failures << "/"
                  << s.cases << " ok";
        if (!s.detail.empty()) std::cout << " (" << s.detail << ")";
        std::cout << "\n";
        if (!ok && !s.counterexample.empty()) {
            std::cout << "  first counterexample: " << s.counterexample << "\n";
        }
    }
    std::cout << (all_ok ? "CHECK PASSED" : "CHECK FAILED") << "\n";
}

int cmd_check(const global_opts& g, size_t trials, bool inject_fault) {
    if (trials == 0) {
        std::cerr << "warning: trials=0, all suites vacuous\n";
        print_suites({});
        return 0;
    }
    std::vector<suite_result> suites;
    rng r(g.seed);

    {
        suite_result s{"q8_0 pipeline vs reference", trials, 0, "", ""};
        const auto& m = default_mapping(kernel_tag::q8_0);
        for (size_t t = 0; t < trials; ++t) {
            const size_t nblocks = 1 + r.next_below(64);
            std::vector<block_q8_0> a(nblocks), b(nblocks);
            for (size_t n = 0; n < nblocks; ++n) {
                auto xa = gaussian_values(r, 32, 2.0f);
                auto xb = gaussian_values(r, 32, 2.0f);
                a[n] = quantize_q8_0(std::span<const float, 32>(xa.data(), 32));
                b[n] = quantize_q8_0(std::span<const float, 32>(xb.data(), 32));
            }
            float pipe = q8_0_dot(a, b, m);
            const float ref = ref_dot_q8_0(a, b);
            if (inject_fault && t == trials / 2) pipe += 1.0f;
            if (std::memcmp(&pipe, &ref, 4) != 0) {
                if (s.failures == 0) {
                    std::ostringstream os;
                    os << "seed=" << g.seed << " trial=" << t << " nblocks=" << nblocks
                       << " pipeline=" << fmt_num(double(pipe))
                       << " reference=" << fmt_num(double(ref));
                    s.counterexample = os.str();
                }
                ++s.failures;
            }
        }
        suites.push_back(std::move(s));
    }
    {
        suite_result s{"q3_k pipeline vs reference", trials, 0, "", ""};
        const auto& m = default_mapping(kernel_tag::q3_k);
        for (size_t t = 0; t < trials; ++t) {
            const size_t nblocks = 1 + r.next_below(16);
            std::vector<repacked_q3_k> w(nblocks);
            std::vector<block_q8_k> a(nblocks);
            for (size_t n = 0; n < nblocks; ++n) {
                superblock_q3_k sb;
                sb.d = f32_to_fp16(r.next_float(0.001f, 2.0f));
                for (auto& sc : sb.scales_raw) sc = uint8_t(r.next_below(64));
                for (auto& q : sb.quants_raw) q = uint8_t(r.next_below(8));
                w[n] = repack_q3_k(sb);
                auto xa = gaussian_values(r, 256, 2.0f);
                a[n] = quantize_q8_k(std::span<const float, 256>(xa.data(), 256));
            }
            const float pipe = q3_k_dot(w, a, m);
            const float ref = ref_dot_q3_k_repacked(w, a);
            if (std::memcmp(&pipe, &ref, 4) != 0) {
                if (s.failures == 0) {
                    s.counterexample =
                        "seed=" + std::to_string(g.seed) + " trial=" + std::to_string(t);
                }
                ++s.failures;
            }
        }
        suites.push_back(std::move(s));
    }
    {
        suite_result s{"repack scale bound (exhaustive)", 64, 0, "", ""};
        for (int raw = 0; raw < 64; ++raw) {
            const int s5 = repack_scale_code(uint8_t(raw));
            if (std::abs(2 * s5 - (raw - 32)) > 1 || s5 < -16 || s5 > 15) {
                if (s.failures == 0) s.counterexample = "scale code " + std::to_string(raw);
                ++s.failures;
            }
        }
        suites.push_back(std::move(s));
    }
    {
        suite_result s{"repack preserves quant codes", trials, 0, "", ""};
        for (size_t t = 0; t < trials; ++t) {
            superblock_q3_k sb;
            sb.d = f32_to_fp16(1.0f);
            for (auto& sc : sb.scales_raw) sc = uint8_t(r.next_below(64));
            for (auto& q : sb.quants_raw) q = uint8_t(r.next_below(8));
            const auto rp = repack_q3_k(sb);
            for (int e = 0; e < 256; ++e) {
                const uint32_t way = uint32_t(rp.words[size_t(e / 8)] >> (32 * ((e / 4) % 2)));
                if (int((way >> (3 * (e % 4))) & 0x7u) != int(sb.quants_raw[size_t(e)])) {
                    if (s.failures == 0) {
                        s.counterexample =
                            "trial " + std::to_string(t) + " element " + std::to_string(e);
                    }
                    ++s.failures;
                    break;
                }
            }
        }
        suites.push_back(std::move(s));
    }
    {
        suite_result s{"overflow stress (extreme operands)", trials, 0, "", ""};
        const auto& m8 = default_mapping(kernel_tag::q8_0);
        const auto& m3 = default_mapping(kernel_tag::q3_k);
        for (size_t t = 0; t < trials; ++t) {
            try {
                if (t % 2 == 0) {
                    const size_t nblocks = 1 + r.next_below(32);
                    std::vector<block_q8_0> a(nblocks), b(nblocks);
                    for (size_t n = 0; n < nblocks; ++n) {
                        a[n].d = b[n].d = f32_to_fp16(1.0f);
                        for (auto& q : a[n].q) q = r.next_below(2) ? int8_t(127) : int8_t(-127);
                        for (auto& q : b[n].q) q = r.next_below(2) ? int8_t(127) : int8_t(-127);
                    }
                    (void)q8_0_dot(a, b, m8);
                } else {
                    const size_t nblocks = 1 + r.next_below(8);
                    std::vector<repacked_q3_k> w(nblocks);
                    std::vector<block_q8_k> a(nblocks);
                    for (size_t n = 0; n < nblocks; ++n) {
                        superblock_q3_k sb;
                        sb.d = f32_to_fp16(1.0f);
                        for (auto& sc : sb.scales_raw) sc = r.next_below(2) ? uint8_t(0) : uint8_t(63);
                        for (auto& q : sb.quants_raw) q = r.next_below(2) ? uint8_t(0) : uint8_t(7);
                        w[n] = repack_q3_k(sb);
                        a[n].d = 1.0f;
                        for (auto& q : a[n].q) q = r.next_below(2) ? int8_t(127) : int8_t(-127);
                    }
                    (void)q3_k_dot(w, a, m3);
                }
            } catch (const overflow24_error& e) {
                if (s.failures == 0) s.counterexample = e.what();
                ++s.failures;
            }
        }
        suites.push_back(std::move(s));
    }
    {
        // repacked vs exact dot at k=4096 (16 superblocks per trial)
        const size_t acc_trials = std::max<size_t>(trials, 1000);
        suite_result s{"repacked accuracy (median rel err)", acc_trials, 0, "", ""};
        std::vector<double> rel;
        for (size_t t = 0; t < acc_trials; ++t) {
            const size_t nblocks = 16;
            std::vector<superblock_q3_k> ws(nblocks);
            std::vector<repacked_q3_k> rs(nblocks);
            std::vector<block_q8_k> as(nblocks);
            for (size_t n = 0; n < nblocks; ++n) {
                auto xw = gaussian_values(r, 256);
                auto xa = gaussian_values(r, 256);
                ws[n] = quantize_q3_k(std::span<const float, 256>(xw.data(), 256));
                rs[n] = repack_q3_k(ws[n]);
                as[n] = quantize_q8_k(std::span<const float, 256>(xa.data(), 256));
            }
            const float exact = ref_dot_q3_k(ws, as);
            const float repk = ref_dot_q3_k_repacked(rs, as);
            rel.push_back(exact != 0.0f
                              ? std::fabs(double(repk) - double(exact)) / std::fabs(double(exact))
                              : 0.0);
        }
        std::sort(rel.begin(), rel.end());
        const double median = rel[rel.size() / 2];
        s.detail = "median=" + fmt_num(median) + " k=4096";
        if (median > 0.02) {
            s.failures = 1;
            s.counterexample = "median " + fmt_num(median) + " exceeds 0.02";
        }
        suites.push_back(std::move(s));
    }

    print_suites(suites);
    for (const auto& s : suites) {
        if (s.failures) return 1;
    }
    return 0;
}

// --- bench -----------------------------------------------------------------------

int cmd_bench(const global_opts& g, uint32_t m, uint32_t k, const std::string& kernel_s,
              int repeat) {
    rng r(g.seed);
    const kernel_tag kernel = kernel_from_name(kernel_s);
    auto wf = make_f32_tensor(m, k, gaussian_values(r, size_t(m) * k));
    auto xf = make_f32_tensor(1, k, gaussian_values(r, k));

    const dtype wt = kernel == kernel_tag::q8_0 ? dtype::q8_0 : dtype::q3_k_repacked;
    const dtype at = kernel == kernel_tag::q8_0 ? dtype::q8_0 : dtype::q8_k;
    const auto w = quantize_tensor(wf, wt);
    const auto x = quantize_tensor(xf, at);
    const auto& mapping = default_mapping(kernel);

    int max_threads = 1;
#ifdef _OPENMP
    max_threads = omp_get_max_threads();
#endif

    using clock = std::chrono::steady_clock;

    auto reference_matvec = [&](std::vector<float>& out) {
        if (kernel == kernel_tag::q8_0) {
            const auto xrow = x.row<block_q8_0>(0);
#pragma omp parallel for schedule(static)
            for (int64_t row = 0; row < int64_t(m); ++row) {
                out[size_t(row)] = ref_dot_q8_0(w.row<block_q8_0>(size_t(row)), xrow);
            }
        } else {
            const auto xrow = x.row<block_q8_k>(0);
#pragma omp parallel for schedule(static)
            for (int64_t row = 0; row < int64_t(m); ++row) {
                out[size_t(row)] = ref_dot_q3_k_repacked(w.row<repacked_q3_k>(size_t(row)), xrow);
            }
        }
    };

    struct bench_row {
        const char* path;
        int threads;
        double seconds;
        size_t mismatches;
    };
    std::vector<bench_row> bench_rows;
    std::vector<float> ref(m), out(m);

    auto timed = [&](const char* path, int threads, auto&& fn) {
#ifdef _OPENMP
        omp_set_num_threads(threads);
#endif
        fn(out); // warm-up and result for the equality check
        const auto t0 = clock::now();
        for (int rep = 0; rep < repeat; ++rep) fn(out);
        const double secs =
            std::chrono::duration<double>(clock::now() - t0).count() / repeat;
        size_t mism = 0;
        for (uint32_t row = 0; row < m; ++row) {
            if (std::memcmp(&out[row], &ref[row], 4) != 0) ++mism;
        }
        bench_rows.push_back({path, threads, secs, mism});
    };

#ifdef _OPENMP
    omp_set_num_threads(1);
#endif
    ref.resize(m);
    reference_matvec(ref);

    timed("reference", 1, reference_matvec);
    timed("pipeline", 1, [&](std::vector<float>& o) { o = matvec(w, x, mapping, 1); });
    if (max_threads > 1) {
        timed("reference", max_threads, reference_matvec);
        timed("pipeline", max_threads, [&](std::vector<float>& o) { o = matvec(w, x, mapping, 1); });
    }
#ifdef _OPENMP
    omp_set_num_threads(max_threads);
#endif

    const double gelems = double(m) * k / 1e9;
    const double serial_ref_s = bench_rows[0].seconds;
    std::vector<std::vector<std::string>> cells;
    size_t total_mismatches = 0;
    for (const auto& br : bench_rows) {
        total_mismatches += br.mismatches;
        cells.push_back({kernel_s, std::to_string(m), std::to_string(k), br.path,
                         std::to_string(br.threads), std::to_string(repeat), fmt_num(br.seconds),
                         fmt_num(gelems / br.seconds), fmt_num(serial_ref_s / br.seconds),
                         std::to_string(br.mismatches)});
    }
    std::ofstream file;
    auto& os = open_out(file, g.out_path);
    write_csv(os,
              {"kernel", "m", "k", "path", "threads", "repeat", "seconds", "gelem_per_s",
               "speedup_vs_serial_reference", "bit_mismatches"},
              cells);
    if (&os != &std::cout) {
        for (const auto& br : bench_rows) {
            std::cout << br.path << "/" << br.threads << "t: " << fmt_num(br.seconds)
                      << " s, bit_mismatches=" << br.mismatches << "\n";
        }
    }
    return total_mismatches == 0 ? 0 : 1;
}

// --- simulate ----------------------------------------------------------------------

std::vector<std::string> breakdown_cells(const phase_breakdown& p) {
    return {fmt_num(p.cpu_s),  fmt_num(p.conf_s), fmt_num(p.regv_s), fmt_num(p.range_s),
            fmt_num(p.load_s), fmt_num(p.exec_s), fmt_num(p.drain_s), fmt_num(p.total())};
}

int cmd_simulate(const global_opts& g, const std::string& trace_path) {
    const auto trace = load_trace_file(trace_path);
    const auto cfg = resolve_config(g);
    const auto res = simulate_trace(trace, cfg);

    const std::vector<std::string> header = {"index",   "lane",    "kernel",  "m",
                                             "k",       "reconf",  "cpu_s",   "conf_s",
                                             "regv_s",  "range_s", "load_s",  "exec_s",
                                             "drain_s", "total_s", "start_s", "end_s"};
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : res.calls) {
        std::vector<std::string> row = {std::to_string(c.index),     std::to_string(c.lane),
                                        kernel_name(c.call.kernel),  std::to_string(c.call.m),
                                        std::to_string(c.call.k),    c.call.reconf ? "1" : "0"};
        for (auto& cell : breakdown_cells(c.phases)) row.push_back(std::move(cell));
        row.push_back(fmt_num(c.start_s));
        row.push_back(fmt_num(c.end_s));
        rows.push_back(std::move(row));
    }

    if (g.format == "json") {
        nlohmann::json j;
        j["makespan_s"] = res.makespan_s;
        j["calls"] = nlohmann::json::array();
        for (const auto& c : res.calls) {
            j["calls"].push_back({{"index", c.index},
                                  {"lane", c.lane},
                                  {"kernel", kernel_name(c.call.kernel)},
                                  {"m", c.call.m},
                                  {"k", c.call.k},
                                  {"reconf", c.call.reconf},
                                  {"cpu_s", c.phases.cpu_s},
                                  {"conf_s", c.phases.conf_s},
                                  {"regv_s", c.phases.regv_s},
                                  {"range_s", c.phases.range_s},
                                  {"load_s", c.phases.load_s},
                                  {"exec_s", c.phases.exec_s},
                                  {"drain_s", c.phases.drain_s},
                                  {"start_s", c.start_s},
                                  {"end_s", c.end_s}});
        }
        std::ofstream file;
        open_out(file, g.out_path) << j.dump(2) << "\n";
    } else {
        std::ofstream file;
        write_csv(open_out(file, g.out_path), header, rows);
    }

    // stacked per-kernel share summary; kept off stdout only when the CSV
    // itself goes there
    std::ostream& sum = (g.out_path.empty() || g.out_path == "-") ? std::cerr : std::cout;
    for (kernel_tag kt : {kernel_tag::q8_0, kernel_tag::q3_k}) {
        phase_breakdown agg;
        size_t count = 0;
        for (const auto& c : res.calls) {
            if (c.call.kernel == kt) {
                agg += c.phases;
                ++count;
            }
        }
        if (count == 0) continue;
        const double total = agg.total();
        auto pct = [&](double v) { return total > 0.0 ? 100.0 * v / total : 0.0; };
        sum << kernel_name(kt) << " breakdown (" << count << " calls): "
            << "CPU " << fmt_num(pct(agg.cpu_s)) << "% | CONF " << fmt_num(pct(agg.conf_s))
            << "% | REGV " << fmt_num(pct(agg.regv_s)) << "% | RANGE "
            << fmt_num(pct(agg.range_s)) << "% | LOAD " << fmt_num(pct(agg.load_s))
            << "% | EXEC " << fmt_num(pct(agg.exec_s)) << "% | DRAIN "
            << fmt_num(pct(agg.drain_s)) << "%\n";
    }
    sum << "makespan_s=" << fmt_num(res.makespan_s) << " lanes=" << cfg.lanes << "\n";
    return 0;
}

int cmd_sweep_lanes(const global_opts& g, const std::string& trace_path, int max_lanes,
                    const std::string& svg_path) {
    const auto trace = load_trace_file(trace_path);
    const auto cfg = resolve_config(g);
    const auto sweep = sweep_lanes(trace, cfg, max_lanes);

    std::vector<std::vector<std::string>> rows;
    for (const auto& p : sweep.points) {
        rows.push_back({std::to_string(p.lanes), fmt_num(p.makespan_s), fmt_num(p.speedup_vs_1),
                        fmt_num(p.marginal_speedup), (p.lanes == sweep.knee_lanes) ? "1" : "0"});
    }
    std::ofstream file;
    write_csv(open_out(file, g.out_path),
              {"lanes", "makespan_s", "speedup_vs_1", "marginal_speedup", "knee"}, rows);

    if (!svg_path.empty()) {
        chart_series s;
        s.name = "makespan";
        for (const auto& p : sweep.points) {
            s.x.push_back(double(p.lanes));
            s.y.push_back(p.makespan_s);
        }
        std::ofstream svg(svg_path);
        if (!svg) throw io_error("cannot open svg output: " + svg_path);
        write_svg_chart(svg, "makespan vs lanes", "lanes", "seconds", {s});
    }
    if (sweep.knee_lanes > 0) {
        std::cerr << "saturation knee at " << sweep.knee_lanes << " lanes\n";
    } else {
        std::cerr << "no saturation knee up to " << max_lanes << " lanes\n";
    }
    return 0;
}

// --- compare-pdp ----------------------------------------------------------------------

int cmd_compare_pdp(const global_opts& g, const std::string& scenario_path,
                    const std::string& profiles_path, const std::string& builtin) {
    std::vector<device_profile> devices = profiles_path.empty()
                                              ? builtin_device_profiles()
                                              : load_device_profiles_file(profiles_path);
    pdp_scenario scenario;
    if (!scenario_path.empty()) {
        scenario = load_scenario_file(scenario_path);
    } else if (!builtin.empty()) {
        scenario = builtin_scenario(kernel_from_name(builtin));
    } else {
        throw invalid_input("compare-pdp: give --scenario <file> or --builtin <kernel>");
    }

    const auto rows = compare_report(devices, scenario);

    const std::vector<std::string> header = {
        "rank",   "label",        "device",            "kernel",        "latency_s",
        "host_s", "accel_s",      "power_host_w",      "power_accel_w", "energy_j",
        "pdp_j",  "accel_fpga_s", "host_kernel_net_s", "offload_fraction_net"};
    std::vector<std::vector<std::string>> cells;
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        cells.push_back({std::to_string(i + 1), r.label, r.device, r.kernel, fmt_num(r.latency_s),
                         fmt_num(r.host_s), fmt_num(r.accel_s), fmt_num(r.power_host_w),
                         fmt_num(r.power_accel_w), fmt_num(r.energy_j), fmt_num(r.pdp_j),
                         fmt_num(r.accel_fpga_s), fmt_num(r.host_kernel_net_s),
                         fmt_num(r.offload_fraction_net)});
    }

    if (g.format == "json") {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : rows) {
            j.push_back({{"label", r.label},
                         {"device", r.device},
                         {"kernel", r.kernel},
                         {"latency_s", r.latency_s},
                         {"host_s", r.host_s},
                         {"accel_s", r.accel_s},
                         {"power_host_w", r.power_host_w},
                         {"power_accel_w", r.power_accel_w},
                         {"energy_j", r.energy_j},
                         {"pdp_j", r.pdp_j},
                         {"accel_fpga_s", r.accel_fpga_s},
                         {"host_kernel_net_s", r.host_kernel_net_s},
                         {"offload_fraction_net", r.offload_fraction_net}});
        }
        std::ofstream file;
        open_out(file, g.out_path) << j.dump(2) << "\n";
    } else {
        std::ofstream file;
        write_csv(open_out(file, g.out_path), header, cells);
    }

    // pretty ranking; kept off stdout only when the CSV itself goes there
    FILE* table = (g.out_path.empty() || g.out_path == "-") ? stderr : stdout;
    for (size_t i = 0; i < rows.size(); ++i) {
        std::fprintf(table, "%2zu. %-16s latency %10.3f s   PDP %12.2f J\n", i + 1,
                     rows[i].label.c_str(), rows[i].latency_s, rows[i].pdp_j);
    }
    return 0;
}

// --- gen-trace ----------------------------------------------------------------------

int cmd_gen_trace(const global_opts& g, const std::string& preset, const std::string& kernel_s,
                  uint32_t m, uint32_t k, size_t count) {
    const kernel_tag kernel = kernel_from_name(kernel_s);
    const uint32_t bl = uint32_t(kernel == kernel_tag::q8_0 ? kQ8_0BlockLen : kQ3KBlockLen);
    std::vector<kernel_call> trace;
    rng r(g.seed);

    if (preset == "uniform") {
        if (k % bl != 0) throw invalid_input("gen-trace: k must be a multiple of the block length");
        for (size_t i = 0; i < count; ++i) {
            trace.push_back(make_kernel_call(kernel, m, k, false));
        }
    } else if (preset == "unet-like") {
        // denoiser-shaped dot-product calls: spatial sizes from a 64x64
        // latent at channel widths 320/640/1280, k snapped to the kernel's
        // block multiple
        struct shape {
            uint32_t m, k, weight;
        };
        static const shape shapes[] = {
            {4096, 320, 4},  {4096, 960, 3},  {4096, 2880, 2}, {1024, 640, 4},
            {1024, 1920, 3}, {256, 1280, 4},  {256, 3840, 2},  {256, 11520, 1},
            {64, 1280, 3},   {64, 5120, 2},   {64, 10240, 1},  {1024, 5760, 1},
        };
        uint32_t total_weight = 0;
        for (const auto& s : shapes) total_weight += s.weight;
        for (size_t i = 0; i < count; ++i) {
            uint32_t pick = uint32_t(r.next_below(total_weight));
            const shape* sel = &shapes[0];
            for (const auto& s : shapes) {
                if (pick < s.weight) {
                    sel = &s;
                    break;
                }
                pick -= s.weight;
            }
            const uint32_t kk = std::max(bl, (sel->k + bl / 2) / bl * bl);
            trace.push_back(make_kernel_call(kernel, sel->m, kk, i == 0));
        }
    } else {
        throw invalid_input("gen-trace: unknown preset '" + preset + "'");
    }

    std::ofstream file;
    write_trace(open_out(file, g.out_path), trace);
    std::cerr << "wrote " << trace.size() << " calls\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantized dot-product kernels, linear-array machine model, and PDP analytics"};
    app.require_subcommand(1);
    app.fallthrough(); // global options are accepted after the subcommand too

    global_opts g;
    app.add_option("--seed", g.seed, "global RNG seed");
    app.add_option("--freq", g.freq_hz, "array frequency in Hz (overrides config)");
    app.add_option("--lanes", g.lanes, "active lanes, 1..8 (overrides config)")
        ->check(CLI::Range(1, 8));
    app.add_option("--host-cores", g.host_cores, "host CPU cores (overrides config)");
    app.add_option("--config", g.config_path, "machine config file (or QCGLA_CONFIG env)");
    app.add_option("--out", g.out_path, "output path ('-' for stdout)");
    app.add_option("--format", g.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));

    auto* quantize = app.add_subcommand("quantize", "quantize an f32 tensor into a QCGT file");
    std::string in_path, dtype_s = "q8_0";
    uint32_t rows = 0, cols = 0;
    quantize->add_option("--in", in_path, "input file (raw f32 or QCGT f32)")->required();
    quantize->add_option("--dtype", dtype_s, "q8_0|q3_k|q3_k_repacked|q8_k");
    quantize->add_option("--rows", rows, "rows (raw input)");
    quantize->add_option("--cols", cols, "cols (raw input)");

    auto* dequantize = app.add_subcommand("dequantize", "expand a QCGT file back to f32");
    std::string din_path;
    bool draw = false;
    dequantize->add_option("--in", din_path, "input QCGT file")->required();
    dequantize->add_flag("--raw", draw, "write bare little-endian floats");

    auto* check = app.add_subcommand("check", "run the oracle-equivalence suites");
    size_t trials = 1000;
    bool inject_fault = false;
    check->add_option("--trials", trials, "randomized trials per suite");
    check->add_flag("--inject-fault", inject_fault)->group(""); // hidden

    auto* bench =
        app.add_subcommand("bench", "time the OpenMP kernels against the serial references");
    uint32_t bm = 256, bk = 4096;
    std::string bkernel = "q8_0";
    int repeat = 3;
    bench->add_option("--m", bm, "rows");
    bench->add_option("--k", bk, "columns");
    bench->add_option("--kernel", bkernel, "q8_0|q3_k");
    bench->add_option("--repeat", repeat, "timing repetitions")->check(CLI::PositiveNumber);

    auto* simulate = app.add_subcommand("simulate", "per-call phase breakdown of a trace");
    std::string trace_path;
    simulate->add_option("--trace", trace_path, "JSONL trace file")->required();

    auto* sweep = app.add_subcommand("sweep-lanes", "makespan across lane counts");
    std::string sweep_trace, svg_path;
    int max_lanes = 8;
    sweep->add_option("--trace", sweep_trace, "JSONL trace file")->required();
    sweep->add_option("--max-lanes", max_lanes, "sweep 1..N lanes")->check(CLI::Range(1, 8));
    sweep->add_option("--svg", svg_path, "also write an SVG chart");

    auto* compare = app.add_subcommand("compare-pdp", "ranked power-delay-product table");
    std::string scenario_path, profiles_path, builtin;
    compare->add_option("--scenario", scenario_path, "scenario file");
    compare->add_option("--profiles", profiles_path, "device profiles file (default: built-in)");
    compare->add_option("--builtin", builtin, "built-in scenario: q8_0|q3_k");

    auto* gen = app.add_subcommand("gen-trace", "emit a synthetic JSONL trace");
    std::string preset = "uniform", gkernel = "q8_0";
    uint32_t gm = 64, gk = 2048;
    size_t gcount = 16;
    gen->add_option("--preset", preset, "uniform|unet-like");
    gen->add_option("--kernel", gkernel, "q8_0|q3_k");
    gen->add_option("--m", gm, "rows per call (uniform preset)");
    gen->add_option("--k", gk, "columns per call (uniform preset)");
    gen->add_option("--count", gcount, "number of calls");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*quantize) return cmd_quantize(g, in_path, dtype_s, rows, cols);
        if (*dequantize) return cmd_dequantize(g, din_path, draw);
        if (*check) return cmd_check(g, trials, inject_fault);
        if (*bench) return cmd_bench(g, bm, bk, bkernel, repeat);
        if (*simulate) return cmd_simulate(g, trace_path);
        if (*sweep) return cmd_sweep_lanes(g, sweep_trace, max_lanes, svg_path);
        if (*compare) return cmd_compare_pdp(g, scenario_path, profiles_path, builtin);
        if (*gen) return cmd_gen_trace(g, preset, gkernel, gm, gk, gcount);
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
