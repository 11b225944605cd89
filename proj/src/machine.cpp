#include "qcgla/machine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qcgla/errors.hpp"

namespace qcgla {

void machine_config::validate() const {
    if (lanes < 1 || lanes > 8) throw config_error("machine_config: lanes must be in [1, 8]");
    if (pes_per_lane <= 0 || host_cores <= 0) throw config_error("machine_config: counts must be > 0");
    if (freq_hz <= 0.0 || load_bw_bytes_per_cycle <= 0.0 || drain_bw_bytes_per_cycle <= 0.0) {
        throw config_error("machine_config: rates must be > 0");
    }
    if (lmm_bytes_per_lane == 0) throw config_error("machine_config: lmm_bytes_per_lane must be > 0");
    if (host_service_seconds_per_call < 0.0) {
        throw config_error("machine_config: host_service_seconds_per_call must be >= 0");
    }
}

phase_breakdown& phase_breakdown::operator+=(const phase_breakdown& o) {
    cpu_s += o.cpu_s;
    conf_s += o.conf_s;
    regv_s += o.regv_s;
    range_s += o.range_s;
    load_s += o.load_s;
    exec_s += o.exec_s;
    drain_s += o.drain_s;
    return *this;
}

namespace {

uint64_t weight_row_bytes(kernel_tag kernel, uint32_t k) {
    return kernel == kernel_tag::q8_0 ? uint64_t(k) / kQ8_0BlockLen * kQ8_0BlockBytes
                                      : uint64_t(k) / kQ3KBlockLen * kQ3KBlockBytes;
}

uint64_t activation_bytes(kernel_tag kernel, uint32_t k) {
    return kernel == kernel_tag::q8_0 ? uint64_t(k) / kQ8_0BlockLen * kQ8_0BlockBytes
                                      : uint64_t(k) / kQ3KBlockLen * kQ8KBlockBytes;
}

} // namespace

kernel_call make_kernel_call(kernel_tag kernel, uint32_t m, uint32_t k, bool reconf) {
    const int bl = kernel == kernel_tag::q8_0 ? kQ8_0BlockLen : kQ3KBlockLen;
    if (k % uint32_t(bl) != 0) {
        throw shape_error("kernel_call: k=" + std::to_string(k) + " not divisible by block length " +
                          std::to_string(bl));
    }
    kernel_call c;
    c.kernel = kernel;
    c.m = m;
    c.k = k;
    c.bytes_in = uint64_t(m) * weight_row_bytes(kernel, k) + activation_bytes(kernel, k);
    c.bytes_out = uint64_t(m) * 4;
    c.reconf = reconf;
    return c;
}

uint64_t exec_cycles(const kernel_call& call, const kernel_mapping& mapping,
                     const machine_config& config) {
    if (call.m == 0 || call.k == 0) return 0;
    const uint64_t fill = uint64_t(mapping.pe_count());
    const uint64_t row_working_set = weight_row_bytes(call.kernel, call.k) +
                                     activation_bytes(call.kernel, call.k);
    const uint64_t tiles =
        std::max<uint64_t>(1, (row_working_set + config.lmm_bytes_per_lane - 1) /
                                  config.lmm_bytes_per_lane);
    const uint64_t words = (uint64_t(call.k) + 7) / 8;
    return uint64_t(call.m) * (tiles * fill + words);
}

phase_breakdown phase_times(const kernel_call& call, const machine_config& config,
                            const kernel_mapping& mapping) {
    config.validate();
    phase_breakdown p;
    p.cpu_s = config.host_service_seconds_per_call;
    if (call.reconf) {
        p.conf_s = double(config.conf_cycles) / config.freq_hz;
        p.regv_s = double(config.regv_cycles) / config.freq_hz;
        p.range_s = double(config.range_cycles) / config.freq_hz;
    }
    p.load_s = double(call.bytes_in) / config.load_bw_bytes_per_cycle / config.freq_hz;
    p.drain_s = double(call.bytes_out) / config.drain_bw_bytes_per_cycle / config.freq_hz;
    p.exec_s = double(exec_cycles(call, mapping, config)) / config.freq_hz;
    return p;
}

sim_result simulate_trace(std::span<const kernel_call> trace, const machine_config& config) {
    config.validate();

    sim_result res;
    res.per_lane.resize(size_t(config.lanes));
    res.calls.reserve(trace.size());

    // Per-call phases, split into the host-served segments around the free
    // EXEC segment. Phase order within a call: CPU, CONF, REGV, RANGE, LOAD,
    // EXEC, DRAIN.
    struct lane_state {
        std::vector<size_t> calls; // indices into trace
        size_t next_call = 0;
        int next_phase = 0;
    };
    std::vector<lane_state> lanes(size_t(config.lanes));
    for (size_t i = 0; i < trace.size(); ++i) {
        lanes[i % size_t(config.lanes)].calls.push_back(i);
    }

    std::vector<call_record> records(trace.size());
    for (size_t i = 0; i < trace.size(); ++i) {
        records[i].index = i;
        records[i].lane = int(i % size_t(config.lanes));
        records[i].call = trace[i];
        records[i].phases = phase_times(trace[i], config, default_mapping(trace[i].kernel));
        records[i].start_s = -1.0;
    }

    std::vector<double> core_free(size_t(config.host_cores), 0.0);

    // lanes advance phase by phase; events processed in (time, lane) order,
    // which serves host requests FIFO by arrival with lane-index tie-break
    using event = std::pair<double, int>;
    std::priority_queue<event, std::vector<event>, std::greater<event>> ready;
    for (int l = 0; l < config.lanes; ++l) {
        if (!lanes[size_t(l)].calls.empty()) ready.emplace(0.0, l);
    }

    const int kPhases = 7;
    while (!ready.empty()) {
        const auto [t, l] = ready.top();
        ready.pop();
        auto& lane = lanes[size_t(l)];
        const size_t ci = lane.calls[lane.next_call];
        auto& rec = records[ci];

        double dur = 0.0;
        bool host_bound = true;
        switch (lane.next_phase) {
            case 0: dur = rec.phases.cpu_s; break;
            case 1: dur = rec.phases.conf_s; break;
            case 2: dur = rec.phases.regv_s; break;
            case 3: dur = rec.phases.range_s; break;
            case 4: dur = rec.phases.load_s; break;
            case 5: dur = rec.phases.exec_s; host_bound = false; break;
            case 6: dur = rec.phases.drain_s; break;
        }

        double end = t;
        if (dur > 0.0) {
            if (host_bound) {
                auto core = std::min_element(core_free.begin(), core_free.end());
                const double start = std::max(t, *core);
                end = start + dur;
                *core = end;
            } else {
                end = t + dur;
            }
        }
        if (rec.start_s < 0.0) rec.start_s = t;

        if (++lane.next_phase == kPhases) {
            rec.end_s = end;
            lane.next_phase = 0;
            ++lane.next_call;
            if (lane.next_call < lane.calls.size()) ready.emplace(end, l);
        } else {
            ready.emplace(end, l);
        }
    }

    for (const auto& rec : records) {
        res.per_lane[size_t(rec.lane)] += rec.phases;
        res.aggregate += rec.phases;
        res.makespan_s = std::max(res.makespan_s, rec.end_s);
    }
    res.calls = std::move(records);
    return res;
}

lane_sweep_result sweep_lanes(std::span<const kernel_call> trace, machine_config config,
                              int max_lanes) {
    if (max_lanes < 1 || max_lanes > 8) throw config_error("sweep_lanes: max_lanes must be in [1, 8]");
    lane_sweep_result res;
    double first = 0.0;
    double prev = 0.0;
    for (int l = 1; l <= max_lanes; ++l) {
        config.lanes = l;
        const double mk = simulate_trace(trace, config).makespan_s;
        lane_sweep_point p;
        p.lanes = l;
        p.makespan_s = mk;
        if (l == 1) {
            first = mk;
            p.speedup_vs_1 = 1.0;
            p.marginal_speedup = 1.0;
        } else {
            p.speedup_vs_1 = mk > 0.0 ? first / mk : 1.0;
            p.marginal_speedup = mk > 0.0 ? prev / mk : 1.0;
            if (res.knee_lanes == 0 && p.marginal_speedup < 1.1) res.knee_lanes = l;
        }
        prev = mk;
        res.points.push_back(p);
    }
    return res;
}

// --- trace and config files ---------------------------------------------------

std::vector<kernel_call> parse_trace(std::istream& is) {
    std::vector<kernel_call> trace;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(std::string("bad trace JSON: ") + e.what(), line_no);
        }
        try {
            const kernel_tag kernel = kernel_from_name(j.at("kernel").get<std::string>());
            const auto m = j.at("m").get<uint32_t>();
            const auto k = j.at("k").get<uint32_t>();
            const bool reconf = j.value("reconf", false);
            trace.push_back(make_kernel_call(kernel, m, k, reconf));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(std::string("bad trace call: ") + e.what(), line_no);
        } catch (const error& e) {
            throw parse_error(e.what(), line_no);
        }
    }
    return trace;
}

std::vector<kernel_call> load_trace_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open trace file: " + path);
    return parse_trace(f);
}

void write_trace(std::ostream& os, std::span<const kernel_call> trace) {
    for (const auto& c : trace) {
        nlohmann::json j;
        j["kernel"] = kernel_name(c.kernel);
        j["m"] = c.m;
        j["k"] = c.k;
        j["reconf"] = c.reconf;
        os << j.dump() << '\n';
    }
}

machine_config parse_machine_config(std::istream& is) {
    machine_config cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw parse_error("expected key=value", line_no);

        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "pes_per_lane") cfg.pes_per_lane = std::stoi(value);
            else if (key == "lanes") cfg.lanes = std::stoi(value);
            else if (key == "freq_hz") cfg.freq_hz = std::stod(value);
            else if (key == "lmm_bytes_per_lane") cfg.lmm_bytes_per_lane = std::stoull(value);
            else if (key == "host_cores") cfg.host_cores = std::stoi(value);
            else if (key == "load_bw_bytes_per_cycle") cfg.load_bw_bytes_per_cycle = std::stod(value);
            else if (key == "drain_bw_bytes_per_cycle") cfg.drain_bw_bytes_per_cycle = std::stod(value);
            else if (key == "conf_cycles") cfg.conf_cycles = std::stoull(value);
            else if (key == "regv_cycles") cfg.regv_cycles = std::stoull(value);
            else if (key == "range_cycles") cfg.range_cycles = std::stoull(value);
            else if (key == "host_service_seconds_per_call") cfg.host_service_seconds_per_call = std::stod(value);
            else throw parse_error("unknown config key '" + key + "'", line_no);
        } catch (const parse_error&) {
            throw;
        } catch (const std::exception&) {
            throw parse_error("bad value for " + key + ": '" + value + "'", line_no);
        }
    }
    cfg.validate();
    return cfg;
}

machine_config load_machine_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open config file: " + path);
    return parse_machine_config(f);
}

} // namespace qcgla
