#include "qcgla/perfmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "qcgla/errors.hpp"

namespace qcgla {

double device_profile::power_for(const std::string& kernel) const {
    const auto it = power_per_kernel.find(kernel);
    return it != power_per_kernel.end() ? it->second : power_w;
}

phase_power make_phase_power(double host_w, double accel_w) {
    phase_power p;
    p.cpu_w = host_w;
    const double system_w = host_w + accel_w;
    p.conf_w = p.regv_w = p.range_w = p.load_w = p.exec_w = p.drain_w = system_w;
    return p;
}

double pdp(double time_s, double power_w) {
    if (time_s < 0.0 || power_w < 0.0) throw invalid_input("pdp: negative input");
    return time_s * power_w;
}

double pdp(const phase_breakdown& phases, const phase_power& power) {
    return pdp(phases.cpu_s, power.cpu_w) + pdp(phases.conf_s, power.conf_w) +
           pdp(phases.regv_s, power.regv_w) + pdp(phases.range_s, power.range_w) +
           pdp(phases.load_s, power.load_w) + pdp(phases.exec_s, power.exec_w) +
           pdp(phases.drain_s, power.drain_w);
}

double e2e_compose(const e2e_inputs& in) {
    if (in.offload_fraction < 0.0 || in.offload_fraction > 1.0) {
        throw invalid_input("e2e_compose: offload_fraction outside [0, 1]");
    }
    if (in.host_only_latency_s < 0.0 || in.accel_kernel_time_s < 0.0) {
        throw invalid_input("e2e_compose: negative time");
    }
    return in.host_only_latency_s * (1.0 - in.offload_fraction) + in.accel_kernel_time_s +
           in.overhead_s;
}

double freq_projection(double time_s, double f_from, double f_to) {
    if (f_from <= 0.0 || f_to <= 0.0) throw invalid_input("freq_projection: frequencies must be > 0");
    return time_s * f_from / f_to;
}

phase_breakdown freq_projection(const phase_breakdown& p, double f_from, double f_to) {
    phase_breakdown r = p;
    r.conf_s = freq_projection(p.conf_s, f_from, f_to);
    r.regv_s = freq_projection(p.regv_s, f_from, f_to);
    r.range_s = freq_projection(p.range_s, f_from, f_to);
    r.load_s = freq_projection(p.load_s, f_from, f_to);
    r.exec_s = freq_projection(p.exec_s, f_from, f_to);
    r.drain_s = freq_projection(p.drain_s, f_from, f_to);
    return r;
}

e2e_calibration calibrate_e2e(double host_only_s, double composed_fpga_s,
                              double composed_asic_ref_s, double scale_round,
                              double scale_exact) {
    if (scale_round <= 1.0 || scale_exact <= 1.0) {
        throw invalid_input("calibrate_e2e: exec scales must be > 1");
    }
    e2e_calibration c;
    c.host_only_s = host_only_s;
    c.composed_fpga_s = composed_fpga_s;
    c.scale_round = scale_round;
    c.scale_exact = scale_exact;
    // composed = host_only - K + T, and the asic point moves only T:
    // composed_fpga - composed_asic = T * (1 - 1/scale)
    c.accel_fpga_s = (composed_fpga_s - composed_asic_ref_s) / (1.0 - 1.0 / scale_round);
    c.host_kernel_net_s = host_only_s - composed_fpga_s + c.accel_fpga_s;
    c.offload_fraction_net = c.host_kernel_net_s / host_only_s;
    c.projected_asic_s = e2e_compose({host_only_s, c.offload_fraction_net,
                                      c.accel_fpga_s / scale_exact, 0.0});
    return c;
}

// --- comparisons -----------------------------------------------------------------

namespace {

const device_profile& find_device(std::span<const device_profile> devices,
                                  const std::string& name) {
    for (const auto& d : devices) {
        if (d.name == name) return d;
    }
    throw config_error("unknown device: " + name);
}

} // namespace

std::vector<report_row> compare_report(std::span<const device_profile> devices,
                                       const pdp_scenario& scenario) {
    if (devices.empty()) throw config_error("compare_report: no device profiles");

    std::vector<report_row> rows;
    for (const auto& e : scenario.entries) {
        const auto& dev = find_device(devices, e.device);
        report_row r;
        r.label = e.label.empty() ? e.device : e.label;
        r.device = dev.name;
        r.kernel = scenario.kernel;
        r.power_accel_w = dev.power_for(scenario.kernel);

        double host_w = 0.0;
        if (!dev.host.empty()) host_w = find_device(devices, dev.host).power_for(scenario.kernel);
        r.power_host_w = host_w;

        if (e.cal_host_only_s && e.cal_composed_fpga_s && e.cal_composed_asic_s) {
            const double scale_exact = dev.freq_hz > 0.0 && e.cal_fpga_freq_hz > 0.0 &&
                                               e.cal_mode == "asic"
                                           ? dev.freq_hz / e.cal_fpga_freq_hz
                                           : e.cal_scale_round;
            const auto cal = calibrate_e2e(*e.cal_host_only_s, *e.cal_composed_fpga_s,
                                           *e.cal_composed_asic_s, e.cal_scale_round, scale_exact);
            r.accel_fpga_s = cal.accel_fpga_s;
            r.host_kernel_net_s = cal.host_kernel_net_s;
            r.offload_fraction_net = cal.offload_fraction_net;
            if (e.cal_mode == "fpga") {
                r.accel_s = cal.accel_fpga_s;
                r.host_s = cal.host_only_s - cal.host_kernel_net_s;
                r.latency_s = cal.composed_fpga_s;
            } else {
                r.accel_s = cal.accel_fpga_s / cal.scale_exact;
                r.host_s = cal.host_only_s - cal.host_kernel_net_s;
                r.latency_s = cal.projected_asic_s;
            }
        } else if (e.host_s && e.accel_s) {
            r.host_s = *e.host_s;
            r.accel_s = *e.accel_s;
            r.latency_s = r.host_s + r.accel_s;
        } else if (e.latency_s) {
            r.latency_s = *e.latency_s;
        } else {
            throw config_error("scenario entry '" + r.label + "': no latency inputs");
        }

        // phase-weighted energy: host share at host power, accelerator share
        // at accelerator power with host idle draw still accrued
        if (r.accel_s > 0.0 || r.host_s > 0.0) {
            r.energy_j = pdp(r.host_s, r.power_host_w) +
                         pdp(r.accel_s, r.power_accel_w + r.power_host_w);
        } else {
            r.energy_j = pdp(r.latency_s, r.power_accel_w);
        }
        r.pdp_j = r.energy_j;
        rows.push_back(std::move(r));
    }

    std::sort(rows.begin(), rows.end(), [](const report_row& a, const report_row& b) {
        if (a.pdp_j != b.pdp_j) return a.pdp_j < b.pdp_j;
        return a.label < b.label;
    });
    return rows;
}

// --- built-in data ----------------------------------------------------------------

std::vector<device_profile> builtin_device_profiles() {
    std::vector<device_profile> v;
    v.push_back({"arm-cortex-a72", 1.5, {}, 1.4e9, "", "dual-core host CPU on Versal"});
    v.push_back({"imax3-vpk180", 180.0, {}, 145e6, "arm-cortex-a72", "FPGA prototype, single lane"});
    v.push_back({"imax3-28nm",
                 52.8,
                 {{"q8_0", 47.7}, {"q3_k", 52.8}},
                 840e6,
                 "arm-cortex-a72",
                 "28nm synthesis estimate; 840 MHz from timing analysis"});
    v.push_back({"imax3-28nm-800",
                 52.8,
                 {{"q8_0", 47.7}, {"q3_k", 52.8}},
                 800e6,
                 "arm-cortex-a72",
                 "28nm synthesis estimate at the 800 MHz nameplate frequency"});
    v.push_back({"xeon-w5-2465x", 200.0, {}, 3.1e9, "", "16-core workstation CPU, TDP"});
    v.push_back({"gtx-1080ti", 250.0, {}, 1.48e9, "", "3584-core GPU, TDP"});
    return v;
}

pdp_scenario builtin_scenario(kernel_tag kernel) {
    pdp_scenario s;
    s.kernel = kernel_name(kernel);
    auto plain = [](std::string label, std::string device, double latency) {
        scenario_entry e;
        e.label = std::move(label);
        e.device = std::move(device);
        e.latency_s = latency;
        return e;
    };
    auto calibrated = [](std::string label, std::string device, double host_only, double fpga,
                         double asic, const char* mode) {
        scenario_entry e;
        e.label = std::move(label);
        e.device = std::move(device);
        e.cal_host_only_s = host_only;
        e.cal_composed_fpga_s = fpga;
        e.cal_composed_asic_s = asic;
        e.cal_mode = mode;
        return e;
    };

    if (kernel == kernel_tag::q3_k) {
        s.name = "q3_k-e2e";
        s.entries.push_back(plain("arm-cortex-a72", "arm-cortex-a72", 809.7));
        s.entries.push_back(plain("xeon-w5-2465x", "xeon-w5-2465x", 59.3));
        s.entries.push_back(plain("gtx-1080ti", "gtx-1080ti", 16.2));
        s.entries.push_back(calibrated("imax3-vpk180", "imax3-vpk180", 809.7, 790.3, 754.5, "fpga"));
        s.entries.push_back(calibrated("imax3-28nm", "imax3-28nm", 809.7, 790.3, 754.5, "asic"));
    } else {
        s.name = "q8_0-e2e";
        s.entries.push_back(plain("arm-cortex-a72", "arm-cortex-a72", 625.1));
        s.entries.push_back(calibrated("imax3-vpk180", "imax3-vpk180", 625.1, 654.7, 558.0, "fpga"));
        s.entries.push_back(calibrated("imax3-28nm", "imax3-28nm", 625.1, 654.7, 558.0, "asic"));
    }
    return s;
}

// --- text formats -------------------------------------------------------------------

namespace {

struct section {
    std::string kind;
    std::string name;
    std::vector<std::pair<std::string, std::string>> kv;
    int line = 0;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// sections introduced by "[<kind> <name>]"; top-level keys land in a section
// with empty kind
std::vector<section> parse_sections(std::istream& is) {
    std::vector<section> out;
    out.push_back({});
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw parse_error("unterminated section header", line_no);
            const std::string inner = trim(t.substr(1, t.size() - 2));
            const auto sp = inner.find(' ');
            section sec;
            sec.kind = sp == std::string::npos ? inner : inner.substr(0, sp);
            sec.name = sp == std::string::npos ? "" : trim(inner.substr(sp + 1));
            sec.line = line_no;
            out.push_back(std::move(sec));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw parse_error("expected key=value", line_no);
        out.back().kv.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return out;
}

double to_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw parse_error("bad numeric value for " + key + ": '" + v + "'");
    }
}

} // namespace

std::vector<device_profile> parse_device_profiles(std::istream& is) {
    std::vector<device_profile> out;
    for (const auto& sec : parse_sections(is)) {
        if (sec.kind.empty()) {
            if (!sec.kv.empty()) throw parse_error("key outside a [device ...] section", sec.line);
            continue;
        }
        if (sec.kind != "device") throw parse_error("expected [device <name>]", sec.line);
        device_profile d;
        d.name = sec.name;
        for (const auto& [k, v] : sec.kv) {
            if (k == "power_w") d.power_w = to_double(v, k);
            else if (k.rfind("power_w.", 0) == 0) d.power_per_kernel[k.substr(8)] = to_double(v, k);
            else if (k == "freq_hz") d.freq_hz = to_double(v, k);
            else if (k == "host") d.host = v;
            else if (k == "note") d.note = v;
            else throw parse_error("unknown device key '" + k + "'", sec.line);
        }
        if (d.power_w <= 0.0) throw parse_error("device " + d.name + ": power_w must be > 0", sec.line);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<device_profile> load_device_profiles_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open profiles file: " + path);
    return parse_device_profiles(f);
}

pdp_scenario parse_scenario(std::istream& is) {
    pdp_scenario s;
    for (const auto& sec : parse_sections(is)) {
        if (sec.kind.empty()) {
            for (const auto& [k, v] : sec.kv) {
                if (k == "name") s.name = v;
                else if (k == "kernel") s.kernel = v;
                else throw parse_error("unknown scenario key '" + k + "'", sec.line);
            }
            continue;
        }
        if (sec.kind != "entry") throw parse_error("expected [entry <label>]", sec.line);
        scenario_entry e;
        e.label = sec.name;
        for (const auto& [k, v] : sec.kv) {
            if (k == "device") e.device = v;
            else if (k == "latency_s") e.latency_s = to_double(v, k);
            else if (k == "host_s") e.host_s = to_double(v, k);
            else if (k == "accel_s") e.accel_s = to_double(v, k);
            else if (k == "calibrate.host_only_s") e.cal_host_only_s = to_double(v, k);
            else if (k == "calibrate.composed_fpga_s") e.cal_composed_fpga_s = to_double(v, k);
            else if (k == "calibrate.composed_asic_s") e.cal_composed_asic_s = to_double(v, k);
            else if (k == "calibrate.scale") e.cal_scale_round = to_double(v, k);
            else if (k == "calibrate.fpga_freq_hz") e.cal_fpga_freq_hz = to_double(v, k);
            else if (k == "calibrate.mode") e.cal_mode = v;
            else throw parse_error("unknown entry key '" + k + "'", sec.line);
        }
        if (e.device.empty()) throw parse_error("entry " + e.label + ": missing device", sec.line);
        s.entries.push_back(std::move(e));
    }
    if (s.kernel.empty()) throw parse_error("scenario: missing kernel");
    return s;
}

pdp_scenario load_scenario_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open scenario file: " + path);
    return parse_scenario(f);
}

} // namespace qcgla
