#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qcgla/machine.hpp"

namespace qcgla {

// Power/frequency record of one evaluated platform. Power may differ per
// kernel (the linear-array estimate depends on the number of active units).
struct device_profile {
    std::string name;
    double power_w = 0.0;                          // default/TDP power
    std::map<std::string, double> power_per_kernel; // optional per-kernel override
    double freq_hz = 0.0;
    std::string host;                              // host profile for accelerator devices
    std::string note;

    double power_for(const std::string& kernel) const;
};

// Per-phase power assignment used for phase-weighted PDP. During
// accelerator-driven phases the host's idle draw is still accrued, since the
// metric reflects whole-system energy.
struct phase_power {
    double cpu_w = 0.0;
    double conf_w = 0.0;
    double regv_w = 0.0;
    double range_w = 0.0;
    double load_w = 0.0;
    double exec_w = 0.0;
    double drain_w = 0.0;
};

phase_power make_phase_power(double host_w, double accel_w);

// Power-delay product in joules.
double pdp(double time_s, double power_w);
double pdp(const phase_breakdown& phases, const phase_power& power);

// Serial composition of an end-to-end run: the non-offloaded host share plus
// the accelerator kernel time plus a transfer/overhead term.
struct e2e_inputs {
    double host_only_latency_s = 0.0;
    double offload_fraction = 0.0; // of host time attributable to the offloaded kernels
    double accel_kernel_time_s = 0.0;
    double overhead_s = 0.0;
};

double e2e_compose(const e2e_inputs& in);

// Cycle-derived time rescaled between operating frequencies.
double freq_projection(double time_s, double f_from, double f_to);
// PhaseBreakdown form: rescales every cycle-derived phase; cpu_s is host
// service time and is left unscaled.
phase_breakdown freq_projection(const phase_breakdown& p, double f_from, double f_to);

// Solves the serial composition for the accelerator kernel time and the net
// host-side reduction from a measured (host-only, composed-fpga,
// composed-asic) latency triple, using a rounded exec scale for the solve.
// The projection itself is then made with the exact frequency ratio.
struct e2e_calibration {
    double host_only_s = 0.0;
    double composed_fpga_s = 0.0;
    double accel_fpga_s = 0.0;       // offloaded kernel time at FPGA speed
    double host_kernel_net_s = 0.0;  // host-time reduction net of transfer overhead
    double offload_fraction_net = 0.0;
    double scale_round = 0.0;        // scale used for the solve
    double scale_exact = 0.0;        // f_to / f_from used for projection
    double projected_asic_s = 0.0;
};

e2e_calibration calibrate_e2e(double host_only_s, double composed_fpga_s,
                              double composed_asic_ref_s, double scale_round,
                              double scale_exact);

// --- comparison scenarios ----------------------------------------------------

// One row of a PDP comparison. Exactly one of the three input shapes is
// used: a plain measured latency, an explicit host/accelerator split, or a
// calibrated composition (mode "fpga" or "asic").
struct scenario_entry {
    std::string label;
    std::string device;
    std::optional<double> latency_s;
    std::optional<double> host_s;
    std::optional<double> accel_s;
    // calibration inputs
    std::optional<double> cal_host_only_s;
    std::optional<double> cal_composed_fpga_s;
    std::optional<double> cal_composed_asic_s;
    double cal_scale_round = 5.8;
    double cal_fpga_freq_hz = 145e6;
    std::string cal_mode; // "fpga" or "asic"
};

struct pdp_scenario {
    std::string name;
    std::string kernel; // "q8_0" or "q3_k"
    std::vector<scenario_entry> entries;
};

struct report_row {
    std::string label;
    std::string device;
    std::string kernel;
    double latency_s = 0.0;
    double host_s = 0.0;
    double accel_s = 0.0;
    double power_host_w = 0.0;
    double power_accel_w = 0.0;
    double energy_j = 0.0;
    double pdp_j = 0.0;
    // calibration intermediates (0 when not calibrated)
    double accel_fpga_s = 0.0;
    double host_kernel_net_s = 0.0;
    double offload_fraction_net = 0.0;
};

// Deterministic ranking: PDP ascending, ties by label.
std::vector<report_row> compare_report(std::span<const device_profile> devices,
                                       const pdp_scenario& scenario);

// Built-in profiles and comparison scenarios for the evaluated platforms.
std::vector<device_profile> builtin_device_profiles();
pdp_scenario builtin_scenario(kernel_tag kernel);

// Text formats: device profiles and scenarios as key=value sections
// ("[device <name>]" / "[entry <label>]" headers).
std::vector<device_profile> parse_device_profiles(std::istream& is);
std::vector<device_profile> load_device_profiles_file(const std::string& path);
pdp_scenario parse_scenario(std::istream& is);
pdp_scenario load_scenario_file(const std::string& path);

} // namespace qcgla
