#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qcgla/kernels.hpp"

namespace qcgla {

// Linear-array machine description. Cycle constants for the configuration
// phases default to multiples of the PE count; they are calibration knobs,
// not measured values.
struct machine_config {
    int pes_per_lane = 64;
    int lanes = 1;                          // 1..8
    double freq_hz = 145e6;
    uint64_t lmm_bytes_per_lane = 512 * 1024;
    int host_cores = 2;
    double load_bw_bytes_per_cycle = 8.0;
    double drain_bw_bytes_per_cycle = 8.0;
    uint64_t conf_cycles = 64 * 16;
    uint64_t regv_cycles = 64 * 4;
    uint64_t range_cycles = 64 * 2;
    double host_service_seconds_per_call = 0.0;

    void validate() const;
};

// Per-phase wall time of one call (or an aggregate of calls). CONF/REGV/
// RANGE are configuration transfer, register init and address-range setup;
// LOAD/DRAIN are memory<->LMM transfers; EXEC is the burst computation.
struct phase_breakdown {
    double cpu_s = 0.0;
    double conf_s = 0.0;
    double regv_s = 0.0;
    double range_s = 0.0;
    double load_s = 0.0;
    double exec_s = 0.0;
    double drain_s = 0.0;

    double total() const {
        return cpu_s + conf_s + regv_s + range_s + load_s + exec_s + drain_s;
    }
    phase_breakdown& operator+=(const phase_breakdown& o);
};

// One offloaded matvec-shaped kernel invocation. Byte counts are derived
// from the wire formats: q8_0 rows/activations at 34 bytes per 32 elements,
// q3_k rows at 110 bytes and q8_k activations at 260 bytes per 256 elements,
// f32 rows out.
struct kernel_call {
    kernel_tag kernel = kernel_tag::q8_0;
    uint32_t m = 0;
    uint32_t k = 0;
    uint64_t bytes_in = 0;
    uint64_t bytes_out = 0;
    bool reconf = false;
};

kernel_call make_kernel_call(kernel_tag kernel, uint32_t m, uint32_t k, bool reconf);

// Pipeline-fill execution model: per row, fill = mapping stage count, then
// one 64-bit word (8 quantized elements) per cycle; the fill is repaid per
// tile when a row's working set exceeds the lane's LMM.
uint64_t exec_cycles(const kernel_call& call, const kernel_mapping& mapping,
                     const machine_config& config);

phase_breakdown phase_times(const kernel_call& call, const machine_config& config,
                            const kernel_mapping& mapping);

struct call_record {
    size_t index = 0;
    int lane = 0;
    kernel_call call;
    phase_breakdown phases;
    double start_s = 0.0;
    double end_s = 0.0;
};

struct sim_result {
    std::vector<phase_breakdown> per_lane;
    phase_breakdown aggregate;
    double makespan_s = 0.0;
    std::vector<call_record> calls;
};

// Deterministic event simulation: calls are dispatched round-robin to lanes
// (call i on lane i mod lanes); EXEC overlaps freely across lanes while all
// other phases (and the per-call host service time) occupy one of
// host_cores slots -- earliest-available server, FIFO by arrival time, ties
// broken by lane index.
sim_result simulate_trace(std::span<const kernel_call> trace, const machine_config& config);

struct lane_sweep_point {
    int lanes = 0;
    double makespan_s = 0.0;
    double speedup_vs_1 = 1.0;
    double marginal_speedup = 1.0;
};

struct lane_sweep_result {
    std::vector<lane_sweep_point> points;
    int knee_lanes = 0; // first lane count with marginal speedup < 1.1, 0 if none
};

lane_sweep_result sweep_lanes(std::span<const kernel_call> trace, machine_config config,
                              int max_lanes = 8);

// Trace file: JSON lines, one call per line:
//   {"kernel":"q8_0"|"q3_k","m":<int>,"k":<int>,"reconf":<bool>}
std::vector<kernel_call> parse_trace(std::istream& is);
std::vector<kernel_call> load_trace_file(const std::string& path);
void write_trace(std::ostream& os, std::span<const kernel_call> trace);

// Config file: flat key=value text mirroring machine_config fields.
machine_config parse_machine_config(std::istream& is);
machine_config load_machine_config_file(const std::string& path);

} // namespace qcgla
