#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qcgla/isa.hpp"
#include "qcgla/quant.hpp"
#include "qcgla/tensor.hpp"

namespace qcgla {

enum class kernel_tag : uint8_t { q8_0, q3_k };

const char* kernel_name(kernel_tag t);
kernel_tag kernel_from_name(const std::string& name);

// One operand of a pipeline stage: an upstream stage id or a stream input.
// Stream A carries weight-side data (quant words and block scales), stream B
// the activation side.
struct stage_input {
    enum class kind : uint8_t { stage, stream_a, stream_b } source = kind::stage;
    int stage_id = -1;

    bool operator==(const stage_input&) const = default;
};

struct pipeline_stage {
    int pe = 0;
    pe_op op = pe_op::move;
    std::vector<stage_input> inputs;
};

// Stage-descriptor list assigning operations to PEs of one 64-PE lane.
// Stages are listed in topological order with strictly increasing PE
// indices; operand routing only ever references earlier stages.
struct kernel_mapping {
    kernel_tag kernel = kernel_tag::q8_0;
    std::vector<pipeline_stage> stages;

    int pe_count() const { return int(stages.size()); }

    // Throws config_error on any structural violation.
    void validate() const;

    // Stages whose output feeds no other stage; these emit the per-block
    // binary32 contributions in block order.
    std::vector<int> output_stages() const;

    // Blocks consumed per firing of the pipeline (one per two-stream FMUL32).
    int blocks_per_firing() const;

    std::string to_text() const;
};

// Descriptor file format: one stage per line,
//   pe=<n> op=<SML8|AD24|CVT53|FMUL32|MOVE> in=<comma-separated stage ids|stream:A|stream:B>
// Blank lines and lines starting with '#' are ignored.
kernel_mapping parse_mapping(const std::string& text, kernel_tag kernel);
kernel_mapping load_mapping_file(const std::string& path, kernel_tag kernel);

// Canonical shipped mappings: 46 PEs for Q8_0, 51 for Q3_K.
const kernel_mapping& default_mapping(kernel_tag kernel);
std::string default_mapping_text(kernel_tag kernel);

// ---------------------------------------------------------------------------
// Dot products expressed purely as pipelines of ISA operations under a
// mapping. Results are bit-identical to the quantcodec references.
// ---------------------------------------------------------------------------

float q8_0_dot(std::span<const block_q8_0> a, std::span<const block_q8_0> b,
               const kernel_mapping& mapping);
float q3_k_dot(std::span<const repacked_q3_k> w, std::span<const block_q8_k> a,
               const kernel_mapping& mapping);

// Row-parallel matrix-vector product. Weights: q8_0 or q3_k_repacked tensor;
// activations: a 1-row tensor of the matching activation dtype (q8_0 or
// q8_k). Rows are partitioned round-robin across `lanes` (1..8); the result
// is a pure function of the inputs, independent of the lane count and of any
// thread-level parallelism.
std::vector<float> matvec(const quantized_tensor& w, const quantized_tensor& x,
                          const kernel_mapping& mapping, int lanes = 1);

// Column-by-column driver over a k x n activation matrix (f32 columns are
// quantized to the matching activation dtype first by the caller); output is
// row-major m x n.
std::vector<float> matmul(const quantized_tensor& w, const std::vector<quantized_tensor>& x_cols,
                          const kernel_mapping& mapping, int lanes = 1);

} // namespace qcgla
