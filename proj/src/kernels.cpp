#include "qcgla/kernels.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <sstream>

#include "qcgla/errors.hpp"
#include "qcgla/fp16.hpp"

namespace qcgla {

const char* kernel_name(kernel_tag t) {
    return t == kernel_tag::q8_0 ? "q8_0" : "q3_k";
}

kernel_tag kernel_from_name(const std::string& name) {
    if (name == "q8_0") return kernel_tag::q8_0;
    if (name == "q3_k") return kernel_tag::q3_k;
    throw parse_error("unknown kernel: " + name);
}

// --- mapping text format -----------------------------------------------------

namespace {

stage_input parse_input_token(const std::string& tok, int line_no) {
    if (tok == "stream:A") return {stage_input::kind::stream_a, -1};
    if (tok == "stream:B") return {stage_input::kind::stream_b, -1};
    size_t pos = 0;
    int id = -1;
    try {
        id = std::stoi(tok, &pos);
    } catch (const std::exception&) {
        throw parse_error("bad input operand '" + tok + "'", line_no);
    }
    if (pos != tok.size() || id < 0) throw parse_error("bad input operand '" + tok + "'", line_no);
    return {stage_input::kind::stage, id};
}

std::string expect_field(const std::string& word, const std::string& key, int line_no) {
    if (word.rfind(key + "=", 0) != 0) {
        throw parse_error("expected " + key + "=..., got '" + word + "'", line_no);
    }
    return word.substr(key.size() + 1);
}

} // namespace

kernel_mapping parse_mapping(const std::string& text, kernel_tag kernel) {
    kernel_mapping m;
    m.kernel = kernel;

    std::istringstream lines(text);
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;

        std::istringstream words(line);
        std::string pe_word, op_word, in_word;
        if (!(words >> pe_word >> op_word >> in_word)) {
            throw parse_error("expected 'pe=<n> op=<op> in=<inputs>'", line_no);
        }
        std::string extra;
        if (words >> extra) throw parse_error("trailing token '" + extra + "'", line_no);

        pipeline_stage st;
        try {
            st.pe = std::stoi(expect_field(pe_word, "pe", line_no));
        } catch (const parse_error&) {
            throw;
        } catch (const std::exception&) {
            throw parse_error("bad pe index in '" + pe_word + "'", line_no);
        }
        st.op = pe_op_from_name(expect_field(op_word, "op", line_no));

        std::istringstream ins(expect_field(in_word, "in", line_no));
        std::string tok;
        while (std::getline(ins, tok, ',')) {
            st.inputs.push_back(parse_input_token(tok, line_no));
        }
        m.stages.push_back(std::move(st));
    }
    m.validate();
    return m;
}

kernel_mapping load_mapping_file(const std::string& path, kernel_tag kernel) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open mapping file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_mapping(ss.str(), kernel);
}

std::string kernel_mapping::to_text() const {
    std::ostringstream os;
    for (const auto& st : stages) {
        os << "pe=" << st.pe << " op=" << pe_op_name(st.op) << " in=";
        for (size_t i = 0; i < st.inputs.size(); ++i) {
            if (i) os << ',';
            switch (st.inputs[i].source) {
                case stage_input::kind::stream_a: os << "stream:A"; break;
                case stage_input::kind::stream_b: os << "stream:B"; break;
                case stage_input::kind::stage: os << st.inputs[i].stage_id; break;
            }
        }
        os << '\n';
    }
    return os.str();
}

// --- validation ----------------------------------------------------------------

void kernel_mapping::validate() const {
    if (stages.empty()) throw config_error("mapping: no stages");

    const pe_op leaf_op = (kernel == kernel_tag::q8_0) ? pe_op::sml8 : pe_op::cvt53;
    const pe_op other_leaf = (kernel == kernel_tag::q8_0) ? pe_op::cvt53 : pe_op::sml8;

    int leaves = 0;
    int scale_stages = 0;
    enum class vtype { word, f32 };
    std::vector<vtype> types(stages.size());

    for (size_t i = 0; i < stages.size(); ++i) {
        const auto& st = stages[i];
        if (st.pe < 0 || st.pe > 63) {
            throw config_error("mapping: stage " + std::to_string(i) + ": pe out of range");
        }
        if (i > 0 && st.pe <= stages[i - 1].pe) {
            throw config_error("mapping: stage " + std::to_string(i) +
                               ": pe indices must be strictly increasing");
        }
        if (st.op == other_leaf) {
            throw config_error(std::string("mapping: ") + pe_op_name(other_leaf) +
                               " not valid in a " + kernel_name(kernel) + " mapping");
        }
        const size_t want = (st.op == pe_op::move) ? 1 : 2;
        if (st.inputs.size() != want) {
            throw config_error("mapping: stage " + std::to_string(i) + ": " +
                               pe_op_name(st.op) + " takes " + std::to_string(want) + " input(s)");
        }

        int stream_a = 0, stream_b = 0, refs = 0;
        for (const auto& in : st.inputs) {
            switch (in.source) {
                case stage_input::kind::stream_a: ++stream_a; break;
                case stage_input::kind::stream_b: ++stream_b; break;
                case stage_input::kind::stage:
                    ++refs;
                    if (in.stage_id >= int(i)) {
                        throw config_error("mapping: stage " + std::to_string(i) +
                                           " references stage " + std::to_string(in.stage_id) +
                                           " which is not earlier in the pipeline");
                    }
                    break;
            }
        }

        auto ref_type = [&](int k) { return types[size_t(st.inputs[size_t(k)].stage_id)]; };
        switch (st.op) {
            case pe_op::sml8:
            case pe_op::cvt53:
                ++leaves;
                if (refs == 2) {
                    if (ref_type(0) != vtype::word || ref_type(1) != vtype::word) {
                        throw config_error("mapping: stage " + std::to_string(i) +
                                           ": leaf inputs must carry words");
                    }
                } else if (!(stream_a == 1 && stream_b == 1)) {
                    throw config_error("mapping: stage " + std::to_string(i) +
                                       ": leaf needs stream:A,stream:B or two word stages");
                }
                types[i] = vtype::word;
                break;
            case pe_op::ad24:
                if (refs != 2 || ref_type(0) != vtype::word || ref_type(1) != vtype::word) {
                    throw config_error("mapping: stage " + std::to_string(i) +
                                       ": AD24 needs two earlier word stages");
                }
                types[i] = vtype::word;
                break;
            case pe_op::move:
                if (refs == 1 && ref_type(0) != vtype::word) {
                    throw config_error("mapping: stage " + std::to_string(i) +
                                       ": MOVE forwards words only");
                }
                types[i] = vtype::word;
                break;
            case pe_op::fmul32:
                if (stream_a == 1 && stream_b == 1) {
                    ++scale_stages; // consumes the block-scale channel
                } else if (refs != 2) {
                    throw config_error("mapping: stage " + std::to_string(i) +
                                       ": FMUL32 needs stream:A,stream:B or two earlier stages");
                }
                types[i] = vtype::f32;
                break;
        }
    }

    if (leaves == 0) {
        throw config_error(std::string("mapping: no ") + pe_op_name(leaf_op) + " leaf stages");
    }
    if (scale_stages == 0) {
        throw config_error("mapping: no FMUL32 scale stage (stream:A,stream:B)");
    }

    // every firing's block contributions must come off f32 output stages
    std::vector<bool> referenced(stages.size(), false);
    for (const auto& st : stages) {
        for (const auto& in : st.inputs) {
            if (in.source == stage_input::kind::stage) referenced[size_t(in.stage_id)] = true;
        }
    }
    int outputs = 0;
    for (size_t i = 0; i < stages.size(); ++i) {
        if (referenced[i]) continue;
        if (types[i] != vtype::f32) {
            throw config_error("mapping: stage " + std::to_string(i) +
                               " output is unconsumed but not binary32");
        }
        ++outputs;
    }
    if (outputs == 0) throw config_error("mapping: no output stage");

    const int window_words = scale_stages * ((kernel == kernel_tag::q8_0) ? 4 : 32);
    if (window_words % leaves != 0) {
        throw config_error("mapping: " + std::to_string(leaves) +
                           " leaves cannot evenly share " + std::to_string(window_words) +
                           " words per firing");
    }
}

std::vector<int> kernel_mapping::output_stages() const {
    std::vector<bool> referenced(stages.size(), false);
    for (const auto& st : stages) {
        for (const auto& in : st.inputs) {
            if (in.source == stage_input::kind::stage) referenced[size_t(in.stage_id)] = true;
        }
    }
    std::vector<int> out;
    for (size_t i = 0; i < stages.size(); ++i) {
        if (!referenced[i]) out.push_back(int(i));
    }
    return out;
}

int kernel_mapping::blocks_per_firing() const {
    int n = 0;
    for (const auto& st : stages) {
        if (st.op != pe_op::fmul32 || st.inputs.size() != 2) continue;
        if (st.inputs[0].source == stage_input::kind::stream_a &&
            st.inputs[1].source == stage_input::kind::stream_b) {
            ++n;
        }
    }
    return n;
}

// --- canonical mappings --------------------------------------------------------

std::string default_mapping_text(kernel_tag kernel) {
    std::ostringstream os;
    if (kernel == kernel_tag::q8_0) {
        // Four identical block groups behind a pair of stream ports. Each
        // group spans a 12-PE window of the array (11 stages plus a spare)
        // and folds one 32-element block into a 24-bit partial before the
        // two-stage f32 epilogue.
        os << "pe=0 op=MOVE in=stream:A\n";
        os << "pe=1 op=MOVE in=stream:B\n";
        for (int g = 0; g < 4; ++g) {
            const int id = 2 + 11 * g;  // first stage id of this group
            const int pe = 2 + 12 * g;  // group PE window base
            for (int l = 0; l < 4; ++l) {
                os << "pe=" << pe + l << " op=SML8 in=0,1\n";
            }
            os << "pe=" << pe + 4 << " op=AD24 in=" << id + 0 << ',' << id + 1 << '\n';
            os << "pe=" << pe + 5 << " op=AD24 in=" << id + 2 << ',' << id + 3 << '\n';
            os << "pe=" << pe + 6 << " op=AD24 in=" << id + 4 << ',' << id + 5 << '\n';
            os << "pe=" << pe + 7 << " op=MOVE in=" << id + 6 << '\n';
            os << "pe=" << pe + 8 << " op=AD24 in=" << id + 6 << ',' << id + 7 << '\n';
            os << "pe=" << pe + 9 << " op=FMUL32 in=stream:A,stream:B\n";
            os << "pe=" << pe + 10 << " op=FMUL32 in=" << id + 8 << ',' << id + 9 << '\n';
        }
    } else {
        // One superblock per firing: sixteen CVT53 leaves (one 16-element
        // sub-block each), a pairing rank, a binary reduction to the 24-bit
        // superblock total, then the f32 epilogue.
        for (int l = 0; l < 16; ++l) {
            os << "pe=" << l << " op=CVT53 in=stream:A,stream:B\n";
        }
        for (int l = 0; l < 16; ++l) {
            os << "pe=" << 16 + l << " op=AD24 in=" << l << ',' << l << '\n';
        }
        int next = 32;
        int level_base = 16;
        for (int width = 16; width > 1; width /= 2) {
            for (int j = 0; j < width / 2; ++j) {
                os << "pe=" << next << " op=AD24 in=" << level_base + 2 * j << ','
                   << level_base + 2 * j + 1 << '\n';
                ++next;
            }
            level_base += width;
        }
        os << "pe=47 op=MOVE in=46\n";
        os << "pe=48 op=AD24 in=46,47\n";
        os << "pe=49 op=FMUL32 in=stream:A,stream:B\n";
        os << "pe=50 op=FMUL32 in=48,49\n";
    }
    return os.str();
}

const kernel_mapping& default_mapping(kernel_tag kernel) {
    static const kernel_mapping q8 = parse_mapping(default_mapping_text(kernel_tag::q8_0), kernel_tag::q8_0);
    static const kernel_mapping q3 = parse_mapping(default_mapping_text(kernel_tag::q3_k), kernel_tag::q3_k);
    return kernel == kernel_tag::q8_0 ? q8 : q3;
}

// --- pipeline interpreter --------------------------------------------------------

namespace {

// Per-firing evaluation of a mapping over word/scale streams. Stage value
// lists are reused across firings.
class pipeline_executor {
public:
    explicit pipeline_executor(const kernel_mapping& m) : m_(m) {
        m_.validate();
        words_per_block_ = (m_.kernel == kernel_tag::q8_0) ? 4 : 32;
        blocks_per_firing_ = m_.blocks_per_firing();

        int leaf_ordinal = 0;
        int scale_ordinal = 0;
        slots_.resize(m_.stages.size());
        for (size_t i = 0; i < m_.stages.size(); ++i) {
            const auto& st = m_.stages[i];
            if (st.op == pe_op::sml8 || st.op == pe_op::cvt53) {
                leaf_ordinal_.push_back(leaf_ordinal++);
            } else {
                leaf_ordinal_.push_back(-1);
            }
            const bool is_scale = st.op == pe_op::fmul32 && st.inputs.size() == 2 &&
                                  st.inputs[0].source == stage_input::kind::stream_a &&
                                  st.inputs[1].source == stage_input::kind::stream_b;
            scale_ordinal_.push_back(is_scale ? scale_ordinal++ : -1);
        }
        words_per_leaf_ = blocks_per_firing_ * words_per_block_ / leaf_ordinal;
        outputs_ = m_.output_stages();
    }

    int blocks_per_firing() const { return blocks_per_firing_; }

    // words_a/words_b hold this firing's quant words (blocks consecutive),
    // scale_a/scale_b one f32 per block present. Appends the per-block f32
    // contributions, in block order, to acc.
    void fire(std::span<const word64> words_a, std::span<const word64> words_b,
              std::span<const float> scale_a, std::span<const float> scale_b, float& acc) {
        for (size_t i = 0; i < m_.stages.size(); ++i) {
            const auto& st = m_.stages[i];
            auto& slot = slots_[i];
            slot.words.clear();
            slot.floats.clear();

            switch (st.op) {
                case pe_op::sml8:
                case pe_op::cvt53: {
                    const int o = leaf_ordinal_[i];
                    const auto in_a = stage_words(st.inputs[0], words_a, words_b);
                    const auto in_b = stage_words(st.inputs[1], words_a, words_b);
                    const size_t lo = size_t(o) * size_t(words_per_leaf_);
                    for (size_t t = lo; t < lo + size_t(words_per_leaf_); ++t) {
                        if (t >= in_a.size() || t >= in_b.size()) break;
                        slot.words.push_back(st.op == pe_op::sml8 ? op_sml8(in_a[t], in_b[t])
                                                                  : op_cvt53(in_a[t], in_b[t]));
                    }
                    break;
                }
                case pe_op::ad24: {
                    const auto& u = slots_[size_t(st.inputs[0].stage_id)].words;
                    const auto& v = slots_[size_t(st.inputs[1].stage_id)].words;
                    if (st.inputs[0].stage_id == st.inputs[1].stage_id) {
                        // pairing rank: folds consecutive outputs of one stage
                        for (size_t t = 0; t + 1 < u.size(); t += 2) {
                            slot.words.push_back(op_ad24(u[t], u[t + 1]));
                        }
                    } else {
                        for (size_t t = 0; t < std::min(u.size(), v.size()); ++t) {
                            slot.words.push_back(op_ad24(u[t], v[t]));
                        }
                    }
                    break;
                }
                case pe_op::move: {
                    if (st.inputs[0].source == stage_input::kind::stage) {
                        for (const word64& w : slots_[size_t(st.inputs[0].stage_id)].words) {
                            slot.words.push_back(op_move(w));
                        }
                    } else {
                        const auto src = (st.inputs[0].source == stage_input::kind::stream_a)
                                             ? words_a
                                             : words_b;
                        for (const word64& w : src) slot.words.push_back(op_move(w));
                    }
                    break;
                }
                case pe_op::fmul32: {
                    const int p = scale_ordinal_[i];
                    if (p >= 0) {
                        if (size_t(p) < scale_a.size()) {
                            slot.floats.push_back(op_fmul32(scale_a[size_t(p)], scale_b[size_t(p)]));
                        }
                    } else {
                        const auto& lhs = slots_[size_t(st.inputs[0].stage_id)];
                        const auto& rhs = slots_[size_t(st.inputs[1].stage_id)];
                        const size_t n = std::min(value_count(lhs), value_count(rhs));
                        for (size_t t = 0; t < n; ++t) {
                            slot.floats.push_back(op_fmul32(value_f32(lhs, t), value_f32(rhs, t)));
                        }
                    }
                    break;
                }
            }
        }
        for (int id : outputs_) {
            for (float v : slots_[size_t(id)].floats) acc += v;
        }
    }

private:
    struct slot {
        std::vector<word64> words;
        std::vector<float> floats;
    };

    std::span<const word64> stage_words(const stage_input& in, std::span<const word64> words_a,
                                        std::span<const word64> words_b) const {
        switch (in.source) {
            case stage_input::kind::stream_a: return words_a;
            case stage_input::kind::stream_b: return words_b;
            case stage_input::kind::stage: return slots_[size_t(in.stage_id)].words;
        }
        return {};
    }

    static size_t value_count(const slot& s) {
        return s.floats.empty() ? s.words.size() : s.floats.size();
    }
    static float value_f32(const slot& s, size_t t) {
        return s.floats.empty() ? int24_to_f32(s.words[t], 0) : s.floats[t];
    }

    const kernel_mapping& m_;
    int words_per_block_ = 0;
    int blocks_per_firing_ = 0;
    int words_per_leaf_ = 0;
    std::vector<int> leaf_ordinal_;
    std::vector<int> scale_ordinal_;
    std::vector<int> outputs_;
    std::vector<slot> slots_;
};

word64 pack_q8_lanes(const int8_t* q) {
    word64 w;
    for (int j = 0; j < 8; ++j) {
        w.bits |= uint64_t(uint8_t(q[j])) << (8 * j);
    }
    return w;
}

// Leaf stages of q8_0 mappings may read the stream ports (MOVE stages),
// whose word lists are way-swapped. Swapping both operands of SML8 swaps its
// two way partials symmetrically, and the way-combine at the end of each
// group sums both ways, so the block partial is unchanged.

} // namespace

float q8_0_dot(std::span<const block_q8_0> a, std::span<const block_q8_0> b,
               const kernel_mapping& mapping) {
    if (mapping.kernel != kernel_tag::q8_0) throw config_error("q8_0_dot: mapping is not a q8_0 mapping");
    if (a.size() != b.size()) throw shape_error("q8_0_dot: sequence length mismatch");

    pipeline_executor exec(mapping);
    const size_t bpf = size_t(exec.blocks_per_firing());

    std::vector<word64> wa(bpf * 4), wb(bpf * 4);
    std::vector<float> sa(bpf), sb(bpf);

    float acc = 0.0f;
    for (size_t start = 0; start < a.size(); start += bpf) {
        const size_t count = std::min(bpf, a.size() - start);
        wa.resize(count * 4);
        wb.resize(count * 4);
        sa.resize(count);
        sb.resize(count);
        for (size_t n = 0; n < count; ++n) {
            for (int w = 0; w < 4; ++w) {
                wa[n * 4 + size_t(w)] = pack_q8_lanes(a[start + n].q.data() + 8 * w);
                wb[n * 4 + size_t(w)] = pack_q8_lanes(b[start + n].q.data() + 8 * w);
            }
            sa[n] = fp16_to_f32(a[start + n].d);
            sb[n] = fp16_to_f32(b[start + n].d);
        }
        exec.fire(wa, wb, sa, sb, acc);
    }
    return acc;
}

float q3_k_dot(std::span<const repacked_q3_k> w, std::span<const block_q8_k> a,
               const kernel_mapping& mapping) {
    if (mapping.kernel != kernel_tag::q3_k) throw config_error("q3_k_dot: mapping is not a q3_k mapping");
    if (w.size() != a.size()) throw shape_error("q3_k_dot: sequence length mismatch");

    pipeline_executor exec(mapping);
    const size_t bpf = size_t(exec.blocks_per_firing());

    std::vector<word64> wa(bpf * 32), wb(bpf * 32);
    std::vector<float> sa(bpf), sb(bpf);

    float acc = 0.0f;
    for (size_t start = 0; start < w.size(); start += bpf) {
        const size_t count = std::min(bpf, w.size() - start);
        wa.resize(count * 32);
        wb.resize(count * 32);
        sa.resize(count);
        sb.resize(count);
        for (size_t n = 0; n < count; ++n) {
            for (int i = 0; i < 32; ++i) {
                wa[n * 32 + size_t(i)] = word64{w[start + n].words[size_t(i)]};
                wb[n * 32 + size_t(i)] = pack_q8_lanes(a[start + n].q.data() + 8 * i);
            }
            sa[n] = fp16_to_f32(w[start + n].d);
            sb[n] = a[start + n].d;
        }
        exec.fire(wa, wb, sa, sb, acc);
    }
    return acc;
}

std::vector<float> matvec(const quantized_tensor& w, const quantized_tensor& x,
                          const kernel_mapping& mapping, int lanes) {
    if (lanes < 1 || lanes > 8) throw shape_error("matvec: lanes must be in [1, 8]");
    if (x.rows != 1) throw shape_error("matvec: activation tensor must have one row");
    if (x.cols != w.cols) {
        throw shape_error("matvec: weight cols " + std::to_string(w.cols) +
                          " != activation cols " + std::to_string(x.cols));
    }

    const int64_t m = int64_t(w.rows);
    std::vector<float> out(size_t(m), 0.0f);
    std::exception_ptr row_error;

    if (w.type == dtype::q8_0) {
        if (x.type != dtype::q8_0) throw shape_error("matvec: q8_0 weights need q8_0 activations");
        if (mapping.kernel != kernel_tag::q8_0) throw config_error("matvec: mapping/kernel mismatch");
        const auto xrow = x.row<block_q8_0>(0);
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < m; ++r) {
            try {
                out[size_t(r)] = q8_0_dot(w.row<block_q8_0>(size_t(r)), xrow, mapping);
            } catch (...) {
#pragma omp critical
                if (!row_error) row_error = std::current_exception();
            }
        }
    } else if (w.type == dtype::q3_k_repacked) {
        if (x.type != dtype::q8_k) throw shape_error("matvec: q3_k weights need q8_k activations");
        if (mapping.kernel != kernel_tag::q3_k) throw config_error("matvec: mapping/kernel mismatch");
        const auto xrow = x.row<block_q8_k>(0);
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < m; ++r) {
            try {
                out[size_t(r)] = q3_k_dot(w.row<repacked_q3_k>(size_t(r)), xrow, mapping);
            } catch (...) {
#pragma omp critical
                if (!row_error) row_error = std::current_exception();
            }
        }
    } else {
        throw shape_error(std::string("matvec: unsupported weight dtype ") + dtype_name(w.type));
    }
    if (row_error) std::rethrow_exception(row_error);
    (void)lanes; // round-robin lane assignment does not affect the result
    return out;
}

std::vector<float> matmul(const quantized_tensor& w, const std::vector<quantized_tensor>& x_cols,
                          const kernel_mapping& mapping, int lanes) {
    std::vector<float> out(size_t(w.rows) * x_cols.size());
    for (size_t c = 0; c < x_cols.size(); ++c) {
        const auto col = matvec(w, x_cols[c], mapping, lanes);
        for (size_t r = 0; r < col.size(); ++r) {
            out[r * x_cols.size() + c] = col[r];
        }
    }
    return out;
}

} // namespace qcgla
