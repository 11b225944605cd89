#pragma once

#include <stdexcept>
#include <string>

namespace qcgla {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite or out-of-range numeric input.
struct invalid_input : error {
    using error::error;
};

// Dimension or sequence-length disagreement.
struct shape_error : error {
    using error::error;
};

// 24-bit integer addition left the representable range. Kernels are
// constructed so this cannot fire through their public entry points.
struct overflow24_error : error {
    using error::error;
};

// Operand violates an instruction's field layout (e.g. nonzero pad bits).
struct invalid_operand : error {
    using error::error;
};

// Mapping/kernel/config mismatch.
struct config_error : error {
    using error::error;
};

// Malformed input file; carries a 1-based line number when known.
struct parse_error : error {
    explicit parse_error(const std::string& msg, int line = 0)
        : error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
          line_number(line) {}
    int line_number;
};

struct io_error : error {
    using error::error;
};

} // namespace qcgla
