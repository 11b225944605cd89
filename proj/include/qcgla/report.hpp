#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qcgla {

// Deterministic numeric formatting for CSV/JSON/SVG output.
std::string fmt_num(double v);
std::string fmt_num(uint64_t v);

// Schema-stable CSV: fixed header order, no quoting (fields never contain
// commas).
void write_csv(std::ostream& os, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Minimal line chart (markers on a polyline with axes and tick labels);
// bars when `bars` is true.
struct chart_series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

void write_svg_chart(std::ostream& os, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<chart_series>& series,
                     bool bars = false);

} // namespace qcgla
