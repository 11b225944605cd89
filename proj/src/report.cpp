#include "qcgla/report.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace qcgla {

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string fmt_num(uint64_t v) {
    return std::to_string(v);
}

void write_csv(std::ostream& os, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) os << ',';
        os << header[i];
    }
    os << '\n';
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) os << ',';
            os << row[i];
        }
        os << '\n';
    }
}

void write_svg_chart(std::ostream& os, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<chart_series>& series,
                     bool bars) {
    const int width = 640, height = 420;
    const int ml = 70, mr = 20, mt = 40, mb = 50;
    const double pw = width - ml - mr;
    const double ph = height - mt - mb;

    double xmin = 0.0, xmax = 1.0, ymax = 1.0;
    bool first = true;
    for (const auto& s : series) {
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (first) {
                xmin = xmax = s.x[i];
                first = false;
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax <= 0.0) ymax = 1.0;
    ymax *= 1.05;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - y / ymax * ph; };
    static const char* palette[] = {"#2c6fbb", "#c23b22", "#3a923a", "#8c5e99"};

    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
       << "' font-family='sans-serif' font-size='12'>\n";
    os << "<text x='" << width / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
       << "</text>\n";
    os << "<line x1='" << ml << "' y1='" << mt + ph << "' x2='" << ml + pw << "' y2='" << mt + ph
       << "' stroke='black'/>\n";
    os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << mt + ph
       << "' stroke='black'/>\n";
    os << "<text x='" << ml + pw / 2 << "' y='" << height - 12 << "' text-anchor='middle'>"
       << x_label << "</text>\n";
    os << "<text x='16' y='" << mt + ph / 2 << "' text-anchor='middle' transform='rotate(-90 16 "
       << mt + ph / 2 << ")'>" << y_label << "</text>\n";

    for (int t = 0; t <= 4; ++t) {
        const double yv = ymax * t / 4.0;
        os << "<line x1='" << ml - 4 << "' y1='" << py(yv) << "' x2='" << ml + pw << "' y2='"
           << py(yv) << "' stroke='#ddd'/>\n";
        os << "<text x='" << ml - 8 << "' y='" << py(yv) + 4 << "' text-anchor='end'>"
           << fmt_num(yv) << "</text>\n";
    }

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = palette[si % 4];
        if (bars) {
            const double bw = pw / std::max<size_t>(1, s.x.size()) * 0.6;
            for (size_t i = 0; i < s.x.size(); ++i) {
                os << "<rect x='" << px(s.x[i]) - bw / 2 << "' y='" << py(s.y[i]) << "' width='"
                   << bw << "' height='" << mt + ph - py(s.y[i]) << "' fill='" << color << "'/>\n";
            }
        } else {
            os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
            for (size_t i = 0; i < s.x.size(); ++i) {
                os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
            }
            os << "'/>\n";
            for (size_t i = 0; i < s.x.size(); ++i) {
                os << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i])
                   << "' r='3' fill='" << color << "'/>\n";
            }
        }
        for (size_t i = 0; i < s.x.size(); ++i) {
            os << "<text x='" << px(s.x[i]) << "' y='" << mt + ph + 16
               << "' text-anchor='middle'>" << fmt_num(s.x[i]) << "</text>\n";
        }
        if (!s.name.empty()) {
            os << "<text x='" << ml + pw - 8 << "' y='" << mt + 14 + 16 * double(si)
               << "' text-anchor='end' fill='" << color << "'>" << s.name << "</text>\n";
        }
    }
    os << "</svg>\n";
}

} // namespace qcgla
