#pragma once

// Output helpers: fixed-significance decimal numbers, JSON serialization with the same
// number format, long-format CSV, and a minimal SVG heatmap.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nes/errors.hpp"

namespace nes {

inline constexpr int kSignificantDigits = 12;

/// Decimal notation (never exponent form) with 12 significant digits and trailing zeros trimmed.
inline std::string format_number(double x, int digits = kSignificantDigits) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (x == 0) return "0";
    const int mag = static_cast<int>(std::floor(std::log10(std::abs(x))));
    const int decimals = std::clamp(digits - 1 - mag, 0, 340);
    std::vector<char> buf(static_cast<std::size_t>(std::max(mag, 0) + decimals + 8));
    std::snprintf(buf.data(), buf.size(), "%.*f", decimals, x);
    std::string s(buf.data());
    if (s.find('.') != std::string::npos) {
        s.erase(s.find_last_not_of('0') + 1);
        if (s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    return s;
}

namespace detail {

inline void write_json(std::ostream& os, const nlohmann::json& j, int indent, int level) {
    const std::string pad(static_cast<std::size_t>(indent * (level + 1)), ' ');
    const std::string close_pad(static_cast<std::size_t>(indent * level), ' ');
    const char* nl = indent > 0 ? "\n" : "";
    switch (j.type()) {
    case nlohmann::json::value_t::object: {
        if (j.empty()) {
            os << "{}";
            return;
        }
        os << '{' << nl;
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) os << ',' << nl;
            first = false;
            os << pad << nlohmann::json(it.key()).dump() << (indent > 0 ? ": " : ":");
            write_json(os, it.value(), indent, level + 1);
        }
        os << nl << close_pad << '}';
        return;
    }
    case nlohmann::json::value_t::array: {
        if (j.empty()) {
            os << "[]";
            return;
        }
        const bool scalars = std::all_of(j.begin(), j.end(), [](const auto& e) { return e.is_primitive(); });
        if (scalars) {
            os << '[';
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) os << (indent > 0 ? ", " : ",");
                write_json(os, j[i], indent, level + 1);
            }
            os << ']';
            return;
        }
        os << '[' << nl;
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i) os << ',' << nl;
            os << pad;
            write_json(os, j[i], indent, level + 1);
        }
        os << nl << close_pad << ']';
        return;
    }
    case nlohmann::json::value_t::number_float: {
        const double x = j.get<double>();
        if (std::isfinite(x)) os << format_number(x);
        else os << "null";
        return;
    }
    default:
        os << j.dump();
    }
}

}  // namespace detail

/// Serializes JSON with every floating-point number through format_number; non-finite values become null.
inline std::string dump_json(const nlohmann::json& j, int indent = 2) {
    std::ostringstream os;
    detail::write_json(os, j, indent, 0);
    return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DomainError("cannot open output file: " + path);
    f << content;
    if (!f) throw DomainError("failed writing output file: " + path);
}

/// CSV table whose first line is "# config: <compact resolved config>".
inline std::string csv_with_config(const nlohmann::json& config, const std::vector<std::string>& header,
                                   const std::vector<std::vector<double>>& rows) {
    std::ostringstream os;
    os << "# config: " << dump_json(config, 0) << '\n';
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_number(r[i]);
        os << '\n';
    }
    return os.str();
}

struct HeatmapSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::string value_label;
    std::vector<double> x;                  // column coordinates
    std::vector<double> y;                  // row coordinates
    std::vector<std::vector<double>> z;     // z[row][col]
    double z_min = 0, z_max = 1;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

// Linear blue-to-yellow ramp.
inline std::string ramp(double t) {
    if (!std::isfinite(t)) return "#bbbbbb";
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(40 + t * (250 - 40)));
    const int g = static_cast<int>(std::lround(40 + t * (230 - 40)));
    const int b = static_cast<int>(std::lround(150 + t * (40 - 150)));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace detail

/// Standalone SVG heatmap with labeled axes and a color bar.
inline std::string heatmap_svg(const HeatmapSpec& h) {
    const double left = 90, top = 40, cell_w_total = 480, cell_h_total = 360, bar_w = 18;
    const double width = left + cell_w_total + 110, height = top + cell_h_total + 70;
    const std::size_t nx = std::max<std::size_t>(h.x.size(), 1), ny = std::max<std::size_t>(h.y.size(), 1);
    const double cw = cell_w_total / static_cast<double>(nx), ch = cell_h_total / static_cast<double>(ny);
    const double span = h.z_max > h.z_min ? h.z_max - h.z_min : 1.0;
    using detail::xml_escape;

    std::ostringstream os;
    os << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << width << R"(" height=")" << height
       << R"(" font-family="sans-serif" font-size="11">)" << '\n';
    os << R"(<text x=")" << width / 2 << R"(" y="20" text-anchor="middle" font-size="14">)" << xml_escape(h.title)
       << "</text>\n";
    for (std::size_t r = 0; r < h.z.size(); ++r) {
        for (std::size_t c = 0; c < h.z[r].size(); ++c) {
            // Row 0 at the bottom.
            const double x = left + static_cast<double>(c) * cw;
            const double y = top + cell_h_total - static_cast<double>(r + 1) * ch;
            os << R"(<rect x=")" << x << R"(" y=")" << y << R"(" width=")" << cw << R"(" height=")" << ch
               << R"(" fill=")" << detail::ramp((h.z[r][c] - h.z_min) / span) << R"("/>)" << '\n';
        }
    }
    const std::size_t xticks = std::min<std::size_t>(h.x.size(), 6), yticks = std::min<std::size_t>(h.y.size(), 6);
    for (std::size_t t = 0; t < xticks; ++t) {
        const std::size_t c = xticks == 1 ? 0 : t * (h.x.size() - 1) / (xticks - 1);
        const double x = left + (static_cast<double>(c) + 0.5) * cw;
        os << R"(<text x=")" << x << R"(" y=")" << top + cell_h_total + 16 << R"(" text-anchor="middle">)"
           << format_number(h.x[c], 4) << "</text>\n";
    }
    for (std::size_t t = 0; t < yticks; ++t) {
        const std::size_t r = yticks == 1 ? 0 : t * (h.y.size() - 1) / (yticks - 1);
        const double y = top + cell_h_total - (static_cast<double>(r) + 0.5) * ch + 4;
        os << R"(<text x=")" << left - 6 << R"(" y=")" << y << R"(" text-anchor="end">)" << format_number(h.y[r], 4)
           << "</text>\n";
    }
    os << R"(<text x=")" << left + cell_w_total / 2 << R"(" y=")" << top + cell_h_total + 40
       << R"(" text-anchor="middle">)" << xml_escape(h.x_label) << "</text>\n";
    os << R"(<text x="20" y=")" << top + cell_h_total / 2 << R"(" text-anchor="middle" transform="rotate(-90 20 )"
       << top + cell_h_total / 2 << ")\">" << xml_escape(h.y_label) << "</text>\n";

    const double bx = left + cell_w_total + 20;
    const int steps = 50;
    for (int i = 0; i < steps; ++i) {
        const double y = top + cell_h_total * (1.0 - static_cast<double>(i + 1) / steps);
        os << R"(<rect x=")" << bx << R"(" y=")" << y << R"(" width=")" << bar_w << R"(" height=")"
           << cell_h_total / steps + 0.5 << R"(" fill=")" << detail::ramp((i + 0.5) / steps) << R"("/>)" << '\n';
    }
    os << R"(<text x=")" << bx + bar_w + 4 << R"(" y=")" << top + 8 << R"(">)" << format_number(h.z_max, 4)
       << "</text>\n";
    os << R"(<text x=")" << bx + bar_w + 4 << R"(" y=")" << top + cell_h_total << R"(">)" << format_number(h.z_min, 4)
       << "</text>\n";
    os << R"(<text x=")" << bx + bar_w / 2 << R"(" y=")" << top + cell_h_total + 40 << R"(" text-anchor="middle">)"
       << xml_escape(h.value_label) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

struct LinePlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<std::vector<double>> xs;  // one polyline per entry
    std::vector<std::vector<double>> ys;
    std::vector<std::string> names;
};

/// Standalone SVG with one polyline per series, axes scaled to the data range.
inline std::string line_plot_svg(const LinePlotSpec& p) {
    const double left = 80, top = 40, w = 520, h = 380;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (std::size_t s = 0; s < p.xs.size(); ++s)
        for (std::size_t i = 0; i < p.xs[s].size() && i < p.ys[s].size(); ++i) {
            if (!std::isfinite(p.xs[s][i]) || !std::isfinite(p.ys[s][i])) continue;
            x0 = std::min(x0, p.xs[s][i]);
            x1 = std::max(x1, p.xs[s][i]);
            y0 = std::min(y0, p.ys[s][i]);
            y1 = std::max(y1, p.ys[s][i]);
        }
    if (!(x1 > x0)) { x0 -= 1; x1 += 1; }
    if (!(y1 > y0)) { y0 -= 1; y1 += 1; }
    auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * w; };
    auto sy = [&](double y) { return top + h - (y - y0) / (y1 - y0) * h; };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    using detail::xml_escape;

    std::ostringstream os;
    os << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << left + w + 140 << R"(" height=")" << top + h + 60
       << R"(" font-family="sans-serif" font-size="11">)" << '\n';
    os << R"(<text x=")" << left + w / 2 << R"(" y="20" text-anchor="middle" font-size="14">)" << xml_escape(p.title)
       << "</text>\n";
    os << R"(<rect x=")" << left << R"(" y=")" << top << R"(" width=")" << w << R"(" height=")" << h
       << R"(" fill="none" stroke="#444"/>)" << '\n';
    for (std::size_t s = 0; s < p.xs.size(); ++s) {
        os << R"(<polyline fill="none" stroke-width="1" stroke=")" << colors[s % 6] << R"(" points=")";
        for (std::size_t i = 0; i < p.xs[s].size() && i < p.ys[s].size(); ++i)
            if (std::isfinite(p.xs[s][i]) && std::isfinite(p.ys[s][i]))
                os << sx(p.xs[s][i]) << ',' << sy(p.ys[s][i]) << ' ';
        os << R"("/>)" << '\n';
        if (s < p.names.size())
            os << R"(<text x=")" << left + w + 10 << R"(" y=")" << top + 14 + 16.0 * static_cast<double>(s)
               << R"(" fill=")" << colors[s % 6] << R"(">)" << xml_escape(p.names[s]) << "</text>\n";
    }
    os << R"(<text x=")" << left << R"(" y=")" << top + h + 16 << R"(">)" << format_number(x0, 4) << "</text>\n";
    os << R"(<text x=")" << left + w << R"(" y=")" << top + h + 16 << R"(" text-anchor="end">)" << format_number(x1, 4)
       << "</text>\n";
    os << R"(<text x=")" << left - 6 << R"(" y=")" << top + h << R"(" text-anchor="end">)" << format_number(y0, 4)
       << "</text>\n";
    os << R"(<text x=")" << left - 6 << R"(" y=")" << top + 10 << R"(" text-anchor="end">)" << format_number(y1, 4)
       << "</text>\n";
    os << R"(<text x=")" << left + w / 2 << R"(" y=")" << top + h + 40 << R"(" text-anchor="middle">)"
       << xml_escape(p.x_label) << "</text>\n";
    os << R"(<text x="20" y=")" << top + h / 2 << R"(" text-anchor="middle" transform="rotate(-90 20 )" << top + h / 2
       << ")\">" << xml_escape(p.y_label) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace nes
