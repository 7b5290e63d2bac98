// Minimal SVG chart writer for the experiment reports: line charts with
// optional error bars, and bar charts. No external dependencies.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "numprobe/common.hpp"

namespace numprobe {

struct ChartSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> err;  // optional, half-length of the error bar
};

namespace svg_detail {

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % 10];
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

struct Frame {
    double width = 640, height = 420;
    double left = 64, right = 24, top = 40, bottom = 52;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline void open_chart(std::string& s, const Frame& f, const std::string& title, const std::string& xlabel,
                       const std::string& ylabel) {
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(f.width) + "\" height=\"" +
         num(f.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(f.width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + title +
         "</text>\n";
    s += "<text x=\"" + num(f.width / 2) + "\" y=\"" + num(f.height - 10) + "\" text-anchor=\"middle\">" +
         xlabel + "</text>\n";
    s += "<text x=\"14\" y=\"" + num(f.height / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         num(f.height / 2) + ")\">" + ylabel + "</text>\n";
    // frame + ticks
    s += "<rect x=\"" + num(f.left) + "\" y=\"" + num(f.top) + "\" width=\"" + num(f.width - f.left - f.right) +
         "\" height=\"" + num(f.height - f.top - f.bottom) + "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double ty = f.y0 + (f.y1 - f.y0) * i / 4.0;
        s += "<line x1=\"" + num(f.left - 4) + "\" y1=\"" + num(f.py(ty)) + "\" x2=\"" + num(f.left) +
             "\" y2=\"" + num(f.py(ty)) + "\" stroke=\"#444\"/>\n";
        s += "<text x=\"" + num(f.left - 8) + "\" y=\"" + num(f.py(ty) + 4) + "\" text-anchor=\"end\">" +
             num(ty) + "</text>\n";
        const double tx = f.x0 + (f.x1 - f.x0) * i / 4.0;
        s += "<line x1=\"" + num(f.px(tx)) + "\" y1=\"" + num(f.height - f.bottom) + "\" x2=\"" +
             num(f.px(tx)) + "\" y2=\"" + num(f.height - f.bottom + 4) + "\" stroke=\"#444\"/>\n";
        s += "<text x=\"" + num(f.px(tx)) + "\" y=\"" + num(f.height - f.bottom + 18) +
             "\" text-anchor=\"middle\">" + num(tx) + "</text>\n";
    }
}

}  // namespace svg_detail

inline std::string render_line_chart(const std::string& title, const std::string& xlabel,
                                     const std::string& ylabel, const std::vector<ChartSeries>& series) {
    using namespace svg_detail;
    Frame f;
    f.x0 = 1e300;
    f.x1 = -1e300;
    f.y0 = 1e300;
    f.y1 = -1e300;
    for (const auto& s : series) {
        for (double v : s.x) {
            f.x0 = std::min(f.x0, v);
            f.x1 = std::max(f.x1, v);
        }
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            const double e = i < s.err.size() ? s.err[i] : 0.0;
            f.y0 = std::min(f.y0, s.y[i] - e);
            f.y1 = std::max(f.y1, s.y[i] + e);
        }
    }
    if (f.x0 >= f.x1) f.x1 = f.x0 + 1;
    if (f.y0 >= f.y1) f.y1 = f.y0 + 1;
    const double pad = 0.05 * (f.y1 - f.y0);
    f.y0 = std::min(0.0, f.y0 - pad);
    f.y1 += pad;
    std::string out;
    open_chart(out, f, title, xlabel, ylabel);
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = palette(si);
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i)
            pts += num(f.px(s.x[i])) + "," + num(f.py(s.y[i])) + " ";
        out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            out += "<circle cx=\"" + num(f.px(s.x[i])) + "\" cy=\"" + num(f.py(s.y[i])) +
                   "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
            if (i < s.err.size() && s.err[i] > 0.0) {
                out += "<line x1=\"" + num(f.px(s.x[i])) + "\" y1=\"" + num(f.py(s.y[i] - s.err[i])) +
                       "\" x2=\"" + num(f.px(s.x[i])) + "\" y2=\"" + num(f.py(s.y[i] + s.err[i])) +
                       "\" stroke=\"" + color + "\"/>\n";
            }
        }
        if (!s.label.empty()) {
            const double ly = f.top + 14 + 14 * static_cast<double>(si);
            out += "<line x1=\"" + num(f.width - f.right - 110) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
                   num(f.width - f.right - 90) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color +
                   "\" stroke-width=\"2\"/>\n";
            out += "<text x=\"" + num(f.width - f.right - 84) + "\" y=\"" + num(ly) + "\">" + s.label +
                   "</text>\n";
        }
    }
    out += "</svg>\n";
    return out;
}

inline std::string render_bar_chart(const std::string& title, const std::string& xlabel,
                                    const std::string& ylabel, const std::vector<std::string>& categories,
                                    const std::vector<double>& values) {
    using namespace svg_detail;
    Frame f;
    f.x0 = 0;
    f.x1 = static_cast<double>(categories.size());
    f.y0 = 0;
    f.y1 = values.empty() ? 1.0 : *std::max_element(values.begin(), values.end());
    if (f.y1 <= 0) f.y1 = 1.0;
    f.y1 *= 1.08;
    std::string out;
    open_chart(out, f, title, xlabel, ylabel);
    const double bw = (f.width - f.left - f.right) / std::max<std::size_t>(1, categories.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = f.left + bw * static_cast<double>(i);
        const double y = f.py(values[i]);
        out += "<rect x=\"" + num(x + 0.12 * bw) + "\" y=\"" + num(y) + "\" width=\"" + num(0.76 * bw) +
               "\" height=\"" + num(f.height - f.bottom - y) + "\" fill=\"" + palette(0) + "\"/>\n";
        out += "<text x=\"" + num(x + 0.5 * bw) + "\" y=\"" + num(f.height - f.bottom + 18) +
               "\" text-anchor=\"middle\" font-size=\"10\">" + categories[i] + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace numprobe
