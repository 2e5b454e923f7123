#pragma once

// Minimal SVG plotting for training curves and per-method metric summaries.
// Output is plain text SVG, deterministic for a given input, with no external
// renderer involved.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "indrop/results_io.hpp"
#include "indrop/stats.hpp"

namespace indrop::plot {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 16;
constexpr int kMarginTop = 32;
constexpr int kMarginBottom = 44;

constexpr const char* kPalette[8] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                     "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
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

inline std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string tick_label(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

struct Scale {
    double lo = 0.0, hi = 1.0;
    double px0 = 0.0, px1 = 1.0;
    double map(double v) const { return px0 + (v - lo) / (hi - lo) * (px1 - px0); }
};

inline Scale make_scale(double lo, double hi, double px0, double px1) {
    if (!(std::isfinite(lo) && std::isfinite(hi)))
        throw std::invalid_argument("plot: non-finite axis range");
    if (lo == hi) {  // degenerate range: pad to keep the mapping invertible
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = (hi - lo) * 0.05;
    return Scale{lo - pad, hi + pad, px0, px1};
}

inline void axes(std::string& svg, const Scale& sx, const Scale& sy, const std::string& x_label,
                 const std::string& y_label) {
    svg += "<rect x=\"" + num(sx.px0) + "\" y=\"" + num(sy.px1) + "\" width=\"" +
           num(sx.px1 - sx.px0) + "\" height=\"" + num(sy.px0 - sy.px1) +
           "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = sx.lo + (sx.hi - sx.lo) * i / 4.0;
        const double px = sx.map(fx);
        svg += "<line x1=\"" + num(px) + "\" y1=\"" + num(sy.px0) + "\" x2=\"" + num(px) +
               "\" y2=\"" + num(sy.px0 + 4) + "\" stroke=\"#333\"/>\n";
        svg += "<text x=\"" + num(px) + "\" y=\"" + num(sy.px0 + 18) +
               "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333\">" +
               xml_escape(tick_label(fx)) + "</text>\n";
        const double fy = sy.lo + (sy.hi - sy.lo) * i / 4.0;
        const double py = sy.map(fy);
        svg += "<line x1=\"" + num(sx.px0 - 4) + "\" y1=\"" + num(py) + "\" x2=\"" +
               num(sx.px0) + "\" y2=\"" + num(py) + "\" stroke=\"#333\"/>\n";
        svg += "<text x=\"" + num(sx.px0 - 8) + "\" y=\"" + num(py + 4) +
               "\" font-size=\"11\" text-anchor=\"end\" fill=\"#333\">" +
               xml_escape(tick_label(fy)) + "</text>\n";
    }
    svg += "<text x=\"" + num((sx.px0 + sx.px1) / 2) + "\" y=\"" +
           num(static_cast<double>(kHeight - 8)) +
           "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333\">" + xml_escape(x_label) +
           "</text>\n";
    svg += "<text x=\"14\" y=\"" + num((sy.px0 + sy.px1) / 2) +
           "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333\" transform=\"rotate(-90 14 " +
           num((sy.px0 + sy.px1) / 2) + ")\">" + xml_escape(y_label) + "</text>\n";
}

inline std::string header(const std::string& title) {
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(kWidth) + "\" height=\"" + std::to_string(kHeight) +
                      "\" viewBox=\"0 0 " + std::to_string(kWidth) + " " +
                      std::to_string(kHeight) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + std::to_string(kWidth / 2) +
           "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\" fill=\"#111\">" +
           xml_escape(title) + "</text>\n";
    return svg;
}

}  // namespace detail

inline std::string render_line_svg(const std::string& title, const std::vector<Series>& series,
                                   const std::string& x_label, const std::string& y_label) {
    if (series.empty()) throw std::invalid_argument("plot: no series");
    double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
    bool first = true;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            if (!(std::isfinite(x) && std::isfinite(y)))
                throw std::invalid_argument("plot: non-finite point");
            if (first) {
                xlo = xhi = x;
                ylo = yhi = y;
                first = false;
            }
            xlo = std::min(xlo, x);
            xhi = std::max(xhi, x);
            ylo = std::min(ylo, y);
            yhi = std::max(yhi, y);
        }
    if (first) throw std::invalid_argument("plot: no points");
    const detail::Scale sx =
        detail::make_scale(xlo, xhi, kMarginLeft, kWidth - kMarginRight);
    const detail::Scale sy =
        detail::make_scale(ylo, yhi, kHeight - kMarginBottom, kMarginTop);
    std::string svg = detail::header(title);
    detail::axes(svg, sx, sy, x_label, y_label);
    // one legend entry per distinct label, colored like its first series
    std::vector<std::string> legend;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        std::size_t color_index = 0;
        bool seen = false;
        for (std::size_t j = 0; j < legend.size(); ++j)
            if (legend[j] == s.label) {
                color_index = j;
                seen = true;
                break;
            }
        if (!seen) {
            color_index = legend.size();
            legend.push_back(s.label);
        }
        const char* color = kPalette[color_index % 8];
        std::string pts;
        for (const auto& [x, y] : s.points) {
            if (!pts.empty()) pts += ' ';
            pts += detail::num(sx.map(x)) + ',' + detail::num(sy.map(y));
        }
        svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
               "\" stroke-width=\"1.5\"/>\n";
    }
    for (std::size_t j = 0; j < legend.size(); ++j) {
        const double y = kMarginTop + 8 + 16.0 * static_cast<double>(j);
        svg += "<rect x=\"" + detail::num(kWidth - kMarginRight - 150) + "\" y=\"" +
               detail::num(y - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
               kPalette[j % 8] + "\"/>\n";
        svg += "<text x=\"" + detail::num(kWidth - kMarginRight - 136) + "\" y=\"" +
               detail::num(y) + "\" font-size=\"11\" fill=\"#333\">" +
               detail::xml_escape(legend[j]) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

struct Bar {
    std::string label;
    double mean = 0.0;
    double stddev = 0.0;
};

inline std::string render_bar_svg(const std::string& title, const std::vector<Bar>& bars,
                                  const std::string& y_label) {
    if (bars.empty()) throw std::invalid_argument("plot: no bars");
    double ylo = 0.0, yhi = 0.0;
    for (const auto& b : bars) {
        if (!(std::isfinite(b.mean) && std::isfinite(b.stddev)))
            throw std::invalid_argument("plot: non-finite bar");
        ylo = std::min(ylo, b.mean - b.stddev);
        yhi = std::max(yhi, b.mean + b.stddev);
    }
    const detail::Scale sy =
        detail::make_scale(ylo, yhi, kHeight - kMarginBottom, kMarginTop);
    const detail::Scale sx = detail::Scale{0.0, static_cast<double>(bars.size()),
                                           static_cast<double>(kMarginLeft),
                                           static_cast<double>(kWidth - kMarginRight)};
    std::string svg = detail::header(title);
    // y axis only; bar labels take the x axis
    for (int i = 0; i <= 4; ++i) {
        const double fy = sy.lo + (sy.hi - sy.lo) * i / 4.0;
        const double py = sy.map(fy);
        svg += "<line x1=\"" + detail::num(sx.px0 - 4) + "\" y1=\"" + detail::num(py) +
               "\" x2=\"" + detail::num(sx.px1) + "\" y2=\"" + detail::num(py) +
               "\" stroke=\"#ddd\"/>\n";
        svg += "<text x=\"" + detail::num(sx.px0 - 8) + "\" y=\"" + detail::num(py + 4) +
               "\" font-size=\"11\" text-anchor=\"end\" fill=\"#333\">" +
               detail::xml_escape(detail::tick_label(fy)) + "</text>\n";
    }
    const double base_y = sy.map(std::max(0.0, sy.lo));
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const auto& b = bars[i];
        const double slot0 = sx.map(static_cast<double>(i));
        const double slot1 = sx.map(static_cast<double>(i + 1));
        const double w = (slot1 - slot0) * 0.6;
        const double x0 = slot0 + (slot1 - slot0 - w) / 2;
        const double top = sy.map(b.mean);
        svg += "<rect x=\"" + detail::num(x0) + "\" y=\"" + detail::num(std::min(top, base_y)) +
               "\" width=\"" + detail::num(w) + "\" height=\"" +
               detail::num(std::fabs(base_y - top)) + "\" fill=\"" + kPalette[i % 8] +
               "\" fill-opacity=\"0.85\"/>\n";
        if (b.stddev > 0.0) {
            const double cx = x0 + w / 2;
            const double y1 = sy.map(b.mean - b.stddev);
            const double y2 = sy.map(b.mean + b.stddev);
            svg += "<line x1=\"" + detail::num(cx) + "\" y1=\"" + detail::num(y1) + "\" x2=\"" +
                   detail::num(cx) + "\" y2=\"" + detail::num(y2) + "\" stroke=\"#111\"/>\n";
            for (double yy : {y1, y2})
                svg += "<line x1=\"" + detail::num(cx - 5) + "\" y1=\"" + detail::num(yy) +
                       "\" x2=\"" + detail::num(cx + 5) + "\" y2=\"" + detail::num(yy) +
                       "\" stroke=\"#111\"/>\n";
        }
        svg += "<text x=\"" + detail::num(x0 + w / 2) + "\" y=\"" +
               detail::num(static_cast<double>(kHeight - kMarginBottom + 16)) +
               "\" font-size=\"10\" text-anchor=\"middle\" fill=\"#333\">" +
               detail::xml_escape(b.label) + "</text>\n";
    }
    svg += "<text x=\"14\" y=\"" + detail::num((sy.px0 + sy.px1) / 2) +
           "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333\" transform=\"rotate(-90 14 " +
           detail::num((sy.px0 + sy.px1) / 2) + ")\">" + detail::xml_escape(y_label) +
           "</text>\n";
    svg += "</svg>\n";
    return svg;
}

// Emits curve and bar plots for an output directory's results. Returns the
// paths written; an empty return means there was nothing to plot.
inline std::vector<std::string> write_plot_files(
    const std::string& dir, const std::string& experiment_id,
    const std::vector<results_io::CurveRecord>& curves,
    const std::vector<stats::RunResult>& results) {
    std::vector<std::string> written;
    const auto emit = [&](const std::string& name, const std::string& content) {
        const std::string path = dir + "/" + name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("plot: cannot open '" + path + "' for writing");
        os << content;
        if (!os) throw std::runtime_error("plot: write to '" + path + "' failed");
        written.push_back(path);
    };
    if (!curves.empty()) {
        std::vector<Series> series;
        for (const auto& c : curves) {
            Series s;
            s.label = c.method;
            for (const auto& [step, value] : c.points)
                s.points.emplace_back(static_cast<double>(step), value);
            if (!s.points.empty()) series.push_back(std::move(s));
        }
        if (!series.empty()) {
            std::stable_sort(series.begin(), series.end(),
                             [](const Series& a, const Series& b) { return a.label < b.label; });
            emit(experiment_id + "_curves.svg",
                 render_line_svg(experiment_id + ": training loss", series, "step", "loss"));
        }
    }
    if (!results.empty()) {
        std::set<std::string> metric_names;
        for (const auto& r : results)
            for (const auto& [k, v] : r.metrics)
                if (k != "run_index") metric_names.insert(k);
        std::vector<std::string> method_order;
        for (const auto& r : results)
            if (std::find(method_order.begin(), method_order.end(), r.method) ==
                method_order.end())
                method_order.push_back(r.method);
        for (const auto& metric : metric_names) {
            std::vector<Bar> bars;
            for (const auto& method : method_order) {
                std::vector<stats::RunResult> runs;
                for (const auto& r : results)
                    if (r.method == method && r.metrics.count(metric)) runs.push_back(r);
                if (runs.empty()) continue;
                const stats::MetricAggregate agg = stats::aggregate_runs(runs, metric);
                bars.push_back(Bar{method, agg.mean, agg.stddev});
            }
            if (!bars.empty())
                emit(experiment_id + "_bars_" + metric + ".svg",
                     render_bar_svg(experiment_id + ": " + metric, bars, metric));
        }
    }
    return written;
}

}  // namespace indrop::plot
