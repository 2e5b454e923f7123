#pragma once

// Report rendering: method-vs-baseline comparison tables with significance
// marks, and static tables computed from user-supplied per-sequence tracking
// error files and per-class detection AP files.

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "indrop/metrics.hpp"
#include "indrop/stats.hpp"

namespace indrop::report {

inline std::string format_pct(double pct) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f%%", pct);
    return buf;
}

// Relative improvement of treated over baseline, rendered to one decimal.
inline std::string format_gain_pct(double baseline, double treated, bool lower_is_better) {
    return format_pct(metrics::relative_gain(baseline, treated, lower_is_better));
}

namespace detail {

inline std::string format_mean_std(const stats::MetricAggregate& a) {
    char buf[96];
    if (a.single_run)
        std::snprintf(buf, sizeof(buf), "%.4f (single run)", a.mean);
    else
        std::snprintf(buf, sizeof(buf), "%.4f +/- %.4f (n=%zu)", a.mean, a.stddev, a.n);
    return buf;
}

inline std::string render_table(const std::vector<std::vector<std::string>>& cells) {
    std::vector<std::size_t> widths;
    for (const auto& row : cells) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t i = 0; i < row.size(); ++i)
            widths[i] = std::max(widths[i], row[i].size());
    }
    std::string s;
    for (const auto& row : cells) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            s += row[i];
            if (i + 1 < row.size()) s += std::string(widths[i] - row[i].size() + 2, ' ');
        }
        s += '\n';
    }
    return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(where + ": bad number '" + s + "'");
    }
}

// Lines of a CSV body after validating the exact header; strips CR endings.
inline std::vector<std::vector<std::string>> csv_rows(const std::string& text,
                                                      const std::string& expected_header,
                                                      const std::string& what) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(what + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header)
        throw std::runtime_error(what + ": expected header '" + expected_header + "', got '" +
                                 line + "'");
    const std::size_t ncols = split_csv_line(expected_header).size();
    std::vector<std::vector<std::string>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != ncols)
            throw std::runtime_error(what + ": line " + std::to_string(lineno) + ": expected " +
                                     std::to_string(ncols) + " fields, got " +
                                     std::to_string(fields.size()));
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace detail

// --- method comparison -----------------------------------------------------------

inline std::string render_comparison_text(const std::vector<stats::ComparisonRow>& rows,
                                          double alpha) {
    if (rows.empty()) return "no comparisons available\n";
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"metric", "baseline", "treated", "baseline value", "treated value", "gain",
                     "p"});
    char buf[64];
    for (const auto& r : rows) {
        std::vector<std::string> c(7);
        c[0] = r.metric;
        c[1] = r.baseline_method;
        c[2] = r.treated_method;
        c[3] = detail::format_mean_std(r.baseline);
        c[4] = detail::format_mean_std(r.treated);
        std::snprintf(buf, sizeof(buf), "%+.1f%%", r.relative_gain_pct);
        c[5] = buf;
        if (r.baseline.single_run || r.treated.single_run) {
            c[6] = "n/a";
        } else {
            std::snprintf(buf, sizeof(buf), "%.4g%s", r.wmw.p_value,
                          r.wmw.significant ? " *" : "");
            c[6] = buf;
        }
        cells.push_back(std::move(c));
    }
    std::string s = detail::render_table(cells);
    std::snprintf(buf, sizeof(buf), "%g", alpha);
    s += "\n* p < ";
    s += buf;
    s += " under the exact two-sided Wilcoxon-Mann-Whitney test; the mark\n"
         "  follows the two-sided p-value and does not assert a direction.\n";
    return s;
}

inline std::string render_comparison_csv(const std::vector<stats::ComparisonRow>& rows) {
    std::string s =
        "metric,baseline_method,treated_method,baseline_mean,baseline_stddev,baseline_n,"
        "treated_mean,treated_stddev,treated_n,relative_gain_pct,lower_is_better,u,p_value,"
        "significant\n";
    char buf[64];
    const auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        const bool single = r.baseline.single_run || r.treated.single_run;
        s += r.metric + ',' + r.baseline_method + ',' + r.treated_method + ',';
        s += num(r.baseline.mean) + ',' + num(r.baseline.stddev) + ',' +
             std::to_string(r.baseline.n) + ',';
        s += num(r.treated.mean) + ',' + num(r.treated.stddev) + ',' +
             std::to_string(r.treated.n) + ',';
        s += num(r.relative_gain_pct) + ',';
        s += r.lower_is_better ? "yes," : "no,";
        s += single ? "," : num(r.wmw.u) + ',';
        s += single ? "," : num(r.wmw.p_value) + ',';
        s += single ? "single_run" : (r.wmw.significant ? "yes" : "no");
        s += '\n';
    }
    return s;
}

// --- tracking error table -----------------------------------------------------------
//
// Input: per-sequence errors, one row per (sequence, occlusion bucket, method).
// Output: per-bucket mean errors per method plus relative gain against the
// first method appearing in the file. Means are plain averages over the rows
// that fall in a bucket.

constexpr const char* kTrackingHeader =
    "sequence,occlusion_bucket,method,rotation_error_deg,translation_error_mm";

struct TrackingRow {
    std::string bucket;
    std::string method;
    double rotation_mean = 0.0;
    double translation_mean = 0.0;
    std::size_t n = 0;
    std::string rotation_gain;     // empty for the baseline method
    std::string translation_gain;  // empty for the baseline method
};

inline std::vector<TrackingRow> tracking_table(const std::string& csv_text) {
    const auto rows = detail::csv_rows(csv_text, kTrackingHeader, "tracking");
    if (rows.empty()) throw std::runtime_error("tracking: no data rows");
    std::vector<std::string> bucket_order, method_order;
    std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>,
                                                            std::vector<double>>>
        cells;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& f = rows[i];
        const std::string& bucket = f[1];
        const std::string& method = f[2];
        const std::string where = "tracking: line " + std::to_string(i + 2);
        const double rot = detail::parse_number(f[3], where);
        const double tr = detail::parse_number(f[4], where);
        if (std::find(bucket_order.begin(), bucket_order.end(), bucket) == bucket_order.end())
            bucket_order.push_back(bucket);
        if (std::find(method_order.begin(), method_order.end(), method) == method_order.end())
            method_order.push_back(method);
        auto& cell = cells[{bucket, method}];
        cell.first.push_back(rot);
        cell.second.push_back(tr);
    }
    const std::string& baseline = method_order.front();
    const auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    std::vector<TrackingRow> out;
    for (const auto& bucket : bucket_order) {
        const auto base_it = cells.find({bucket, baseline});
        for (const auto& method : method_order) {
            const auto it = cells.find({bucket, method});
            if (it == cells.end()) continue;
            TrackingRow r;
            r.bucket = bucket;
            r.method = method;
            r.rotation_mean = mean(it->second.first);
            r.translation_mean = mean(it->second.second);
            r.n = it->second.first.size();
            if (method != baseline && base_it != cells.end()) {
                r.rotation_gain = format_gain_pct(mean(base_it->second.first), r.rotation_mean,
                                                  /*lower_is_better=*/true);
                r.translation_gain = format_gain_pct(mean(base_it->second.second),
                                                     r.translation_mean,
                                                     /*lower_is_better=*/true);
            }
            out.push_back(std::move(r));
        }
    }
    return out;
}

inline std::string render_tracking_text(const std::vector<TrackingRow>& rows) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"occlusion", "method", "rotation (deg)", "gain", "translation (mm)", "gain",
                     "n"});
    char buf[64];
    for (const auto& r : rows) {
        std::vector<std::string> c(7);
        c[0] = r.bucket;
        c[1] = r.method;
        std::snprintf(buf, sizeof(buf), "%.1f", r.rotation_mean);
        c[2] = buf;
        c[3] = r.rotation_gain.empty() ? "-" : r.rotation_gain;
        std::snprintf(buf, sizeof(buf), "%.1f", r.translation_mean);
        c[4] = buf;
        c[5] = r.translation_gain.empty() ? "-" : r.translation_gain;
        c[6] = std::to_string(r.n);
        cells.push_back(std::move(c));
    }
    std::string s = detail::render_table(cells);
    s += "\ngains are relative to the first method listed; lower error is better.\n";
    return s;
}

// --- detection AP table -------------------------------------------------------------
//
// Input: per-class average precision, one row per (method, class). Output:
// mAP per method plus relative gain against the first method in the file.

constexpr const char* kDetectionHeader = "method,class,ap";

struct DetectionRow {
    std::string method;
    double map = 0.0;
    std::size_t classes = 0;
    std::string gain;  // empty for the baseline method
};

inline std::vector<DetectionRow> detection_table(const std::string& csv_text) {
    const auto rows = detail::csv_rows(csv_text, kDetectionHeader, "detection");
    if (rows.empty()) throw std::runtime_error("detection: no data rows");
    std::vector<std::string> method_order;
    std::map<std::string, std::vector<double>> aps;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& f = rows[i];
        const std::string where = "detection: line " + std::to_string(i + 2);
        const double ap = detail::parse_number(f[2], where);
        if (ap < 0.0 || ap > 1.0) throw std::runtime_error(where + ": AP outside [0, 1]");
        if (std::find(method_order.begin(), method_order.end(), f[0]) == method_order.end())
            method_order.push_back(f[0]);
        aps[f[0]].push_back(ap);
    }
    std::vector<DetectionRow> out;
    double baseline_map = 0.0;
    for (const auto& method : method_order) {
        const auto& v = aps[method];
        DetectionRow r;
        r.method = method;
        r.classes = v.size();
        for (double ap : v) r.map += ap;
        r.map /= static_cast<double>(v.size());
        if (method == method_order.front())
            baseline_map = r.map;
        else
            r.gain = format_gain_pct(baseline_map, r.map, /*lower_is_better=*/false);
        out.push_back(std::move(r));
    }
    return out;
}

inline std::string render_detection_text(const std::vector<DetectionRow>& rows) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"method", "mAP", "gain", "classes"});
    char buf[64];
    for (const auto& r : rows) {
        std::vector<std::string> c(4);
        c[0] = r.method;
        std::snprintf(buf, sizeof(buf), "%.3f", r.map);
        c[1] = buf;
        c[2] = r.gain.empty() ? "-" : r.gain;
        c[3] = std::to_string(r.classes);
        cells.push_back(std::move(c));
    }
    std::string s = detail::render_table(cells);
    s += "\ngains are relative to the first method listed; higher mAP is better.\n";
    return s;
}

}  // namespace indrop::report
