#pragma once

// Multi-run aggregation and the exact two-sided Wilcoxon-Mann-Whitney test.
//
// The test uses mid-rank tie handling and enumerates every C(n+m, n)
// assignment of the pooled values to the first group, so p-values are exact
// for the small per-seed samples this library works with (n, m <= 12).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace indrop::stats {

struct WmwReport {
    double u = 0.0;        // U statistic of the first sample
    double p_value = 1.0;  // exact two-sided
    double alpha = 0.05;
    bool significant = false;
};

namespace detail {

// 1-based mid-ranks of the pooled sample.
inline std::vector<double> midranks(const std::vector<double>& pooled) {
    const std::size_t n = pooled.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>((i + 1) + (j + 1));  // average rank
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline std::uint64_t binomial(unsigned n, unsigned k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace detail

// Exact two-sided WMW test: U via mid-ranks, p = probability under the
// permutation null that |U' - nm/2| >= |U - nm/2|.
inline WmwReport wmw_test(const std::vector<double>& a, const std::vector<double>& b,
                          double alpha) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("wmw_test: empty sample");
    if (a.size() > 12 || b.size() > 12)
        throw std::invalid_argument("wmw_test: samples larger than 12 are outside the exact enumeration regime");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("wmw_test: alpha outside (0,1)");
    for (double x : a)
        if (!std::isfinite(x)) throw std::invalid_argument("wmw_test: non-finite value");
    for (double x : b)
        if (!std::isfinite(x)) throw std::invalid_argument("wmw_test: non-finite value");

    const unsigned n = static_cast<unsigned>(a.size());
    const unsigned m = static_cast<unsigned>(b.size());
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = detail::midranks(pooled);

    double rank_sum_a = 0.0;
    for (unsigned i = 0; i < n; ++i) rank_sum_a += ranks[i];
    const double u_obs = rank_sum_a - 0.5 * n * (n + 1);
    const double center = 0.5 * n * m;
    const double dev_obs = std::abs(u_obs - center);

    // enumerate all n-subsets of pooled positions
    std::vector<unsigned> comb(n);
    for (unsigned i = 0; i < n; ++i) comb[i] = i;
    const unsigned total_positions = n + m;
    std::uint64_t hits = 0;
    std::uint64_t count = 0;
    constexpr double kTieEps = 1e-9;  // rank sums are multiples of 0.5
    while (true) {
        double rs = 0.0;
        for (unsigned i = 0; i < n; ++i) rs += ranks[comb[i]];
        const double u = rs - 0.5 * n * (n + 1);
        if (std::abs(u - center) >= dev_obs - kTieEps) ++hits;
        ++count;
        // next combination, lexicographic
        int i = static_cast<int>(n) - 1;
        while (i >= 0 && comb[i] == total_positions - n + i) --i;
        if (i < 0) break;
        ++comb[i];
        for (unsigned j = static_cast<unsigned>(i) + 1; j < n; ++j)
            comb[j] = comb[j - 1] + 1;
    }
    if (count != detail::binomial(total_positions, n))
        throw std::logic_error("wmw_test: enumeration miscount");

    WmwReport rep;
    rep.u = u_obs;
    rep.p_value = static_cast<double>(hits) / static_cast<double>(count);
    rep.alpha = alpha;
    rep.significant = rep.p_value < alpha;
    return rep;
}

// One metric record per (experiment, seed) training run.
struct RunResult {
    std::string experiment;
    std::uint64_t seed = 0;
    std::string method;
    std::map<std::string, double> metrics;
    std::string config_hash;

    bool operator==(const RunResult&) const = default;
};

struct MetricAggregate {
    double mean = 0.0;
    double stddev = 0.0;  // sample std (n-1); 0 by convention when n == 1
    std::size_t n = 0;
    bool single_run = false;
    std::vector<double> values;  // per-seed, kept for WMW input
};

inline MetricAggregate aggregate_runs(const std::vector<RunResult>& results,
                                      const std::string& metric) {
    if (results.empty()) throw std::invalid_argument("aggregate_runs: no results");
    MetricAggregate agg;
    const std::string& exp_id = results.front().experiment;
    for (const auto& r : results) {
        if (r.experiment != exp_id)
            throw std::invalid_argument("aggregate_runs: mixed experiment ids ('" +
                                        exp_id + "' vs '" + r.experiment + "')");
        const auto it = r.metrics.find(metric);
        if (it == r.metrics.end())
            throw std::invalid_argument("aggregate_runs: metric '" + metric +
                                        "' missing from seed " + std::to_string(r.seed));
        agg.values.push_back(it->second);
    }
    // order-independent: aggregate over the sorted per-seed values
    std::vector<std::pair<std::uint64_t, double>> by_seed;
    for (std::size_t i = 0; i < results.size(); ++i)
        by_seed.emplace_back(results[i].seed, agg.values[i]);
    std::sort(by_seed.begin(), by_seed.end());
    agg.values.clear();
    for (const auto& [s, v] : by_seed) agg.values.push_back(v);

    agg.n = agg.values.size();
    double sum = 0.0;
    for (double v : agg.values) sum += v;
    agg.mean = sum / static_cast<double>(agg.n);
    if (agg.n == 1) {
        agg.stddev = 0.0;
        agg.single_run = true;
    } else {
        double ss = 0.0;
        for (double v : agg.values) ss += (v - agg.mean) * (v - agg.mean);
        agg.stddev = std::sqrt(ss / static_cast<double>(agg.n - 1));
    }
    return agg;
}

struct ComparisonRow {
    std::string metric;
    std::string baseline_method;
    std::string treated_method;
    MetricAggregate baseline;
    MetricAggregate treated;
    double relative_gain_pct = 0.0;
    bool lower_is_better = false;
    WmwReport wmw;
};

// Combines aggregation, relative gain and the WMW test into one table row.
// When either side has a single run there is no distribution to test, so the
// test is skipped and the row stays unmarked.
inline ComparisonRow compare_methods(const std::vector<RunResult>& baseline_runs,
                                     const std::vector<RunResult>& treated_runs,
                                     const std::string& metric, double alpha,
                                     bool lower_is_better) {
    ComparisonRow row;
    row.metric = metric;
    row.baseline = aggregate_runs(baseline_runs, metric);
    row.treated = aggregate_runs(treated_runs, metric);
    row.baseline_method = baseline_runs.front().method;
    row.treated_method = treated_runs.front().method;
    row.lower_is_better = lower_is_better;
    if (row.baseline.mean == 0.0)
        throw std::invalid_argument("compare_methods: zero baseline mean");
    row.relative_gain_pct = lower_is_better
        ? (row.baseline.mean - row.treated.mean) / row.baseline.mean * 100.0
        : (row.treated.mean - row.baseline.mean) / row.baseline.mean * 100.0;
    if (row.baseline.single_run || row.treated.single_run)
        row.wmw.alpha = alpha;
    else
        row.wmw = wmw_test(row.baseline.values, row.treated.values, alpha);
    return row;
}

}  // namespace indrop::stats
