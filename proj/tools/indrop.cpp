// indrop: reproducible experiment runner for modality-dropout training.
//
//   indrop run    --config FILE [--out DIR] [--seed N] [--alpha X] [--jobs N]
//   indrop report [--out DIR] [--alpha X] [--baseline M] [--tracking F] [--detection F]
//   indrop plot   [--out DIR]
//
// When --out is omitted the directory is resolved from INDROP_OUT_ROOT.
// Exit codes: 0 success, 1 operational failure, 2 invalid config or usage,
// 3 run completed but some (method, seed) runs failed.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "indrop/experiments.hpp"
#include "indrop/plot.hpp"
#include "indrop/report.hpp"
#include "indrop/results_io.hpp"

namespace fs = std::filesystem;
using namespace indrop;

namespace {

std::string env_out_root() {
    const char* v = std::getenv("INDROP_OUT_ROOT");
    return v == nullptr ? std::string() : std::string(v);
}

// --out wins; otherwise $INDROP_OUT_ROOT[/experiment_id].
std::string resolve_out_dir(const std::string& out_flag, const std::string& experiment_id) {
    if (!out_flag.empty()) return out_flag;
    const std::string root = env_out_root();
    if (root.empty())
        throw std::runtime_error("no output directory: pass --out or set INDROP_OUT_ROOT");
    return experiment_id.empty() ? root : root + "/" + experiment_id;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int cmd_run(const std::string& config_path, const std::string& out_flag,
            std::optional<std::uint64_t> seed, std::optional<double> alpha, int jobs) {
    results_io::LoadedConfig loaded;
    std::string out_dir;
    try {
        loaded = results_io::load_config_file(config_path);
        if (seed) loaded.exp.master_seed = *seed;
        if (alpha) loaded.exp.alpha = *alpha;
        loaded.exp.validate();
        out_dir = resolve_out_dir(out_flag, loaded.exp.experiment_id);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    const experiments::ExperimentConfig& cfg = loaded.exp;
    try {
        fs::create_directories(out_dir);
        const results_io::LoadedData data = results_io::load_containers(cfg);
        experiments::DataOverride external;
        if (data.loaded) {
            if (cfg.task == experiments::Task::classification)
                external.cls = &data.cls;
            else
                external.haze = &data.haze;
        }
        const int n = cfg.num_seeds;
        const int workers = std::max(1, std::min(jobs, n));
        const std::string timestamp = results_io::iso8601_utc_now();
        std::vector<experiments::RunFragment> fragments(n);
        std::atomic<int> next{0};
        std::mutex io_mutex;
        // workers own disjoint run indices and disjoint .part files; the final
        // merge below is the directory's single writer
        const auto work = [&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                experiments::RunFragment frag;
                try {
                    frag = experiments::run_single_index(cfg, i, external);
                } catch (const std::exception& e) {
                    frag.run_index = i;
                    for (experiments::Method m : cfg.methods)
                        frag.errors.push_back({experiments::to_string(m), i,
                                               experiments::run_seed_for(cfg.master_seed, i),
                                               e.what()});
                }
                const std::string part =
                    out_dir + "/run" + std::to_string(i) + ".part.jsonl";
                results_io::write_results_jsonl(part, frag.results, frag.errors,
                                                cfg.experiment_id, cfg.fingerprint(), timestamp);
                {
                    const std::lock_guard<std::mutex> lock(io_mutex);
                    std::cout << "run " << i << ": " << frag.results.size() << " results, "
                              << frag.errors.size() << " errors\n";
                }
                fragments[static_cast<std::size_t>(i)] = std::move(frag);
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();

        experiments::MatrixOutput matrix =
            experiments::assemble_matrix(cfg, std::move(fragments));
        results_io::write_results_jsonl(out_dir + "/results.jsonl", matrix.results,
                                        matrix.errors, cfg.experiment_id, cfg.fingerprint(),
                                        timestamp);
        results_io::write_summary_csv(out_dir + "/summary.csv", matrix.results);
        results_io::write_curves_jsonl(out_dir + "/curves.jsonl", matrix.curves);
        results_io::write_manifest(out_dir + "/manifest.json", cfg, loaded.config_file_sha256,
                                   results_io::results_payload_hash(matrix.results));
        for (int i = 0; i < n; ++i)
            fs::remove(out_dir + "/run" + std::to_string(i) + ".part.jsonl");
        std::cout << "wrote " << out_dir << "/results.jsonl (" << matrix.results.size()
                  << " records)\n";
        if (!matrix.errors.empty()) {
            std::cerr << "warning: " << matrix.errors.size()
                      << " runs failed; summary marks the gaps\n";
            for (const auto& e : matrix.errors)
                std::cerr << "  " << e.method << " run " << e.run_index << ": " << e.message
                          << '\n';
            return 3;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

int cmd_report(const std::string& out_flag, std::optional<double> alpha_flag,
               std::string baseline, const std::string& tracking_path,
               const std::string& detection_path) {
    const double alpha = alpha_flag.value_or(0.05);
    const bool static_only = out_flag.empty() && env_out_root().empty() &&
                             (!tracking_path.empty() || !detection_path.empty());
    try {
        if (!tracking_path.empty()) {
            const auto rows = report::tracking_table(read_text_file(tracking_path));
            std::cout << "tracking errors by occlusion\n"
                      << report::render_tracking_text(rows) << '\n';
        }
        if (!detection_path.empty()) {
            const auto rows = report::detection_table(read_text_file(detection_path));
            std::cout << "detection average precision\n"
                      << report::render_detection_text(rows) << '\n';
        }
        if (static_only) return 0;

        std::string dir;
        try {
            dir = resolve_out_dir(out_flag, "");
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        }
        const std::string results_path = dir + "/results.jsonl";
        if (!fs::exists(results_path)) {
            std::cerr << "error: no results found in '" << dir << "'\n";
            return 1;
        }
        const results_io::ResultsFile rf = results_io::read_results_jsonl(results_path);
        if (rf.results.empty()) {
            std::cerr << "error: no results found in '" << dir << "'\n";
            return 1;
        }
        std::vector<std::string> method_order;
        std::map<std::string, std::vector<stats::RunResult>> by_method;
        for (const auto& r : rf.results) {
            if (by_method.find(r.method) == by_method.end()) method_order.push_back(r.method);
            by_method[r.method].push_back(r);
        }
        if (baseline.empty())
            baseline = by_method.count("rgb_only") ? "rgb_only" : method_order.front();
        if (!by_method.count(baseline)) {
            std::cerr << "error: baseline method '" << baseline << "' has no results\n";
            return 2;
        }
        // metrics carried by every baseline run, minus bookkeeping columns
        std::vector<std::string> metric_names;
        for (const auto& [k, v] : by_method[baseline].front().metrics)
            if (k != "run_index" && k != "final_train_loss") metric_names.push_back(k);
        const auto has_metric = [](const std::vector<stats::RunResult>& runs,
                                   const std::string& metric) {
            for (const auto& r : runs)
                if (!r.metrics.count(metric)) return false;
            return true;
        };
        std::vector<stats::ComparisonRow> rows;
        for (const auto& metric : metric_names) {
            if (!has_metric(by_method[baseline], metric)) continue;
            for (const auto& method : method_order) {
                if (method == baseline || !has_metric(by_method[method], metric)) continue;
                rows.push_back(stats::compare_methods(by_method[baseline], by_method[method],
                                                      metric, alpha, /*lower_is_better=*/false));
            }
        }
        std::cout << "comparisons against '" << baseline << "' ("
                  << rf.results.front().experiment << ")\n"
                  << report::render_comparison_text(rows, alpha);
        if (!rf.errors.empty())
            std::cout << "\nnote: " << rf.errors.size()
                      << " failed runs are recorded in results.jsonl\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

int cmd_plot(const std::string& out_flag) {
    std::string dir;
    try {
        dir = resolve_out_dir(out_flag, "");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    try {
        std::vector<results_io::CurveRecord> curves;
        std::vector<stats::RunResult> results;
        if (fs::exists(dir + "/results.jsonl"))
            results = results_io::read_results_jsonl(dir + "/results.jsonl").results;
        if (fs::exists(dir + "/curves.jsonl"))
            curves = results_io::read_curves_jsonl(dir + "/curves.jsonl");
        if (results.empty() && curves.empty()) {
            std::cerr << "warning: no results in '" << dir << "'; nothing to plot\n";
            return 0;
        }
        const std::string id =
            results.empty() ? std::string("experiment") : results.front().experiment;
        const auto files = plot::write_plot_files(dir, id, curves, results);
        if (files.empty()) {
            std::cerr << "warning: no plottable data in '" << dir << "'\n";
            return 0;
        }
        for (const auto& f : files) std::cout << "wrote " << f << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"modality-dropout experiment runner"};
    app.require_subcommand(1);

    std::string config_path, out_dir, baseline, tracking_path, detection_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    int jobs = 1;

    CLI::App* run =
        app.add_subcommand("run", "train the configured method matrix and store results");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--out", out_dir,
                    "output directory (default $INDROP_OUT_ROOT/<experiment_id>)");
    run->add_option("--seed", seed, "override the master seed");
    run->add_option("--alpha", alpha, "override the significance level");
    run->add_option("--jobs", jobs, "parallel training runs")->check(CLI::PositiveNumber);

    CLI::App* rep =
        app.add_subcommand("report", "render comparison tables from stored results");
    rep->add_option("--out", out_dir, "results directory (default $INDROP_OUT_ROOT)");
    rep->add_option("--alpha", alpha, "significance level for marking (default 0.05)");
    rep->add_option("--baseline", baseline, "baseline method (default rgb_only)");
    rep->add_option("--tracking", tracking_path,
                    "per-sequence tracking error CSV (sequence,occlusion_bucket,method,"
                    "rotation_error_deg,translation_error_mm)");
    rep->add_option("--detection", detection_path, "per-class detection AP CSV (method,class,ap)");

    CLI::App* plt = app.add_subcommand("plot", "emit SVG plots from stored results");
    plt->add_option("--out", out_dir, "results directory (default $INDROP_OUT_ROOT)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (run->parsed()) return cmd_run(config_path, out_dir, seed, alpha, jobs);
    if (rep->parsed()) return cmd_report(out_dir, alpha, baseline, tracking_path, detection_path);
    return cmd_plot(out_dir);
}
