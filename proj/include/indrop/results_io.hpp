#pragma once

// Persistence for the experiment runner: config files (strict JSON with a
// schema version), line-delimited result records, summary tables, run
// manifests, and training curves. Everything except timestamps is byte-stable
// for a given configuration and master seed.

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "indrop/experiments.hpp"
#include "indrop/hash.hpp"
#include "indrop/stats.hpp"
#include "indrop/synthdata.hpp"

namespace indrop::results_io {

constexpr const char* kToolVersion = "0.1.0";
constexpr int kConfigSchemaVersion = 1;

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// --- config files -------------------------------------------------------------

namespace detail {

[[noreturn]] inline void fail(const std::string& where, const std::string& what) {
    throw std::runtime_error("config: " + where + ": " + what);
}

inline void check_keys(const json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(where, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) { ok = true; break; }
        if (!ok) fail(where, "unknown key '" + it.key() + "'");
    }
}

inline double get_num(const json& j, const char* key, const std::string& where, double def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_number()) fail(where + "." + key, "expected a number");
    return j[key].get<double>();
}
inline int get_int(const json& j, const char* key, const std::string& where, int def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_number_integer()) fail(where + "." + key, "expected an integer");
    return j[key].get<int>();
}
inline std::uint64_t get_u64(const json& j, const char* key, const std::string& where,
                             std::uint64_t def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_number_unsigned() && !j[key].is_number_integer())
        fail(where + "." + key, "expected an unsigned integer");
    if (j[key].is_number_integer() && j[key].get<std::int64_t>() < 0)
        fail(where + "." + key, "expected a non-negative integer");
    return j[key].get<std::uint64_t>();
}
inline bool get_bool(const json& j, const char* key, const std::string& where, bool def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_boolean()) fail(where + "." + key, "expected a boolean");
    return j[key].get<bool>();
}
inline std::string get_str(const json& j, const char* key, const std::string& where,
                           const std::string& def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_string()) fail(where + "." + key, "expected a string");
    return j[key].get<std::string>();
}

}  // namespace detail

struct LoadedConfig {
    experiments::ExperimentConfig exp;
    std::string config_file_sha256;  // hash of the raw file bytes, when loaded from disk
};

// Parses and validates a config document. Unknown keys anywhere are errors,
// as are type mismatches; messages carry the offending field path.
inline LoadedConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("config: not valid JSON: ") + e.what());
    }
    detail::check_keys(j, "top level",
                       {"schema_version", "task", "experiment_id", "methods", "num_seeds",
                        "master_seed", "alpha", "dropout", "network", "optim",
                        "classification_data", "dehaze_data", "gan", "ensembles", "curve_every",
                        "containers"});
    if (!j.contains("schema_version")) detail::fail("top level", "missing schema_version");
    if (!j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != kConfigSchemaVersion)
        detail::fail("schema_version",
                     "expected " + std::to_string(kConfigSchemaVersion));

    LoadedConfig out;
    experiments::ExperimentConfig& cfg = out.exp;
    cfg.task = experiments::task_from_string(detail::get_str(j, "task", "top level",
                                                             "classification"));
    cfg.experiment_id = detail::get_str(j, "experiment_id", "top level", cfg.experiment_id);
    if (j.contains("methods")) {
        if (!j["methods"].is_array()) detail::fail("methods", "expected an array");
        cfg.methods.clear();
        for (const auto& m : j["methods"]) {
            if (!m.is_string()) detail::fail("methods", "expected strings");
            cfg.methods.push_back(experiments::method_from_string(m.get<std::string>()));
        }
    }
    cfg.num_seeds = detail::get_int(j, "num_seeds", "top level", cfg.num_seeds);
    cfg.master_seed = detail::get_u64(j, "master_seed", "top level", cfg.master_seed);
    cfg.alpha = detail::get_num(j, "alpha", "top level", cfg.alpha);
    cfg.with_ensembles = detail::get_bool(j, "ensembles", "top level", cfg.with_ensembles);
    cfg.curve_every = detail::get_int(j, "curve_every", "top level", cfg.curve_every);

    if (j.contains("dropout")) {
        const json& d = j["dropout"];
        detail::check_keys(d, "dropout",
                           {"p_addit", "p_both", "moddrop_p_branch", "moddrop_fusion_depth"});
        cfg.p_drop_addit = detail::get_num(d, "p_addit", "dropout", cfg.p_drop_addit);
        cfg.p_drop_both = detail::get_num(d, "p_both", "dropout", cfg.p_drop_both);
        cfg.moddrop_p_branch =
            detail::get_num(d, "moddrop_p_branch", "dropout", cfg.moddrop_p_branch);
        cfg.moddrop_fusion_depth =
            detail::get_int(d, "moddrop_fusion_depth", "dropout", cfg.moddrop_fusion_depth);
    }
    if (j.contains("network")) {
        const json& n = j["network"];
        detail::check_keys(n, "network", {"width", "res_blocks"});
        cfg.net_width = detail::get_int(n, "width", "network", cfg.net_width);
        cfg.res_blocks = detail::get_int(n, "res_blocks", "network", cfg.res_blocks);
    }
    if (j.contains("optim")) {
        const json& o = j["optim"];
        detail::check_keys(o, "optim", {"lr", "momentum", "steps", "batch_size"});
        cfg.optim.lr = detail::get_num(o, "lr", "optim", cfg.optim.lr);
        cfg.optim.momentum = detail::get_num(o, "momentum", "optim", cfg.optim.momentum);
        cfg.optim.steps = detail::get_int(o, "steps", "optim", cfg.optim.steps);
        cfg.optim.batch_size = detail::get_int(o, "batch_size", "optim", cfg.optim.batch_size);
    }
    if (j.contains("classification_data")) {
        const json& d = j["classification_data"];
        detail::check_keys(d, "classification_data",
                           {"train_count", "test_count", "image_size", "rho", "sigma_rgb"});
        cfg.cls_data.train_count =
            detail::get_int(d, "train_count", "classification_data", cfg.cls_data.train_count);
        cfg.cls_data.test_count =
            detail::get_int(d, "test_count", "classification_data", cfg.cls_data.test_count);
        cfg.cls_data.image_size =
            detail::get_int(d, "image_size", "classification_data", cfg.cls_data.image_size);
        cfg.cls_data.rho = detail::get_num(d, "rho", "classification_data", cfg.cls_data.rho);
        cfg.cls_data.sigma_rgb =
            detail::get_num(d, "sigma_rgb", "classification_data", cfg.cls_data.sigma_rgb);
    }
    if (j.contains("dehaze_data")) {
        const json& d = j["dehaze_data"];
        detail::check_keys(d, "dehaze_data",
                           {"train_count", "test_count", "image_size", "beta_min", "beta_max",
                            "airlight", "t_floor"});
        cfg.haze_data.train_count =
            detail::get_int(d, "train_count", "dehaze_data", cfg.haze_data.train_count);
        cfg.haze_data.test_count =
            detail::get_int(d, "test_count", "dehaze_data", cfg.haze_data.test_count);
        cfg.haze_data.image_size =
            detail::get_int(d, "image_size", "dehaze_data", cfg.haze_data.image_size);
        cfg.haze_data.beta_min =
            detail::get_num(d, "beta_min", "dehaze_data", cfg.haze_data.beta_min);
        cfg.haze_data.beta_max =
            detail::get_num(d, "beta_max", "dehaze_data", cfg.haze_data.beta_max);
        cfg.haze_data.airlight =
            detail::get_num(d, "airlight", "dehaze_data", cfg.haze_data.airlight);
        cfg.haze_data.t_floor =
            detail::get_num(d, "t_floor", "dehaze_data", cfg.haze_data.t_floor);
    }
    if (j.contains("gan")) {
        const json& g = j["gan"];
        detail::check_keys(g, "gan", {"lambda_l1", "lambda_perceptual"});
        cfg.gan.lambda_l1 = detail::get_num(g, "lambda_l1", "gan", cfg.gan.lambda_l1);
        cfg.gan.lambda_perceptual =
            detail::get_num(g, "lambda_perceptual", "gan", cfg.gan.lambda_perceptual);
    }
    if (j.contains("containers")) {
        const json& c = j["containers"];
        detail::check_keys(c, "containers", {"train", "test"});
        cfg.container_train = detail::get_str(c, "train", "containers", "");
        cfg.container_test = detail::get_str(c, "test", "containers", "");
    }
    cfg.validate();
    return out;
}

inline LoadedConfig load_config_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    LoadedConfig out = parse_config(ss.str());
    out.config_file_sha256 = sha256_hex(ss.str());
    return out;
}

// --- dataset containers -------------------------------------------------------

struct LoadedData {
    synthdata::ClassificationSplit cls;
    synthdata::DehazeSplit haze;
    bool loaded = false;
};

// Loads the configured container pair, validating task shape. A missing file
// is reported as a dataset-not-found error.
inline LoadedData load_containers(const experiments::ExperimentConfig& cfg) {
    LoadedData out;
    if (cfg.container_train.empty()) return out;
    for (const std::string& p : {cfg.container_train, cfg.container_test}) {
        std::ifstream probe(p, std::ios::binary);
        if (!probe) throw std::runtime_error("dataset not found: '" + p + "'");
    }
    const synthdata::DatasetBlob train = synthdata::load_dataset(cfg.container_train);
    const synthdata::DatasetBlob test = synthdata::load_dataset(cfg.container_test);
    const std::string want =
        cfg.task == experiments::Task::classification ? "classification" : "dehazing";
    for (const auto* blob : {&train, &test})
        if (blob->task != want)
            throw std::runtime_error("dataset: container task '" + blob->task +
                                     "' does not match configured task '" + want + "'");
    if (cfg.task == experiments::Task::classification) {
        for (const auto* blob : {&train, &test}) {
            if (blob->labels.empty())
                throw std::runtime_error("dataset: classification container lacks labels");
            for (int l : blob->labels)
                if (l < 0 || l >= cfg.cls_data.num_classes)
                    throw std::runtime_error("dataset: label out of range");
        }
        out.cls.train.inputs = train.inputs;
        out.cls.train.labels = train.labels;
        out.cls.train.layout = train.layout;
        out.cls.train.seed = train.seed;
        out.cls.test.inputs = test.inputs;
        out.cls.test.labels = test.labels;
        out.cls.test.layout = test.layout;
        out.cls.test.seed = test.seed;
        synthdata::check_split_disjoint(out.cls.train.inputs, out.cls.test.inputs);
    } else {
        for (const auto* blob : {&train, &test})
            if (blob->targets.v.empty())
                throw std::runtime_error("dataset: dehazing container lacks targets");
        out.haze.train.inputs = train.inputs;
        out.haze.train.targets = train.targets;
        out.haze.train.layout = train.layout;
        out.haze.train.seed = train.seed;
        out.haze.test.inputs = test.inputs;
        out.haze.test.targets = test.targets;
        out.haze.test.layout = test.layout;
        out.haze.test.seed = test.seed;
        synthdata::check_split_disjoint(out.haze.train.inputs, out.haze.test.inputs);
    }
    out.loaded = true;
    return out;
}

// --- result records -------------------------------------------------------------

struct ErrorRecord {
    std::string experiment;
    std::string method;
    std::uint64_t seed = 0;
    std::string message;
};

inline std::string iso8601_utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Canonical record rendering; key order is fixed and timestamps are absent,
// so this is the determinism-bearing payload.
inline ordered_json result_payload_json(const stats::RunResult& r) {
    ordered_json o;
    o["experiment"] = r.experiment;
    o["method"] = r.method;
    o["seed"] = r.seed;
    ordered_json m;
    for (const auto& [k, v] : r.metrics) m[k] = v;  // std::map: sorted keys
    o["metrics"] = std::move(m);
    o["config_hash"] = r.config_hash;
    return o;
}

inline std::string results_payload(const std::vector<stats::RunResult>& results) {
    std::string s;
    for (const auto& r : results) {
        s += result_payload_json(r).dump();
        s += '\n';
    }
    return s;
}

inline std::string results_payload_hash(const std::vector<stats::RunResult>& results) {
    return sha256_hex(results_payload(results));
}

inline void write_results_jsonl(const std::string& path,
                                const std::vector<stats::RunResult>& results,
                                const std::vector<experiments::RunError>& errors,
                                const std::string& experiment_id,
                                const std::string& config_hash,
                                const std::string& timestamp) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("results: cannot open '" + path + "' for writing");
    for (const auto& r : results) {
        ordered_json o = result_payload_json(r);
        o["timestamp"] = timestamp;
        os << o.dump() << '\n';
    }
    for (const auto& e : errors) {
        ordered_json o;
        o["experiment"] = experiment_id;
        o["method"] = e.method;
        o["seed"] = e.seed;
        o["error"] = e.message;
        o["config_hash"] = config_hash;
        o["timestamp"] = timestamp;
        os << o.dump() << '\n';
    }
    if (!os) throw std::runtime_error("results: write to '" + path + "' failed");
}

struct ResultsFile {
    std::vector<stats::RunResult> results;
    std::vector<ErrorRecord> errors;
};

inline stats::RunResult parse_result_line(const std::string& line) {
    const json j = json::parse(line);
    stats::RunResult r;
    r.experiment = j.at("experiment").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    const json& m = j.at("metrics");
    if (!m.is_object()) throw std::runtime_error("results: metrics is not an object");
    for (auto it = m.begin(); it != m.end(); ++it) {
        if (!it.value().is_number()) throw std::runtime_error("results: non-numeric metric");
        r.metrics[it.key()] = it.value().get<double>();
    }
    return r;
}

inline ResultsFile read_results_jsonl(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("results: cannot open '" + path + "'");
    ResultsFile out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("results: line " + std::to_string(lineno) + ": " + e.what());
        }
        if (j.contains("error")) {
            ErrorRecord e;
            e.experiment = j.at("experiment").get<std::string>();
            e.method = j.at("method").get<std::string>();
            e.seed = j.at("seed").get<std::uint64_t>();
            e.message = j.at("error").get<std::string>();
            out.errors.push_back(std::move(e));
        } else {
            try {
                out.results.push_back(parse_result_line(line));
            } catch (const std::exception& e) {
                throw std::runtime_error("results: line " + std::to_string(lineno) + ": " +
                                         e.what());
            }
        }
    }
    return out;
}

// --- summary table ---------------------------------------------------------------
//
// One row per (experiment, method, metric) in first-appearance order of the
// method and sorted metric order; expected_n is the largest per-method run
// count in the file, so methods with failed runs show a gap.

inline std::string render_summary_csv(const std::vector<stats::RunResult>& results) {
    std::string s = "experiment,method,metric,mean,stddev,n,expected_n,gap\n";
    std::vector<std::pair<std::string, std::string>> order;  // (experiment, method)
    std::map<std::pair<std::string, std::string>, std::vector<stats::RunResult>> groups;
    for (const auto& r : results) {
        const auto key = std::make_pair(r.experiment, r.method);
        if (groups.find(key) == groups.end()) order.push_back(key);
        groups[key].push_back(r);
    }
    std::size_t expected = 0;
    for (const auto& [key, runs] : groups) expected = std::max(expected, runs.size());
    char buf[64];
    for (const auto& key : order) {
        const auto& runs = groups[key];
        std::set<std::string> metric_names;
        for (const auto& r : runs)
            for (const auto& [k, v] : r.metrics)
                if (k != "run_index") metric_names.insert(k);
        for (const auto& metric : metric_names) {
            const stats::MetricAggregate agg = stats::aggregate_runs(runs, metric);
            s += key.first + ',' + key.second + ',' + metric + ',';
            std::snprintf(buf, sizeof(buf), "%.17g", agg.mean);
            s += buf;
            s += ',';
            std::snprintf(buf, sizeof(buf), "%.17g", agg.stddev);
            s += buf;
            s += ',' + std::to_string(agg.n) + ',' + std::to_string(expected) + ',';
            s += agg.n < expected ? "yes" : "no";
            s += '\n';
        }
    }
    return s;
}

inline void write_summary_csv(const std::string& path,
                              const std::vector<stats::RunResult>& results) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("summary: cannot open '" + path + "' for writing");
    os << render_summary_csv(results);
    if (!os) throw std::runtime_error("summary: write to '" + path + "' failed");
}

// --- manifest ----------------------------------------------------------------------

inline void write_manifest(const std::string& path, const experiments::ExperimentConfig& cfg,
                           const std::string& config_file_sha256,
                           const std::string& payload_hash) {
    ordered_json m;
    m["schema_version"] = 1;
    m["tool_version"] = kToolVersion;
    m["experiment_id"] = cfg.experiment_id;
    m["task"] = experiments::to_string(cfg.task);
    m["config_hash"] = cfg.fingerprint();
    m["config_file_sha256"] = config_file_sha256;
    m["master_seed"] = cfg.master_seed;
    m["num_seeds"] = cfg.num_seeds;
    m["alpha"] = cfg.alpha;
    // The shared evaluation split comes from the master seed; every other
    // stream, including the per-run training data draw, hangs off run_seed.
    ordered_json data_streams;
    data_streams["data-test"] = derive_seed(cfg.master_seed, 0, "data-test");
    m["data_streams"] = std::move(data_streams);
    ordered_json runs = ordered_json::array();
    const bool dehaze = cfg.task == experiments::Task::dehazing;
    for (int i = 0; i < cfg.num_seeds; ++i) {
        const std::uint64_t run_seed = experiments::run_seed_for(cfg.master_seed, i);
        ordered_json r;
        r["run_index"] = i;
        r["run_seed"] = run_seed;
        ordered_json streams;
        std::vector<std::string> names = {"init", "mask", "batch", "moddrop", "data-train"};
        if (dehaze) {
            names.push_back("init-disc");
            names.push_back("percep");
        }
        for (const auto& name : names) streams[name] = derive_seed(run_seed, 0, name);
        r["streams"] = std::move(streams);
        runs.push_back(std::move(r));
    }
    m["runs"] = std::move(runs);
    ordered_json artifacts;
    artifacts["results"] = "results.jsonl";
    artifacts["summary"] = "summary.csv";
    artifacts["curves"] = "curves.jsonl";
    m["artifacts"] = std::move(artifacts);
    m["payload_hash"] = payload_hash;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("manifest: cannot open '" + path + "' for writing");
    os << m.dump(2) << '\n';
    if (!os) throw std::runtime_error("manifest: write to '" + path + "' failed");
}

// --- training curves -----------------------------------------------------------------

struct CurveRecord {
    std::string method;
    int run_index = 0;
    std::vector<std::pair<int, double>> points;
};

inline void write_curves_jsonl(
    const std::string& path,
    const std::vector<std::tuple<std::string, int, std::vector<std::pair<int, double>>>>&
        curves) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("curves: cannot open '" + path + "' for writing");
    for (const auto& [method, run_index, points] : curves) {
        ordered_json o;
        o["method"] = method;
        o["run_index"] = run_index;
        ordered_json pts = ordered_json::array();
        for (const auto& [step, value] : points) pts.push_back({step, value});
        o["points"] = std::move(pts);
        os << o.dump() << '\n';
    }
    if (!os) throw std::runtime_error("curves: write to '" + path + "' failed");
}

inline std::vector<CurveRecord> read_curves_jsonl(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("curves: cannot open '" + path + "'");
    std::vector<CurveRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        CurveRecord c;
        c.method = j.at("method").get<std::string>();
        c.run_index = j.at("run_index").get<int>();
        for (const auto& p : j.at("points"))
            c.points.emplace_back(p.at(0).get<int>(), p.at(1).get<double>());
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace indrop::results_io
