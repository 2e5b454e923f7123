#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "indrop/results_io.hpp"
#include "indrop/report.hpp"

using namespace indrop;
using namespace indrop::results_io;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::path("io_tmp") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string minimal_config_json() {
    return R"({
        "schema_version": 1,
        "task": "classification",
        "experiment_id": "io-test",
        "methods": ["rgb_only", "input_dropout_addit"],
        "num_seeds": 2,
        "master_seed": 7,
        "optim": {"steps": 4, "batch_size": 4},
        "classification_data": {"train_count": 16, "test_count": 8, "image_size": 8},
        "network": {"width": 4, "res_blocks": 1}
    })";
}

stats::RunResult random_result(RngStream& rng) {
    static const std::string alnum = "abcdefghijklmnopqrstuvwxyz0123456789_";
    auto word = [&](int len) {
        std::string s;
        for (int i = 0; i < len; ++i) s += alnum[rng.uniform_int(static_cast<int>(alnum.size()))];
        return s;
    };
    stats::RunResult r;
    r.experiment = word(2 + rng.uniform_int(8));
    r.method = word(2 + rng.uniform_int(8));
    r.seed = rng.next_u64();
    r.config_hash = word(16);
    const int nm = 1 + rng.uniform_int(5);
    for (int i = 0; i < nm; ++i) {
        double v = rng.normal() * std::pow(10.0, static_cast<int>(rng.uniform_int(7)) - 3);
        if (rng.uniform() < 0.1) v = static_cast<double>(rng.uniform_int(100));
        r.metrics[word(1 + rng.uniform_int(10))] = v;
    }
    return r;
}

}  // namespace

TEST_CASE("result records survive a write/read round trip exactly") {
    const fs::path dir = fresh_dir("roundtrip");
    RngStream rng(20250817);
    std::vector<stats::RunResult> results;
    for (int i = 0; i < 1000; ++i) results.push_back(random_result(rng));
    const fs::path path = dir / "results.jsonl";
    write_results_jsonl(path.string(), results, {}, "io-test", "cfg", iso8601_utc_now());
    const ResultsFile back = read_results_jsonl(path.string());
    REQUIRE(back.results.size() == results.size());
    for (std::size_t i = 0; i < results.size(); ++i) CHECK(back.results[i] == results[i]);
    CHECK(back.errors.empty());
}

TEST_CASE("payload hashes ignore timestamps") {
    const fs::path dir = fresh_dir("hash");
    RngStream rng(1);
    std::vector<stats::RunResult> results = {random_result(rng), random_result(rng)};
    const fs::path a = dir / "a.jsonl";
    const fs::path b = dir / "b.jsonl";
    write_results_jsonl(a.string(), results, {}, "e", "c", "2026-01-01T00:00:00Z");
    write_results_jsonl(b.string(), results, {}, "e", "c", "2027-12-31T23:59:59Z");
    CHECK(read_file(a) != read_file(b));  // timestamps differ on disk
    const ResultsFile ra = read_results_jsonl(a.string());
    const ResultsFile rb = read_results_jsonl(b.string());
    CHECK(results_payload_hash(ra.results) == results_payload_hash(rb.results));
    CHECK(results_payload_hash(ra.results) == results_payload_hash(results));
    CHECK(results_payload(results).find("timestamp") == std::string::npos);
}

TEST_CASE("error records are written and read distinctly") {
    const fs::path dir = fresh_dir("errors");
    RngStream rng(2);
    std::vector<stats::RunResult> results = {random_result(rng)};
    std::vector<experiments::RunError> errors;
    errors.push_back({"rgb_only", 1, 42, "container exploded"});
    const fs::path path = dir / "results.jsonl";
    write_results_jsonl(path.string(), results, errors, "exp", "cfg", iso8601_utc_now());
    const ResultsFile back = read_results_jsonl(path.string());
    CHECK(back.results.size() == 1);
    REQUIRE(back.errors.size() == 1);
    CHECK(back.errors[0].experiment == "exp");
    CHECK(back.errors[0].method == "rgb_only");
    CHECK(back.errors[0].seed == 42);
    CHECK(back.errors[0].message == "container exploded");
}

TEST_CASE("malformed result lines are reported with a line number") {
    const fs::path dir = fresh_dir("badline");
    const fs::path path = dir / "results.jsonl";
    {
        std::ofstream os(path);
        os << R"({"experiment":"e","method":"m","seed":1,"metrics":{"a":1.0},"config_hash":"c"})"
           << "\n";
        os << "{not json\n";
    }
    try {
        read_results_jsonl(path.string());
        FAIL("expected a parse failure");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("the stored summary equals one recomputed from the raw records") {
    const fs::path dir = fresh_dir("summary");
    std::vector<stats::RunResult> results;
    for (int i = 0; i < 3; ++i) {
        stats::RunResult r;
        r.experiment = "exp";
        r.method = i < 2 ? "rgb_only" : "input_dropout_addit";
        r.seed = 100 + i;
        r.config_hash = "cfg";
        r.metrics["accuracy"] = 0.5 + 0.01 * i;
        r.metrics["run_index"] = i;
        results.push_back(r);
    }
    const fs::path results_path = dir / "results.jsonl";
    const fs::path summary_path = dir / "summary.csv";
    write_results_jsonl(results_path.string(), results, {}, "exp", "cfg", iso8601_utc_now());
    write_summary_csv(summary_path.string(), results);
    const ResultsFile back = read_results_jsonl(results_path.string());
    CHECK(render_summary_csv(back.results) == read_file(summary_path));
}

TEST_CASE("summary marks methods with missing runs") {
    std::vector<stats::RunResult> results;
    for (int i = 0; i < 3; ++i) {
        stats::RunResult r;
        r.experiment = "exp";
        r.method = "rgb_only";
        r.seed = i;
        r.metrics["accuracy"] = 0.5;
        results.push_back(r);
    }
    stats::RunResult lone;
    lone.experiment = "exp";
    lone.method = "input_dropout_addit";
    lone.seed = 9;
    lone.metrics["accuracy"] = 0.6;
    results.push_back(lone);
    const std::string csv = render_summary_csv(results);
    CHECK(csv.find("rgb_only,accuracy,0.5,0,3,3,no") != std::string::npos);
    CHECK(csv.find("input_dropout_addit,accuracy,") != std::string::npos);
    CHECK(csv.find(",1,3,yes") != std::string::npos);
    CHECK(csv.substr(0, csv.find('\n')) ==
          "experiment,method,metric,mean,stddev,n,expected_n,gap");
}

TEST_CASE("config documents parse into validated experiment configs") {
    const LoadedConfig lc = parse_config(minimal_config_json());
    CHECK(lc.exp.experiment_id == "io-test");
    CHECK(lc.exp.task == experiments::Task::classification);
    REQUIRE(lc.exp.methods.size() == 2);
    CHECK(lc.exp.methods[0] == experiments::Method::rgb_only);
    CHECK(lc.exp.num_seeds == 2);
    CHECK(lc.exp.master_seed == 7);
    CHECK(lc.exp.optim.steps == 4);
    CHECK(lc.exp.cls_data.image_size == 8);
    CHECK(lc.exp.net_width == 4);
    // untouched fields keep their defaults
    CHECK(lc.exp.alpha == 0.05);
    CHECK(lc.exp.p_drop_addit == 0.5);
}

TEST_CASE("config errors carry the offending field path") {
    auto expect_error = [](const std::string& text, const std::string& needle) {
        try {
            parse_config(text);
            FAIL_CHECK("expected rejection containing '" << needle << "'");
        } catch (const std::exception& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_error("{", "not valid JSON");
    expect_error(R"({"task": "classification"})", "schema_version");
    expect_error(R"({"schema_version": 2})", "schema_version");
    expect_error(R"({"schema_version": 1, "surprise": true})", "unknown key 'surprise'");
    expect_error(R"({"schema_version": 1, "optim": {"lr": "fast"}})", "optim.lr");
    expect_error(R"({"schema_version": 1, "optim": {"turbo": 1}})", "unknown key 'turbo'");
    expect_error(R"({"schema_version": 1, "methods": "rgb_only"})", "expected an array");
    expect_error(R"({"schema_version": 1, "methods": ["warp_drive"]})", "warp_drive");
    expect_error(R"({"schema_version": 1, "num_seeds": 0})", "num_seeds");
    expect_error(R"({"schema_version": 1, "alpha": 1.5})", "alpha");
    expect_error(R"({"schema_version": 1, "master_seed": -4})", "master_seed");
    expect_error(R"({"schema_version": 1, "task": "dehazing",
                     "methods": ["moddrop_baseline"]})",
                 "moddrop_baseline");
}

TEST_CASE("loading a config file records the byte hash") {
    const fs::path dir = fresh_dir("cfgfile");
    const fs::path path = dir / "config.json";
    const std::string text = minimal_config_json();
    {
        std::ofstream os(path, std::ios::binary);
        os << text;
    }
    const LoadedConfig lc = load_config_file(path.string());
    CHECK(lc.config_file_sha256 == sha256_hex(text));
    CHECK_THROWS_AS(load_config_file((dir / "absent.json").string()), std::runtime_error);
}

TEST_CASE("dataset containers load back into training splits") {
    const fs::path dir = fresh_dir("containers");
    synthdata::ClassificationConfig dc;
    dc.train_count = 8;
    dc.test_count = 4;
    dc.image_size = 8;
    const synthdata::ClassificationSplit split = synthdata::generate_classification_data(dc, 7);
    const fs::path train_p = dir / "train.bin";
    const fs::path test_p = dir / "test.bin";
    synthdata::DatasetBlob train_blob{"classification", split.train.layout, split.train.inputs,
                                      {},           split.train.labels,  split.train.seed,
                                      dc.fingerprint()};
    synthdata::DatasetBlob test_blob{"classification", split.test.layout, split.test.inputs,
                                     {},           split.test.labels,  split.test.seed,
                                     dc.fingerprint()};
    synthdata::save_dataset(train_p.string(), train_blob);
    synthdata::save_dataset(test_p.string(), test_blob);

    experiments::ExperimentConfig cfg;
    cfg.cls_data = dc;
    cfg.container_train = train_p.string();
    cfg.container_test = test_p.string();
    const LoadedData data = load_containers(cfg);
    REQUIRE(data.loaded);
    CHECK(data.cls.train.labels == split.train.labels);
    CHECK(data.cls.test.inputs.v.size() == split.test.inputs.v.size());

    experiments::ExperimentConfig missing = cfg;
    missing.container_test = (dir / "nope.bin").string();
    try {
        load_containers(missing);
        FAIL("expected dataset-not-found");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("dataset not found") != std::string::npos);
        CHECK(std::string(e.what()).find("nope.bin") != std::string::npos);
    }

    experiments::ExperimentConfig wrong_task = cfg;
    wrong_task.task = experiments::Task::dehazing;
    wrong_task.haze_data.image_size = 12;
    CHECK_THROWS_AS(load_containers(wrong_task), std::runtime_error);

    experiments::ExperimentConfig none;
    CHECK_FALSE(load_containers(none).loaded);
}

TEST_CASE("training curves round-trip through their jsonl form") {
    const fs::path dir = fresh_dir("curves");
    const fs::path path = dir / "curves.jsonl";
    std::vector<std::tuple<std::string, int, std::vector<std::pair<int, double>>>> curves;
    curves.emplace_back("rgb_only", 0,
                        std::vector<std::pair<int, double>>{{0, 1.5}, {25, 0.75}, {50, 0.5}});
    curves.emplace_back("input_dropout_addit", 1,
                        std::vector<std::pair<int, double>>{{0, 1.25}});
    write_curves_jsonl(path.string(), curves);
    const std::vector<CurveRecord> back = read_curves_jsonl(path.string());
    REQUIRE(back.size() == 2);
    CHECK(back[0].method == "rgb_only");
    CHECK(back[0].run_index == 0);
    REQUIRE(back[0].points.size() == 3);
    CHECK(back[0].points[1] == std::make_pair(25, 0.75));
    CHECK(back[1].method == "input_dropout_addit");
    CHECK(back[1].points.size() == 1);
}

TEST_CASE("manifests record seeds, hashes and artifact names") {
    const fs::path dir = fresh_dir("manifest");
    const LoadedConfig lc = parse_config(minimal_config_json());
    const fs::path path = dir / "manifest.json";
    write_manifest(path.string(), lc.exp, "filehash", "payloadhash");
    const json m = json::parse(read_file(path));
    CHECK(m.at("schema_version") == 1);
    CHECK(m.at("tool_version") == kToolVersion);
    CHECK(m.at("experiment_id") == "io-test");
    CHECK(m.at("config_hash") == lc.exp.fingerprint());
    CHECK(m.at("config_file_sha256") == "filehash");
    CHECK(m.at("payload_hash") == "payloadhash");
    REQUIRE(m.at("runs").size() == 2);
    CHECK(m.at("runs")[0].at("run_seed") == experiments::run_seed_for(7, 0));
    CHECK(m.at("runs")[1].at("run_seed") == experiments::run_seed_for(7, 1));
    CHECK(m.at("runs")[0].at("streams").at("init") ==
          derive_seed(experiments::run_seed_for(7, 0), 0, "init"));
    CHECK(m.at("runs")[0].at("streams").at("data-train") ==
          derive_seed(experiments::run_seed_for(7, 0), 0, "data-train"));
    CHECK(m.at("data_streams").at("data-test") == derive_seed(7, 0, "data-test"));
    CHECK(m.at("artifacts").at("results") == "results.jsonl");
}

TEST_CASE("relative change formatting matches the published convention") {
    // error going down: 43.2 -> 28.8 is a 33.3% improvement
    CHECK(report::format_gain_pct(43.2, 28.8, true) == "33.3%");
    // score going up: 0.228 -> 0.271 is an 18.9% improvement
    CHECK(report::format_gain_pct(0.228, 0.271, false) == "18.9%");
    CHECK(report::format_gain_pct(10.0, 10.0, false) == "0.0%");
}

TEST_CASE("comparison tables render both text and csv forms") {
    std::vector<stats::RunResult> base, treat;
    for (int i = 0; i < 5; ++i) {
        stats::RunResult b;
        b.experiment = "exp";
        b.method = "rgb_only";
        b.seed = i;
        b.metrics["accuracy"] = 0.40 + 0.01 * i;
        base.push_back(b);
        stats::RunResult t = b;
        t.method = "input_dropout_addit";
        t.metrics["accuracy"] = 0.50 + 0.01 * i;
        treat.push_back(t);
    }
    const stats::ComparisonRow row =
        stats::compare_methods(base, treat, "accuracy", 0.05, false);
    const std::string text = report::render_comparison_text({row}, 0.05);
    CHECK(text.find("rgb_only") != std::string::npos);
    CHECK(text.find("input_dropout_addit") != std::string::npos);
    CHECK(text.find("*") != std::string::npos);  // p = 2/252 clears alpha = 0.05
    const std::string csv = report::render_comparison_csv({row});
    CHECK(csv.find("accuracy") != std::string::npos);
    CHECK(csv.find("significant") != std::string::npos);
}

TEST_CASE("static table inputs render from user-supplied csv files") {
    const std::string tracking =
        "sequence,occlusion_bucket,method,rotation_error_deg,translation_error_mm\n"
        "seq1,60-80,baseline,40.0,30.0\n"
        "seq2,60-80,baseline,46.4,26.0\n"
        "seq1,60-80,treated,30.0,20.0\n"
        "seq2,60-80,treated,27.6,18.0\n";
    const auto rows = report::tracking_table(tracking);
    REQUIRE(rows.size() == 2);
    // baseline mean rotation 43.2, treated 28.8 -> 33.3% better
    CHECK(rows[1].rotation_gain == "33.3%");
    const std::string text = report::render_tracking_text(rows);
    CHECK(text.find("60-80") != std::string::npos);
    CHECK(text.find("33.3%") != std::string::npos);

    const std::string detection =
        "method,class,ap\n"
        "baseline,person,0.228\n"
        "treated,person,0.271\n";
    const std::string dtext = report::render_detection_text(report::detection_table(detection));
    CHECK(dtext.find("18.9%") != std::string::npos);

    CHECK_THROWS_AS(report::tracking_table("wrong,header\n1,2\n"), std::runtime_error);
    CHECK_THROWS_AS(report::detection_table("method,class,ap\nm,c,1.5\n"), std::runtime_error);
}
