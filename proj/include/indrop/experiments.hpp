#pragma once

// Experiment orchestration: builds the per-method training pipelines, runs
// them across seeds on shared data, and collects metric records for the
// statistics layer.
//
// Seeding discipline: every run gets run_seed = derive_seed(master, i, "run"),
// and every consumer inside a run draws from its own named stream derived
// from that run seed ("init", "mask", "batch", "moddrop", ...). Masking draws
// never share a stream with anything else, so enabling the identity policy
// (p_drop = 0) reproduces the unmasked trajectory bit for bit.
//
// The test split is derived from the master seed alone, so all runs of an
// experiment are evaluated on the same samples and their per-sample outputs
// can be ensembled across seeds.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "indrop/adapt.hpp"
#include "indrop/hash.hpp"
#include "indrop/losses.hpp"
#include "indrop/metrics.hpp"
#include "indrop/modality.hpp"
#include "indrop/nn.hpp"
#include "indrop/rng.hpp"
#include "indrop/stats.hpp"
#include "indrop/synthdata.hpp"
#include "indrop/tensor.hpp"

namespace indrop::experiments {

enum class Task { classification, dehazing };

enum class Method {
    rgb_only,
    depth_only,
    input_dropout_addit,
    input_dropout_both,
    moddrop_baseline,
    rgbd_upper_bound,
};

inline const char* to_string(Task t) {
    return t == Task::classification ? "classification" : "dehazing";
}
inline Task task_from_string(const std::string& s) {
    if (s == "classification") return Task::classification;
    if (s == "dehazing") return Task::dehazing;
    throw std::invalid_argument("unknown task '" + s + "'");
}

inline const char* to_string(Method m) {
    switch (m) {
        case Method::rgb_only: return "rgb_only";
        case Method::depth_only: return "depth_only";
        case Method::input_dropout_addit: return "input_dropout_addit";
        case Method::input_dropout_both: return "input_dropout_both";
        case Method::moddrop_baseline: return "moddrop_baseline";
        case Method::rgbd_upper_bound: return "rgbd_upper_bound";
    }
    return "?";
}
inline Method method_from_string(const std::string& s) {
    for (Method m : {Method::rgb_only, Method::depth_only, Method::input_dropout_addit,
                     Method::input_dropout_both, Method::moddrop_baseline,
                     Method::rgbd_upper_bound})
        if (s == to_string(m)) return m;
    throw std::invalid_argument("unknown method '" + s + "'");
}

// Dehazing has no separate-branch or depth-as-target variants.
inline bool method_allowed(Task t, Method m) {
    if (t == Task::classification) return true;
    return m == Method::rgb_only || m == Method::input_dropout_addit ||
           m == Method::rgbd_upper_bound;
}

// Does the method get to see the additional modality at test time? Only the
// privileged references do; everything deployable is evaluated on the
// canonical modality alone.
inline bool privileged_at_test(Method m) {
    return m == Method::depth_only || m == Method::rgbd_upper_bound;
}

struct OptimizerSettings {
    double lr = 0.05;
    double momentum = 0.9;
    int steps = 400;
    int batch_size = 16;

    void validate() const {
        if (!(lr > 0.0) || momentum < 0.0 || momentum >= 1.0 || steps <= 0 || batch_size <= 0)
            throw std::invalid_argument("OptimizerSettings: bad field");
    }
};

struct ExperimentConfig {
    Task task = Task::classification;
    std::string experiment_id = "privileged-signal";
    std::vector<Method> methods = {Method::rgb_only, Method::input_dropout_addit,
                                   Method::rgbd_upper_bound};
    int num_seeds = 5;
    std::uint64_t master_seed = 0;
    double alpha = 0.05;

    double p_drop_addit = 0.5;
    double p_drop_both = 1.0 / 3.0;
    double moddrop_p_branch = 0.5;  // probability that one branch is zeroed
    int moddrop_fusion_depth = 1;
    bool with_ensembles = false;

    synthdata::ClassificationConfig cls_data;
    synthdata::DehazeConfig haze_data;
    // When set, data comes from these container files instead of the
    // generators; all runs then share the same train/test splits.
    std::string container_train;
    std::string container_test;
    int net_width = 16;
    int res_blocks = 2;
    losses::GanWeights gan;
    OptimizerSettings optim;
    int curve_every = 25;

    void validate() const {
        if (experiment_id.empty())
            throw std::invalid_argument("ExperimentConfig: empty experiment id");
        if (methods.empty()) throw std::invalid_argument("ExperimentConfig: no methods");
        for (Method m : methods)
            if (!method_allowed(task, m))
                throw std::invalid_argument(std::string("ExperimentConfig: method '") +
                                            to_string(m) + "' not defined for task '" +
                                            to_string(task) + "'");
        for (std::size_t i = 0; i < methods.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (methods[i] == methods[j])
                    throw std::invalid_argument("ExperimentConfig: duplicate method");
        if (num_seeds <= 0) throw std::invalid_argument("ExperimentConfig: num_seeds <= 0");
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("ExperimentConfig: alpha outside (0,1)");
        modality::DropoutPolicy(modality::DropoutMode::addit, p_drop_addit).validate();
        modality::DropoutPolicy(modality::DropoutMode::both, p_drop_both).validate();
        if (moddrop_p_branch < 0.0 || moddrop_p_branch > 1.0)
            throw std::invalid_argument("ExperimentConfig: moddrop_p_branch outside [0,1]");
        if (moddrop_fusion_depth < 0 || net_width <= 0 || res_blocks < 0 || curve_every <= 0)
            throw std::invalid_argument("ExperimentConfig: bad network field");
        if (with_ensembles && task != Task::classification)
            throw std::invalid_argument("ExperimentConfig: ensembles are classification-only");
        if (container_train.empty() != container_test.empty())
            throw std::invalid_argument(
                "ExperimentConfig: container_train and container_test must be set together");
        if (task == Task::classification) cls_data.validate();
        else haze_data.validate();
        optim.validate();
    }

    // Stable key=value rendering of every outcome-affecting field; the hash
    // of this string identifies the configuration in result records.
    std::string canonical() const {
        std::string s;
        char buf[256];
        auto add = [&](const char* k, const std::string& v) { s += k; s += '='; s += v; s += ';'; };
        auto addf = [&](const char* k, double v) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            add(k, buf);
        };
        auto addi = [&](const char* k, long long v) { add(k, std::to_string(v)); };
        add("task", to_string(task));
        add("experiment_id", experiment_id);
        std::string ms;
        for (Method m : methods) {
            if (!ms.empty()) ms += ',';
            ms += to_string(m);
        }
        add("methods", ms);
        addi("num_seeds", num_seeds);
        addi("master_seed", static_cast<long long>(master_seed));
        addf("alpha", alpha);
        addf("p_drop_addit", p_drop_addit);
        addf("p_drop_both", p_drop_both);
        addf("moddrop_p_branch", moddrop_p_branch);
        addi("moddrop_fusion_depth", moddrop_fusion_depth);
        addi("with_ensembles", with_ensembles ? 1 : 0);
        if (task == Task::classification) {
            addi("cls.train", cls_data.train_count);
            addi("cls.test", cls_data.test_count);
            addi("cls.size", cls_data.image_size);
            addf("cls.rho", cls_data.rho);
            addf("cls.sigma_rgb", cls_data.sigma_rgb);
            addi("cls.classes", cls_data.num_classes);
        } else {
            addi("haze.train", haze_data.train_count);
            addi("haze.test", haze_data.test_count);
            addi("haze.size", haze_data.image_size);
            addf("haze.beta_min", haze_data.beta_min);
            addf("haze.beta_max", haze_data.beta_max);
            addf("haze.airlight", haze_data.airlight);
            addf("haze.t_floor", haze_data.t_floor);
            addf("gan.lambda_l1", gan.lambda_l1);
            addf("gan.lambda_perceptual", gan.lambda_perceptual);
        }
        if (!container_train.empty()) {
            add("container_train", container_train);
            add("container_test", container_test);
        }
        addi("net.width", net_width);
        addi("net.res_blocks", res_blocks);
        addf("optim.lr", optim.lr);
        addf("optim.momentum", optim.momentum);
        addi("optim.steps", optim.steps);
        addi("optim.batch_size", optim.batch_size);
        addi("curve_every", curve_every);
        return s;
    }
    std::string fingerprint() const { return sha256_hex(canonical()); }
};

inline std::uint64_t run_seed_for(std::uint64_t master_seed, int run_index) {
    return derive_seed(master_seed, static_cast<std::uint64_t>(run_index), "run");
}

// Fresh training data per run, shared fixed test data per experiment: the
// group statistics then average over five independent data draws, so a
// single lucky draw cannot decide a method comparison.
inline synthdata::ClassificationSplit classification_data_for_run(const ExperimentConfig& cfg,
                                                                  int run_index) {
    synthdata::ClassificationSplit split;
    split.train = synthdata::generate_classification_split(
        cfg.cls_data, run_seed_for(cfg.master_seed, run_index), cfg.cls_data.train_count,
        "data-train");
    split.test = synthdata::generate_classification_split(
        cfg.cls_data, cfg.master_seed, cfg.cls_data.test_count, "data-test");
    synthdata::check_split_disjoint(split.train.inputs, split.test.inputs);
    return split;
}

inline synthdata::DehazeSplit dehaze_data_for_run(const ExperimentConfig& cfg, int run_index) {
    synthdata::DehazeSplit split;
    split.train = synthdata::generate_dehaze_split(cfg.haze_data,
                                                   run_seed_for(cfg.master_seed, run_index),
                                                   cfg.haze_data.train_count, "data-train");
    split.test = synthdata::generate_dehaze_split(cfg.haze_data, cfg.master_seed,
                                                  cfg.haze_data.test_count, "data-test");
    synthdata::verify_haze_invertibility(split.train, cfg.haze_data);
    synthdata::verify_haze_invertibility(split.test, cfg.haze_data);
    synthdata::check_split_disjoint(split.train.inputs, split.test.inputs);
    return split;
}

namespace detail {

inline void zero_sample_channels(Tensor& x, int n, int c0, int c1) {
    for (int c = c0; c < c1; ++c)
        for (int h = 0; h < x.h; ++h)
            for (int w = 0; w < x.w; ++w) x.at(n, c, h, w) = 0.0;
}

// The per-method view of a training batch. Consumes mask_rng for the
// input-dropout methods and moddrop_rng for the branch-dropping baseline, and
// nothing otherwise, so method choice never perturbs the other streams.
inline Tensor train_view(Method m, const Tensor& xb, const modality::ModalityLayout& layout,
                         const ExperimentConfig& cfg, RngStream& mask_rng,
                         RngStream& moddrop_rng) {
    switch (m) {
        case Method::rgb_only: {
            const auto [c0, c1] = layout.range("rgb");
            return slice_channels(xb, c0, c1);
        }
        case Method::depth_only: {
            const auto [c0, c1] = layout.range("depth");
            return slice_channels(xb, c0, c1);
        }
        case Method::rgbd_upper_bound:
            return xb;
        case Method::input_dropout_addit:
        case Method::input_dropout_both: {
            const modality::DropoutPolicy policy =
                m == Method::input_dropout_addit
                    ? modality::DropoutPolicy(modality::DropoutMode::addit, cfg.p_drop_addit)
                    : modality::DropoutPolicy(modality::DropoutMode::both, cfg.p_drop_both);
            modality::MultimodalBatch batch(xb, layout);
            auto [masked, record] = modality::apply_input_dropout(
                batch, policy, modality::Phase::train, mask_rng);
            return std::move(masked.data);
        }
        case Method::moddrop_baseline: {
            Tensor x = xb;
            const auto [r0, r1] = layout.range("rgb");
            const auto [d0, d1] = layout.range("depth");
            for (int n = 0; n < x.n; ++n) {
                const double u = moddrop_rng.uniform();
                if (u < 0.5 * cfg.moddrop_p_branch) zero_sample_channels(x, n, r0, r1);
                else if (u < cfg.moddrop_p_branch) zero_sample_channels(x, n, d0, d1);
            }
            return x;
        }
    }
    throw std::logic_error("train_view: unhandled method");
}

// Test-time view: deployable methods get the canonical modality only, with
// the additional channels deterministically zeroed (or sliced away for
// single-modality networks). The privileged references keep their inputs.
inline Tensor eval_view(Method m, const Tensor& test_inputs,
                        const modality::ModalityLayout& layout) {
    switch (m) {
        case Method::rgb_only: {
            const auto [c0, c1] = layout.range("rgb");
            return slice_channels(test_inputs, c0, c1);
        }
        case Method::depth_only: {
            const auto [c0, c1] = layout.range("depth");
            return slice_channels(test_inputs, c0, c1);
        }
        case Method::rgbd_upper_bound:
            return test_inputs;
        case Method::input_dropout_addit:
        case Method::input_dropout_both:
        case Method::moddrop_baseline: {
            modality::MultimodalBatch batch(test_inputs, layout);
            return modality::mask_for_inference(batch, {layout.canonical_name()}).data;
        }
    }
    throw std::logic_error("eval_view: unhandled method");
}

template <typename Net>
std::vector<std::pair<int, double>> train_classifier_loop(
    Net& net, Method m, const ExperimentConfig& cfg,
    const synthdata::ClassificationDataset& train, std::uint64_t run_seed) {
    RngStream mask_rng(derive_seed(run_seed, 0, "mask"));
    RngStream batch_rng(derive_seed(run_seed, 0, "batch"));
    RngStream moddrop_rng(derive_seed(run_seed, 0, "moddrop"));
    nn::SgdMomentum opt(net.params(), cfg.optim.lr, cfg.optim.momentum);
    std::vector<std::pair<int, double>> curve;
    for (int step = 0; step < cfg.optim.steps; ++step) {
        std::vector<int> idx(static_cast<std::size_t>(cfg.optim.batch_size));
        for (int& i : idx)
            i = static_cast<int>(batch_rng.uniform_int(static_cast<std::uint64_t>(train.inputs.n)));
        Tensor xb = gather_rows(train.inputs, idx);
        std::vector<int> yb(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k)
            yb[k] = train.labels[static_cast<std::size_t>(idx[k])];
        Tensor xv = train_view(m, xb, train.layout, cfg, mask_rng, moddrop_rng);
        Tensor logits = net.forward(xv, true);
        losses::CrossEntropyValue ce = losses::softmax_cross_entropy(logits, yb);
        opt.zero_grad();
        net.backward(ce.dlogits);
        opt.step();
        if (step % cfg.curve_every == 0 || step == cfg.optim.steps - 1)
            curve.emplace_back(step, ce.value);
    }
    return curve;
}

inline Tensor softmax_rows(const Tensor& logits) {
    Tensor probs(logits.n, logits.c, 1, 1);
    for (int n = 0; n < logits.n; ++n) {
        double mx = logits.at(n, 0, 0, 0);
        for (int k = 1; k < logits.c; ++k) mx = std::max(mx, logits.at(n, k, 0, 0));
        double z = 0.0;
        for (int k = 0; k < logits.c; ++k) z += std::exp(logits.at(n, k, 0, 0) - mx);
        for (int k = 0; k < logits.c; ++k)
            probs.at(n, k, 0, 0) = std::exp(logits.at(n, k, 0, 0) - mx) / z;
    }
    return probs;
}

constexpr int kEvalChunk = 64;

template <typename Net>
Tensor forward_in_chunks(Net& net, const Tensor& x) {
    Tensor out;
    for (int start = 0; start < x.n; start += kEvalChunk) {
        const int stop = std::min(x.n, start + kEvalChunk);
        std::vector<int> idx;
        for (int i = start; i < stop; ++i) idx.push_back(i);
        Tensor y = net.forward(gather_rows(x, idx), false);
        if (start == 0) out = Tensor(x.n, y.c, y.h, y.w);
        std::copy(y.v.begin(), y.v.end(),
                  out.v.begin() + static_cast<std::size_t>(start) * y.c * y.h * y.w);
    }
    return out;
}

}  // namespace detail

struct ClassifierRun {
    stats::RunResult result;
    Tensor test_probs;  // (N_test, K, 1, 1) on the method's evaluation view
    std::vector<std::pair<int, double>> curve;
};

inline ClassifierRun run_classifier_method(const ExperimentConfig& cfg, Method m, int run_index,
                                           const synthdata::ClassificationSplit& data) {
    const std::uint64_t run_seed = run_seed_for(cfg.master_seed, run_index);
    RngStream init_rng(derive_seed(run_seed, 0, "init"));
    ClassifierRun out;

    const auto finish = [&](const Tensor& logits) {
        out.test_probs = detail::softmax_rows(logits);
        const double acc = metrics::classification_accuracy(out.test_probs, data.test.labels);
        out.result.experiment = cfg.experiment_id;
        out.result.seed = run_seed;
        out.result.method = to_string(m);
        out.result.config_hash = cfg.fingerprint();
        out.result.metrics["accuracy"] = acc;
        out.result.metrics["run_index"] = static_cast<double>(run_index);
        if (!out.curve.empty()) out.result.metrics["final_train_loss"] = out.curve.back().second;
    };

    if (m == Method::moddrop_baseline) {
        adapt::ModDropSpec spec;
        spec.rgb_channels = 3;
        spec.add_channels = 1;
        spec.num_classes = data.train.num_classes;
        spec.width = cfg.net_width;
        spec.fusion_depth = cfg.moddrop_fusion_depth;
        adapt::ModDropNet net(spec, init_rng);
        out.curve = detail::train_classifier_loop(net, m, cfg, data.train, run_seed);
        Tensor view = detail::eval_view(m, data.test.inputs, data.test.layout);
        finish(detail::forward_in_chunks(net, view));
        return out;
    }

    adapt::ClassifierSpec spec;
    spec.num_classes = data.train.num_classes;
    spec.width = cfg.net_width;
    spec.res_blocks = cfg.res_blocks;
    switch (m) {
        case Method::rgb_only: spec.in_channels = 3; break;
        case Method::depth_only: spec.in_channels = 1; break;
        default: spec.in_channels = 4; break;
    }
    adapt::ClassifierNet net(spec, init_rng);
    out.curve = detail::train_classifier_loop(net, m, cfg, data.train, run_seed);
    Tensor view = detail::eval_view(m, data.test.inputs, data.test.layout);
    finish(detail::forward_in_chunks(net, view));
    return out;
}

struct DehazerRun {
    stats::RunResult result;
    std::vector<std::pair<int, double>> curve;
};

inline DehazerRun run_dehazer_method(const ExperimentConfig& cfg, Method m, int run_index,
                                     const synthdata::DehazeSplit& data) {
    const std::uint64_t run_seed = run_seed_for(cfg.master_seed, run_index);
    RngStream g_init(derive_seed(run_seed, 0, "init"));
    RngStream d_init(derive_seed(run_seed, 0, "init-disc"));
    RngStream mask_rng(derive_seed(run_seed, 0, "mask"));
    RngStream batch_rng(derive_seed(run_seed, 0, "batch"));
    RngStream moddrop_rng(derive_seed(run_seed, 0, "moddrop"));  // unused; keeps stream set uniform

    adapt::GeneratorSpec gspec;
    gspec.in_channels = m == Method::rgb_only ? 3 : 4;
    gspec.out_channels = 3;
    gspec.width = cfg.net_width;
    gspec.res_blocks = cfg.res_blocks;
    adapt::GeneratorNet gen(gspec, g_init);
    adapt::DiscriminatorSpec dspec;
    dspec.in_channels = 3;
    dspec.width = cfg.net_width;
    adapt::PatchDiscriminator disc(dspec, d_init);
    losses::PerceptualExtractor percep(3, derive_seed(run_seed, 0, "percep"));

    nn::SgdMomentum g_opt(gen.params(), cfg.optim.lr, cfg.optim.momentum);
    nn::SgdMomentum d_opt(disc.params(), cfg.optim.lr, cfg.optim.momentum);

    DehazerRun out;
    for (int step = 0; step < cfg.optim.steps; ++step) {
        std::vector<int> idx(static_cast<std::size_t>(cfg.optim.batch_size));
        for (int& i : idx)
            i = static_cast<int>(
                batch_rng.uniform_int(static_cast<std::uint64_t>(data.train.inputs.n)));
        Tensor xb = gather_rows(data.train.inputs, idx);
        Tensor clear = gather_rows(data.train.targets, idx);
        Tensor xv = detail::train_view(m, xb, data.train.layout, cfg, mask_rng, moddrop_rng);

        Tensor fake = gen.forward(xv, true);

        // discriminator update: two passes so each backward sees its own caches
        d_opt.zero_grad();
        Tensor d_real = disc.forward(clear, true);
        Tensor d_fake_snapshot = fake;  // treated as constant for the D step
        {
            losses::DiscriminatorLoss dl =
                losses::lsgan_discriminator_loss(d_real, disc.forward(d_fake_snapshot, true));
            // caches now belong to the fake pass
            disc.backward(dl.grad_fake);
            disc.forward(clear, true);
            disc.backward(dl.grad_real);
        }
        d_opt.step();

        // generator update against the refreshed discriminator
        Tensor d_fake = disc.forward(fake, true);
        losses::GeneratorLossBreakdown gl =
            losses::dehaze_generator_loss(fake, clear, d_fake, percep, cfg.gan);
        nn::zero_grads(disc.params());  // discard D grads from the G pass
        Tensor dfake_gan = disc.backward(gl.grad_d_fake);
        for (std::size_t i = 0; i < dfake_gan.v.size(); ++i)
            dfake_gan.v[i] += gl.grad_pred.v[i];
        g_opt.zero_grad();
        gen.backward(dfake_gan);
        g_opt.step();
        nn::zero_grads(disc.params());

        if (step % cfg.curve_every == 0 || step == cfg.optim.steps - 1)
            out.curve.emplace_back(step, gl.total);
    }

    Tensor view = detail::eval_view(m, data.test.inputs, data.test.layout);
    Tensor pred = detail::forward_in_chunks(gen, view);
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (int n = 0; n < pred.n; ++n) {
        const std::vector<int> one{n};
        Tensor p = gather_rows(pred, one);
        Tensor t = gather_rows(data.test.targets, one);
        psnr_sum += metrics::psnr(p, t, 1.0);
        ssim_sum += metrics::ssim(p, t);
    }
    out.result.experiment = cfg.experiment_id;
    out.result.seed = run_seed;
    out.result.method = to_string(m);
    out.result.config_hash = cfg.fingerprint();
    out.result.metrics["psnr"] = psnr_sum / pred.n;
    out.result.metrics["ssim"] = ssim_sum / pred.n;
    out.result.metrics["run_index"] = static_cast<double>(run_index);
    if (!out.curve.empty()) out.result.metrics["final_train_loss"] = out.curve.back().second;
    return out;
}

struct RunError {
    std::string method;
    int run_index = 0;
    std::uint64_t seed = 0;
    std::string message;
};

// Everything one run index produces: results in method order, training
// curves, and (for classification) the per-method test probabilities that
// ensembling consumes.
struct RunFragment {
    int run_index = 0;
    std::vector<stats::RunResult> results;
    std::vector<std::tuple<std::string, int, std::vector<std::pair<int, double>>>> curves;
    std::map<std::string, Tensor> probs;
    std::vector<int> test_labels;
    std::vector<RunError> errors;
};

// External datasets (loaded containers); when set, every run shares them.
struct DataOverride {
    const synthdata::ClassificationSplit* cls = nullptr;
    const synthdata::DehazeSplit* haze = nullptr;
};

// One run index end to end. Per-method failures are captured as error
// records, not thrown, so one bad run cannot sink an experiment.
inline RunFragment run_single_index(const ExperimentConfig& cfg, int run_index,
                                    const DataOverride& external = {}) {
    RunFragment frag;
    frag.run_index = run_index;
    const std::uint64_t run_seed = run_seed_for(cfg.master_seed, run_index);
    if (cfg.task == Task::dehazing) {
        synthdata::DehazeSplit local;
        const synthdata::DehazeSplit* data = external.haze;
        if (data == nullptr) {
            local = dehaze_data_for_run(cfg, run_index);
            data = &local;
        }
        for (Method m : cfg.methods) {
            try {
                DehazerRun run = run_dehazer_method(cfg, m, run_index, *data);
                frag.results.push_back(run.result);
                frag.curves.emplace_back(to_string(m), run_index, run.curve);
            } catch (const std::exception& e) {
                frag.errors.push_back({to_string(m), run_index, run_seed, e.what()});
            }
        }
        return frag;
    }
    synthdata::ClassificationSplit local;
    const synthdata::ClassificationSplit* data = external.cls;
    if (data == nullptr) {
        local = classification_data_for_run(cfg, run_index);
        data = &local;
    }
    frag.test_labels = data->test.labels;
    for (Method m : cfg.methods) {
        try {
            ClassifierRun run = run_classifier_method(cfg, m, run_index, *data);
            frag.results.push_back(run.result);
            frag.curves.emplace_back(to_string(m), run_index, run.curve);
            frag.probs.emplace(to_string(m), std::move(run.test_probs));
        } catch (const std::exception& e) {
            frag.errors.push_back({to_string(m), run_index, run_seed, e.what()});
        }
    }
    return frag;
}

// Per-method result lists plus curve data, in a fixed deterministic order
// (run index major, config method order minor, ensembles last).
struct MatrixOutput {
    std::vector<stats::RunResult> results;
    std::map<std::string, std::vector<stats::RunResult>> by_method;
    std::vector<std::tuple<std::string, int, std::vector<std::pair<int, double>>>> curves;
    std::vector<RunError> errors;
};

namespace detail {

inline Tensor mean_probs(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ensemble mean");
    Tensor out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = 0.5 * (a.v[i] + b.v[i]);
    return out;
}

}  // namespace detail

// Merges fragments into the canonical result order and, for classification,
// appends the two ensemble rows per pairing. Pairing i combines member A of
// run i with member B of run (i+1) mod S so no pair shares a training run;
// that gives n = num_seeds ensemble records, one per seed pair.
inline MatrixOutput assemble_matrix(const ExperimentConfig& cfg,
                                    std::vector<RunFragment> fragments) {
    std::sort(fragments.begin(), fragments.end(),
              [](const RunFragment& a, const RunFragment& b) { return a.run_index < b.run_index; });
    MatrixOutput out;
    for (const auto& frag : fragments) {
        for (const auto& r : frag.results) {
            out.by_method[r.method].push_back(r);
            out.results.push_back(r);
        }
        for (const auto& c : frag.curves) out.curves.push_back(c);
        for (const auto& e : frag.errors) out.errors.push_back(e);
    }
    if (cfg.task == Task::classification && cfg.with_ensembles) {
        bool has_id = false, has_rgb = false;
        for (Method m : cfg.methods) {
            has_id = has_id || m == Method::input_dropout_addit;
            has_rgb = has_rgb || m == Method::rgb_only;
        }
        if (!has_id || !has_rgb)
            throw std::invalid_argument(
                "assemble_matrix: ensembles need both input_dropout_addit and rgb_only");
        const int s = cfg.num_seeds;
        auto probs_of = [&](const char* method, int run_index) -> const Tensor* {
            for (const auto& frag : fragments)
                if (frag.run_index == run_index) {
                    const auto it = frag.probs.find(method);
                    return it == frag.probs.end() ? nullptr : &it->second;
                }
            return nullptr;
        };
        struct EnsembleDef {
            const char* name;
            const char* member_a;
            const char* member_b;
        };
        const EnsembleDef defs[] = {
            {"ensemble_id_rgb", "input_dropout_addit", "rgb_only"},
            {"ensemble_rgb_rgb", "rgb_only", "rgb_only"},
        };
        const std::vector<int>* labels = nullptr;
        for (const auto& frag : fragments)
            if (!frag.test_labels.empty()) { labels = &frag.test_labels; break; }
        for (const auto& def : defs) {
            for (int i = 0; i < s; ++i) {
                const int j = (i + 1) % s;
                const Tensor* pa = probs_of(def.member_a, i);
                const Tensor* pb = probs_of(def.member_b, j);
                if (pa == nullptr || pb == nullptr || labels == nullptr) {
                    out.errors.push_back({def.name, i, run_seed_for(cfg.master_seed, i),
                                          "ensemble member run missing"});
                    continue;
                }
                Tensor mean = detail::mean_probs(*pa, *pb);
                stats::RunResult r;
                r.experiment = cfg.experiment_id;
                r.seed = run_seed_for(cfg.master_seed, i);
                r.method = def.name;
                r.config_hash = cfg.fingerprint();
                r.metrics["accuracy"] = metrics::classification_accuracy(mean, *labels);
                r.metrics["run_index"] = static_cast<double>(i);
                out.by_method[def.name].push_back(r);
                out.results.push_back(r);
            }
        }
    }
    return out;
}

// Runs every configured method across all seeds, sequentially.
inline MatrixOutput run_experiment(const ExperimentConfig& cfg,
                                   const DataOverride& external = {}) {
    cfg.validate();
    std::vector<RunFragment> fragments;
    for (int i = 0; i < cfg.num_seeds; ++i)
        fragments.push_back(run_single_index(cfg, i, external));
    return assemble_matrix(cfg, std::move(fragments));
}

// Comparison rows of every non-baseline method against the baseline.
inline std::vector<stats::ComparisonRow> compare_to_baseline(
    const MatrixOutput& matrix, const std::string& baseline_method, const std::string& metric,
    double alpha, bool lower_is_better) {
    const auto base_it = matrix.by_method.find(baseline_method);
    if (base_it == matrix.by_method.end())
        throw std::invalid_argument("compare_to_baseline: no runs for baseline '" +
                                    baseline_method + "'");
    std::vector<stats::ComparisonRow> rows;
    for (const auto& [name, runs] : matrix.by_method) {
        if (name == baseline_method) continue;
        rows.push_back(
            stats::compare_methods(base_it->second, runs, metric, alpha, lower_is_better));
    }
    return rows;
}

}  // namespace indrop::experiments
