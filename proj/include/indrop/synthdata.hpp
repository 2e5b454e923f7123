#pragma once

// Synthetic multimodal datasets sized for minutes-scale CPU training.
//
// Classification: shape images where the depth channel always identifies the
// class, while the colour cue is ambiguous with probability rho. Family
// (square vs disk) is always visible in both modalities; the variant bit is
// coded by colour intensity only (1-rho) of the time, so an image-only
// predictor tops out at 1 - rho/2 accuracy while depth-assisted training has
// the full signal available.
//
// Dehazing: smooth colour fields degraded by a physical scattering model
// I = J*t + A*(1-t) with t = exp(-beta*depth); the clear image is exactly
// recoverable wherever t is bounded away from zero, which load-time checks
// verify.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "indrop/hash.hpp"
#include "indrop/modality.hpp"
#include "indrop/rng.hpp"
#include "indrop/tensor.hpp"

namespace indrop::synthdata {

inline modality::ModalityLayout rgbd_layout() {
    return modality::ModalityLayout({{"rgb", 3}, {"depth", 1}}, "rgb");
}

// --- classification -----------------------------------------------------------

struct ClassificationConfig {
    int train_count = 320;
    int test_count = 512;
    int image_size = 32;
    double rho = 0.5;        // probability the colour variant cue is ambiguous
    double sigma_rgb = 0.1;  // per-pixel Gaussian noise on the colour channels
    int num_classes = 4;     // 2 shape families x 2 variants, fixed

    void validate() const {
        if (train_count <= 0 || test_count <= 0)
            throw std::invalid_argument("ClassificationConfig: counts must be positive");
        if (image_size < 8) throw std::invalid_argument("ClassificationConfig: image too small");
        if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("ClassificationConfig: rho outside [0,1]");
        if (sigma_rgb < 0.0) throw std::invalid_argument("ClassificationConfig: negative noise");
        if (num_classes != 4)
            throw std::invalid_argument("ClassificationConfig: generator defines exactly 4 classes");
    }

    std::string fingerprint() const {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "classification;train=%d;test=%d;size=%d;rho=%.17g;sigma=%.17g;classes=%d",
                      train_count, test_count, image_size, rho, sigma_rgb, num_classes);
        return sha256_hex(buf);
    }
};

struct ClassificationDataset {
    Tensor inputs;  // (N, 4, H, W): rgb then depth
    std::vector<int> labels;
    modality::ModalityLayout layout = rgbd_layout();
    int num_classes = 4;
    std::uint64_t seed = 0;
};

struct ClassificationSplit {
    ClassificationDataset train;
    ClassificationDataset test;
};

namespace detail {

constexpr double kDepthBackground = 0.05;
constexpr double kDepthPlateau[2] = {0.4, 0.9};   // by variant
constexpr double kColorVariant[2] = {0.35, 0.85}; // by variant, when unambiguous
constexpr double kColorAmbiguous = 0.6;
constexpr double kColorBackground = 0.1;

inline void render_sample(Tensor& dst, int n, int label, int size, double rho,
                          double sigma_rgb, RngStream& rng) {
    const int family = label / 2;   // 0 square, 1 disk
    const int variant = label % 2;
    const double cx = rng.uniform(0.35, 0.65) * size;
    const double cy = rng.uniform(0.35, 0.65) * size;
    const double r = rng.uniform(0.20, 0.30) * size;
    const bool ambiguous = rng.uniform() < rho;
    const double color = ambiguous ? kColorAmbiguous : kColorVariant[variant];
    const double height = kDepthPlateau[variant];
    for (int h = 0; h < size; ++h)
        for (int w = 0; w < size; ++w) {
            const double dx = w + 0.5 - cx, dy = h + 0.5 - cy;
            const bool inside = family == 0
                ? (std::abs(dx) <= r && std::abs(dy) <= r)
                : (dx * dx + dy * dy <= r * r);
            const double base = inside ? color : kColorBackground;
            for (int c = 0; c < 3; ++c) {
                double v = base + sigma_rgb * rng.normal();
                dst.at(n, c, h, w) = std::min(1.0, std::max(0.0, v));
            }
            dst.at(n, 3, h, w) = inside ? height : kDepthBackground;
        }
}

inline std::string sample_hash(const Tensor& t, int n) {
    const std::size_t per = static_cast<std::size_t>(t.c) * t.h * t.w;
    const char* base = reinterpret_cast<const char*>(t.v.data() + per * static_cast<std::size_t>(n));
    return sha256_hex(std::string_view(base, per * sizeof(double)));
}

}  // namespace detail

inline ClassificationDataset generate_classification_split(const ClassificationConfig& cfg,
                                                           std::uint64_t seed, int count,
                                                           const std::string& stream) {
    RngStream rng(derive_seed(seed, 0, stream));
    ClassificationDataset ds;
    ds.seed = seed;
    ds.num_classes = cfg.num_classes;
    ds.inputs = Tensor(count, 4, cfg.image_size, cfg.image_size);
    ds.labels.resize(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        const int label = n % cfg.num_classes;  // uniform up to remainder
        ds.labels[static_cast<std::size_t>(n)] = label;
        detail::render_sample(ds.inputs, n, label, cfg.image_size, cfg.rho, cfg.sigma_rgb, rng);
    }
    return ds;
}

// Throws if any test sample is byte-identical to a training sample.
inline void check_split_disjoint(const Tensor& train_inputs, const Tensor& test_inputs) {
    std::set<std::string> seen;
    for (int n = 0; n < train_inputs.n; ++n)
        seen.insert(detail::sample_hash(train_inputs, n));
    for (int n = 0; n < test_inputs.n; ++n)
        if (seen.count(detail::sample_hash(test_inputs, n)))
            throw std::runtime_error("check_split_disjoint: test sample duplicates train");
}

// Train and test splits from independent seed streams.
inline ClassificationSplit generate_classification_data(const ClassificationConfig& cfg,
                                                        std::uint64_t seed) {
    cfg.validate();
    ClassificationSplit split;
    split.train = generate_classification_split(cfg, seed, cfg.train_count, "data-train");
    split.test = generate_classification_split(cfg, seed, cfg.test_count, "data-test");
    check_split_disjoint(split.train.inputs, split.test.inputs);
    return split;
}

// --- dehazing -------------------------------------------------------------------

struct DehazeConfig {
    int train_count = 64;
    int test_count = 32;
    int image_size = 32;
    double beta_min = 1.0;   // scattering coefficient range
    double beta_max = 3.0;
    double airlight = 0.9;
    double t_floor = 0.05;   // transmission below this is treated as saturated

    void validate() const {
        if (train_count <= 0 || test_count <= 0)
            throw std::invalid_argument("DehazeConfig: counts must be positive");
        if (image_size < 8) throw std::invalid_argument("DehazeConfig: image too small");
        if (!(beta_min > 0.0) || beta_max < beta_min)
            throw std::invalid_argument("DehazeConfig: bad beta range");
        if (airlight <= 0.0 || airlight > 1.0)
            throw std::invalid_argument("DehazeConfig: airlight outside (0,1]");
        if (t_floor <= 0.0 || t_floor >= 1.0)
            throw std::invalid_argument("DehazeConfig: t_floor outside (0,1)");
    }

    std::string fingerprint() const {
        char buf[192];
        std::snprintf(buf, sizeof(buf),
                      "dehazing;train=%d;test=%d;size=%d;beta=[%.17g,%.17g];A=%.17g;tf=%.17g",
                      train_count, test_count, image_size, beta_min, beta_max, airlight, t_floor);
        return sha256_hex(buf);
    }
};

struct DehazeDataset {
    Tensor inputs;   // (N, 4, H, W): hazy rgb then true depth
    Tensor targets;  // (N, 3, H, W): clear rgb
    modality::ModalityLayout layout = rgbd_layout();
    std::uint64_t seed = 0;
};

struct DehazeSplit {
    DehazeDataset train;
    DehazeDataset test;
};

namespace detail {

inline double smooth_field(double x, double y, const double p[6]) {
    // two raised cosines with random frequency and phase, range [0,1]
    const double a = std::cos(2.0 * 3.14159265358979323846 * (p[0] * x + p[1] * y + p[2]));
    const double b = std::cos(2.0 * 3.14159265358979323846 * (p[3] * x + p[4] * y + p[5]));
    return 0.25 * (a + 1.0) + 0.25 * (b + 1.0);
}

}  // namespace detail

inline DehazeDataset generate_dehaze_split(const DehazeConfig& cfg, std::uint64_t seed,
                                           int count, const std::string& stream) {
    RngStream rng(derive_seed(seed, 0, stream));
    DehazeDataset ds;
    ds.seed = seed;
    const int s = cfg.image_size;
    ds.inputs = Tensor(count, 4, s, s);
    ds.targets = Tensor(count, 3, s, s);
    for (int n = 0; n < count; ++n) {
        double cp[3][6], dp[6];
        for (auto& ch : cp)
            for (double& v : ch) v = rng.uniform(0.2, 1.8);
        for (double& v : dp) v = rng.uniform(0.2, 1.8);
        const double beta = rng.uniform(cfg.beta_min, cfg.beta_max);
        for (int h = 0; h < s; ++h)
            for (int w = 0; w < s; ++w) {
                const double x = (w + 0.5) / s, y = (h + 0.5) / s;
                const double depth = 0.05 + 0.95 * detail::smooth_field(x, y, dp);
                const double t = std::exp(-beta * depth);
                for (int c = 0; c < 3; ++c) {
                    const double clear = 0.05 + 0.9 * detail::smooth_field(x, y, cp[c]);
                    ds.targets.at(n, c, h, w) = clear;
                    ds.inputs.at(n, c, h, w) = clear * t + cfg.airlight * (1.0 - t);
                }
                ds.inputs.at(n, 3, h, w) = depth;
            }
    }
    return ds;
}

// Round-trip check of the scattering model: recover the clear image from the
// hazy one wherever transmission is above the floor.
inline void verify_haze_invertibility(const DehazeDataset& ds, const DehazeConfig& cfg) {
    for (int n = 0; n < ds.inputs.n; ++n)
        for (int h = 0; h < ds.inputs.h; ++h)
            for (int w = 0; w < ds.inputs.w; ++w) {
                // transmission is not stored; bound it from the model instead
                for (int c = 0; c < 3; ++c) {
                    const double clear = ds.targets.at(n, c, h, w);
                    const double hazy = ds.inputs.at(n, c, h, w);
                    // infer t from the two known values when the contrast allows
                    const double denom = clear - cfg.airlight;
                    if (std::abs(denom) < 1e-3) continue;
                    const double t = (hazy - cfg.airlight) / denom;
                    if (t <= cfg.t_floor) continue;
                    const double recovered = (hazy - cfg.airlight * (1.0 - t)) / t;
                    if (std::abs(recovered - clear) > 1e-6)
                        throw std::runtime_error("dehaze data: scattering model not invertible");
                }
            }
}

inline DehazeSplit generate_dehaze_data(const DehazeConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    DehazeSplit split;
    split.train = generate_dehaze_split(cfg, seed, cfg.train_count, "data-train");
    split.test = generate_dehaze_split(cfg, seed, cfg.test_count, "data-test");
    verify_haze_invertibility(split.train, cfg);
    verify_haze_invertibility(split.test, cfg);
    return split;
}

// --- binary container -----------------------------------------------------------
//
// Layout (little-endian):
//   magic "IDDS0001" | u32 version | u32 task_len | task |
//   u32 modality_count | per modality: u32 name_len, name, i32 channels |
//   i32 n,h,w | u64 seed | u32 hash_len | spec hash |
//   u8 has_targets | u8 has_labels |
//   f32 inputs (n*c*h*w) | [f32 targets (n*3*h*w)] | [i32 labels (n)]

constexpr char kDatasetMagic[8] = {'I', 'D', 'D', 'S', '0', '0', '0', '1'};
constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetBlob {
    std::string task;  // "classification" or "dehazing"
    modality::ModalityLayout layout = rgbd_layout();
    Tensor inputs;
    Tensor targets;           // empty when absent
    std::vector<int> labels;  // empty when absent
    std::uint64_t seed = 0;
    std::string spec_hash;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("dataset: truncated file");
}
inline void write_string(std::ostream& os, const std::string& s) {
    write_pod(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& is) {
    std::uint32_t len = 0;
    read_pod(is, len);
    if (len > (1u << 20)) throw std::runtime_error("dataset: implausible string length");
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw std::runtime_error("dataset: truncated file");
    return s;
}
inline void write_f32_tensor(std::ostream& os, const Tensor& t) {
    for (double v : t.v) {
        const float f = static_cast<float>(v);
        write_pod(os, f);
    }
}
inline void read_f32_tensor(std::istream& is, Tensor& t) {
    for (double& v : t.v) {
        float f = 0.0f;
        read_pod(is, f);
        v = static_cast<double>(f);
    }
}

}  // namespace detail

inline void save_dataset(const std::string& path, const DatasetBlob& blob) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("dataset: cannot open '" + path + "' for writing");
    os.write(kDatasetMagic, sizeof(kDatasetMagic));
    detail::write_pod(os, kDatasetVersion);
    detail::write_string(os, blob.task);
    const auto& entries = blob.layout.entries();
    detail::write_pod(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        detail::write_string(os, e.name);
        detail::write_pod(os, static_cast<std::int32_t>(e.channels));
    }
    detail::write_string(os, blob.layout.canonical_name());
    for (int d : {blob.inputs.n, blob.inputs.h, blob.inputs.w})
        detail::write_pod(os, static_cast<std::int32_t>(d));
    detail::write_pod(os, blob.seed);
    detail::write_string(os, blob.spec_hash);
    detail::write_pod(os, static_cast<std::uint8_t>(blob.targets.v.empty() ? 0 : 1));
    detail::write_pod(os, static_cast<std::uint8_t>(blob.labels.empty() ? 0 : 1));
    detail::write_f32_tensor(os, blob.inputs);
    if (!blob.targets.v.empty()) detail::write_f32_tensor(os, blob.targets);
    for (int l : blob.labels) detail::write_pod(os, static_cast<std::int32_t>(l));
    if (!os) throw std::runtime_error("dataset: write to '" + path + "' failed");
}

inline DatasetBlob load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("dataset: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
        throw std::runtime_error("dataset: bad magic in '" + path + "'");
    std::uint32_t version = 0;
    detail::read_pod(is, version);
    if (version != kDatasetVersion)
        throw std::runtime_error("dataset: unsupported format version " + std::to_string(version));
    DatasetBlob blob;
    blob.task = detail::read_string(is);
    std::uint32_t mod_count = 0;
    detail::read_pod(is, mod_count);
    std::vector<modality::ModalityEntry> entries;
    int channels = 0;
    for (std::uint32_t i = 0; i < mod_count; ++i) {
        modality::ModalityEntry e;
        e.name = detail::read_string(is);
        std::int32_t ch = 0;
        detail::read_pod(is, ch);
        e.channels = ch;
        channels += ch;
        entries.push_back(e);
    }
    const std::string canonical = detail::read_string(is);
    blob.layout = modality::ModalityLayout(entries, canonical);
    std::int32_t n = 0, h = 0, w = 0;
    detail::read_pod(is, n);
    detail::read_pod(is, h);
    detail::read_pod(is, w);
    detail::read_pod(is, blob.seed);
    blob.spec_hash = detail::read_string(is);
    std::uint8_t has_targets = 0, has_labels = 0;
    detail::read_pod(is, has_targets);
    detail::read_pod(is, has_labels);
    blob.inputs = Tensor(n, channels, h, w);
    detail::read_f32_tensor(is, blob.inputs);
    if (has_targets) {
        blob.targets = Tensor(n, 3, h, w);
        detail::read_f32_tensor(is, blob.targets);
    }
    if (has_labels) {
        blob.labels.resize(static_cast<std::size_t>(n));
        for (int& l : blob.labels) {
            std::int32_t v = 0;
            detail::read_pod(is, v);
            l = v;
        }
    }
    return blob;
}

}  // namespace indrop::synthdata
