#pragma once

// Network builders for the experiment suite plus first-layer channel
// inflation: widening a trained network's input convolution so it accepts
// extra modality channels while (with zero init) reproducing the donor's
// outputs exactly whenever those extra channels are zero.

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "indrop/nn.hpp"
#include "indrop/rng.hpp"
#include "indrop/tensor.hpp"

namespace indrop::adapt {

enum class InflateInit { zeros, random_fan_in };

// Returns a copy of a conv weight (out,in,kh,kw) widened to in+extra input
// channels. The donor slice is copied verbatim; the new slice is zero or
// uniform in +-1/sqrt(new_fan_in). The input tensor is never mutated.
inline Tensor expand_input_channels(const Tensor& weight, int extra, InflateInit init,
                                    RngStream* rng = nullptr) {
    if (extra <= 0) throw std::invalid_argument("expand_input_channels: extra must be positive");
    if (init == InflateInit::random_fan_in && rng == nullptr)
        throw std::invalid_argument("expand_input_channels: random init needs an RNG stream");
    Tensor out(weight.n, weight.c + extra, weight.h, weight.w);
    const double bound =
        1.0 / std::sqrt(static_cast<double>(weight.c + extra) * weight.h * weight.w);
    for (int oc = 0; oc < out.n; ++oc)
        for (int ic = 0; ic < out.c; ++ic)
            for (int kh = 0; kh < out.h; ++kh)
                for (int kw = 0; kw < out.w; ++kw)
                    out.at(oc, ic, kh, kw) =
                        ic < weight.c
                            ? weight.at(oc, ic, kh, kw)
                            : (init == InflateInit::zeros ? 0.0 : rng->uniform(-bound, bound));
    return out;
}

namespace detail {

inline std::unique_ptr<nn::Layer> res_block(const std::string& name, int ch, RngStream& rng) {
    auto body = std::make_unique<nn::Sequential>();
    body->emplace<nn::Conv2d>(name + ".conv1", ch, ch, 3, 1, 1, true, rng);
    body->emplace<nn::ReLU>();
    body->emplace<nn::Conv2d>(name + ".conv2", ch, ch, 3, 1, 1, true, rng);
    return std::make_unique<nn::Residual>(std::move(body));
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw std::invalid_argument("concat_channels: incompatible shapes " + a.shape_str() +
                                    " and " + b.shape_str());
    Tensor out(a.n, a.c + b.c, a.h, a.w);
    for (int n = 0; n < a.n; ++n) {
        for (int c = 0; c < a.c; ++c)
            for (int h = 0; h < a.h; ++h)
                for (int w = 0; w < a.w; ++w) out.at(n, c, h, w) = a.at(n, c, h, w);
        for (int c = 0; c < b.c; ++c)
            for (int h = 0; h < a.h; ++h)
                for (int w = 0; w < a.w; ++w) out.at(n, a.c + c, h, w) = b.at(n, c, h, w);
    }
    return out;
}

// Copies src params onto dst params; the one whose shape differs must be the
// named first-conv weight, which gets the inflated copy instead.
inline void copy_with_inflated_first(const std::vector<nn::Param*>& src,
                                     const std::vector<nn::Param*>& dst,
                                     const std::string& first_weight_name, int extra,
                                     InflateInit init, RngStream* rng) {
    if (src.size() != dst.size())
        throw std::logic_error("inflate: parameter list size mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i]->name != dst[i]->name)
            throw std::logic_error("inflate: parameter order mismatch at '" + src[i]->name + "'");
        if (src[i]->name == first_weight_name) {
            dst[i]->value = expand_input_channels(src[i]->value, extra, init, rng);
        } else {
            require_same_shape(src[i]->value, dst[i]->value,
                               ("inflate: " + src[i]->name).c_str());
            dst[i]->value = src[i]->value;
        }
    }
}

}  // namespace detail

// --- classifier ------------------------------------------------------------

struct ClassifierSpec {
    int in_channels = 3;
    int num_classes = 4;
    int width = 16;
    int res_blocks = 2;  // split between the two resolutions

    void validate() const {
        if (in_channels <= 0 || num_classes < 2 || width <= 0 || res_blocks < 0)
            throw std::invalid_argument("ClassifierSpec: bad field");
    }
};

// stem (stride 2) -> res blocks @ w -> transition (stride 2) -> res blocks
// @ 2w -> global average pool -> linear head.
class ClassifierNet {
public:
    ClassifierNet(ClassifierSpec spec, RngStream& rng) : spec_(spec) {
        spec_.validate();
        const int w = spec_.width;
        auto stem = std::make_unique<nn::Conv2d>("stem", spec_.in_channels, w, 3, 2, 1, true, rng);
        stem_ = stem.get();
        seq_.add(std::move(stem));
        seq_.emplace<nn::ReLU>();
        const int stage1 = spec_.res_blocks / 2;
        for (int b = 0; b < stage1; ++b)
            seq_.add(detail::res_block("stage1.block" + std::to_string(b), w, rng));
        seq_.emplace<nn::Conv2d>("transition", w, 2 * w, 3, 2, 1, true, rng);
        seq_.emplace<nn::ReLU>();
        for (int b = stage1; b < spec_.res_blocks; ++b)
            seq_.add(detail::res_block("stage2.block" + std::to_string(b), 2 * w, rng));
        seq_.emplace<nn::GlobalAvgPool>();
        seq_.emplace<nn::Linear>("head", 2 * w, spec_.num_classes, rng);
    }

    Tensor forward(const Tensor& x, bool train) { return seq_.forward(x, train); }
    Tensor backward(const Tensor& g) { return seq_.backward(g); }
    std::vector<nn::Param*> params() { return seq_.params(); }
    const ClassifierSpec& spec() const { return spec_; }
    nn::Conv2d& stem() { return *stem_; }

private:
    ClassifierSpec spec_;
    nn::Sequential seq_;
    nn::Conv2d* stem_ = nullptr;
};

// New classifier accepting extra input channels, weights copied from the
// donor (which is left untouched).
inline ClassifierNet inflate_classifier_input(ClassifierNet& donor, int extra, InflateInit init,
                                              std::uint64_t seed) {
    ClassifierSpec s = donor.spec();
    s.in_channels += extra;
    RngStream build_rng(seed);
    ClassifierNet target(s, build_rng);
    RngStream fill_rng(derive_seed(seed, 0, "inflate"));
    detail::copy_with_inflated_first(donor.params(), target.params(), "stem.weight", extra,
                                     init, &fill_rng);
    return target;
}

// --- image-to-image generator ----------------------------------------------

struct GeneratorSpec {
    int in_channels = 3;
    int out_channels = 3;
    int width = 16;
    int res_blocks = 3;

    void validate() const {
        if (in_channels <= 0 || out_channels <= 0 || width <= 0 || res_blocks < 0)
            throw std::invalid_argument("GeneratorSpec: bad field");
    }
};

// encode -> downsample -> residual trunk -> upsample -> sigmoid output so
// predictions live in [0,1] like the image data.
class GeneratorNet {
public:
    GeneratorNet(GeneratorSpec spec, RngStream& rng) : spec_(spec) {
        spec_.validate();
        const int w = spec_.width;
        seq_.emplace<nn::Conv2d>("enc", spec_.in_channels, w, 3, 1, 1, true, rng);
        seq_.emplace<nn::ReLU>();
        seq_.emplace<nn::Conv2d>("down", w, 2 * w, 3, 2, 1, true, rng);
        seq_.emplace<nn::ReLU>();
        for (int b = 0; b < spec_.res_blocks; ++b)
            seq_.add(detail::res_block("trunk.block" + std::to_string(b), 2 * w, rng));
        seq_.emplace<nn::Upsample2x>();
        seq_.emplace<nn::Conv2d>("up", 2 * w, w, 3, 1, 1, true, rng);
        seq_.emplace<nn::ReLU>();
        seq_.emplace<nn::Conv2d>("out", w, spec_.out_channels, 3, 1, 1, true, rng);
        seq_.emplace<nn::Sigmoid>();
    }

    Tensor forward(const Tensor& x, bool train) { return seq_.forward(x, train); }
    Tensor backward(const Tensor& g) { return seq_.backward(g); }
    std::vector<nn::Param*> params() { return seq_.params(); }
    const GeneratorSpec& spec() const { return spec_; }

private:
    GeneratorSpec spec_;
    nn::Sequential seq_;
};

inline GeneratorNet inflate_generator_input(GeneratorNet& donor, int extra, InflateInit init,
                                            std::uint64_t seed) {
    GeneratorSpec s = donor.spec();
    s.in_channels += extra;
    RngStream build_rng(seed);
    GeneratorNet target(s, build_rng);
    RngStream fill_rng(derive_seed(seed, 0, "inflate"));
    detail::copy_with_inflated_first(donor.params(), target.params(), "enc.weight", extra,
                                     init, &fill_rng);
    return target;
}

// --- patch discriminator -----------------------------------------------------

struct DiscriminatorSpec {
    int in_channels = 3;
    int width = 16;

    void validate() const {
        if (in_channels <= 0 || width <= 0)
            throw std::invalid_argument("DiscriminatorSpec: bad field");
    }
};

// Three conv stages emitting a one-channel realness map over patches.
class PatchDiscriminator {
public:
    PatchDiscriminator(DiscriminatorSpec spec, RngStream& rng) : spec_(spec) {
        spec_.validate();
        const int w = spec_.width;
        seq_.emplace<nn::Conv2d>("d1", spec_.in_channels, w, 3, 2, 1, true, rng);
        seq_.emplace<nn::LeakyReLU>(0.2);
        seq_.emplace<nn::Conv2d>("d2", w, 2 * w, 3, 2, 1, true, rng);
        seq_.emplace<nn::LeakyReLU>(0.2);
        seq_.emplace<nn::Conv2d>("d3", 2 * w, 1, 3, 1, 1, true, rng);
    }

    Tensor forward(const Tensor& x, bool train) { return seq_.forward(x, train); }
    Tensor backward(const Tensor& g) { return seq_.backward(g); }
    std::vector<nn::Param*> params() { return seq_.params(); }
    const DiscriminatorSpec& spec() const { return spec_; }

private:
    DiscriminatorSpec spec_;
    nn::Sequential seq_;
};

// --- two-branch fusion network ----------------------------------------------

struct ModDropSpec {
    int rgb_channels = 3;
    int add_channels = 1;
    int num_classes = 4;
    int width = 16;
    int fusion_depth = 1;  // residual blocks per branch before fusion

    void validate() const {
        if (rgb_channels <= 0 || add_channels <= 0 || num_classes < 2 || width <= 0 ||
            fusion_depth < 0)
            throw std::invalid_argument("ModDropSpec: bad field");
    }
};

// Per-modality branches fused by channel concatenation into a shared trunk.
// Modality dropping is applied to the input tensor by the caller; the network
// itself is deterministic.
class ModDropNet {
public:
    ModDropNet(ModDropSpec spec, RngStream& rng) : spec_(spec) {
        spec_.validate();
        const int w = spec_.width;
        branch_rgb_.emplace<nn::Conv2d>("rgb.stem", spec_.rgb_channels, w, 3, 2, 1, true, rng);
        branch_rgb_.emplace<nn::ReLU>();
        for (int b = 0; b < spec_.fusion_depth; ++b)
            branch_rgb_.add(detail::res_block("rgb.block" + std::to_string(b), w, rng));
        branch_add_.emplace<nn::Conv2d>("add.stem", spec_.add_channels, w, 3, 2, 1, true, rng);
        branch_add_.emplace<nn::ReLU>();
        for (int b = 0; b < spec_.fusion_depth; ++b)
            branch_add_.add(detail::res_block("add.block" + std::to_string(b), w, rng));
        trunk_.emplace<nn::Conv2d>("fuse", 2 * w, 2 * w, 3, 2, 1, true, rng);
        trunk_.emplace<nn::ReLU>();
        trunk_.add(detail::res_block("trunk.block0", 2 * w, rng));
        trunk_.emplace<nn::GlobalAvgPool>();
        trunk_.emplace<nn::Linear>("head", 2 * w, spec_.num_classes, rng);
    }

    Tensor forward(const Tensor& x, bool train) {
        const int total = spec_.rgb_channels + spec_.add_channels;
        if (x.c != total)
            throw std::invalid_argument("ModDropNet: expected " + std::to_string(total) +
                                        " channels, got " + std::to_string(x.c));
        Tensor f_rgb = branch_rgb_.forward(slice_channels(x, 0, spec_.rgb_channels), train);
        Tensor f_add = branch_add_.forward(slice_channels(x, spec_.rgb_channels, total), train);
        return trunk_.forward(detail::concat_channels(f_rgb, f_add), train);
    }

    Tensor backward(const Tensor& g) {
        Tensor dfused = trunk_.backward(g);
        const int w = spec_.width;
        Tensor drgb = branch_rgb_.backward(slice_channels(dfused, 0, w));
        Tensor dadd = branch_add_.backward(slice_channels(dfused, w, 2 * w));
        return detail::concat_channels(drgb, dadd);
    }

    std::vector<nn::Param*> params() {
        std::vector<nn::Param*> out;
        for (nn::Param* p : branch_rgb_.params()) out.push_back(p);
        for (nn::Param* p : branch_add_.params()) out.push_back(p);
        for (nn::Param* p : trunk_.params()) out.push_back(p);
        return out;
    }
    const ModDropSpec& spec() const { return spec_; }

private:
    ModDropSpec spec_;
    nn::Sequential branch_rgb_, branch_add_, trunk_;
};

}  // namespace indrop::adapt
