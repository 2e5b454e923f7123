#pragma once

// Training losses: softmax cross-entropy, L1, least-squares GAN objectives,
// and a frozen random-feature perceptual distance. Every loss returns its
// scalar value together with the gradient w.r.t. the prediction so training
// loops can chain them through Layer::backward.

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "indrop/nn.hpp"
#include "indrop/rng.hpp"
#include "indrop/tensor.hpp"

namespace indrop::losses {

struct LossValue {
    double value = 0.0;
    Tensor grad;  // w.r.t. the prediction argument
};

inline LossValue l1_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "l1_loss");
    LossValue out;
    out.grad = Tensor(pred.n, pred.c, pred.h, pred.w);
    const double inv = 1.0 / static_cast<double>(pred.v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const double d = pred.v[i] - target.v[i];
        s += std::abs(d);
        out.grad.v[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv;
    }
    out.value = s * inv;
    return out;
}

inline LossValue mse_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse_loss");
    LossValue out;
    out.grad = Tensor(pred.n, pred.c, pred.h, pred.w);
    const double inv = 1.0 / static_cast<double>(pred.v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const double d = pred.v[i] - target.v[i];
        s += d * d;
        out.grad.v[i] = 2.0 * d * inv;
    }
    out.value = s * inv;
    return out;
}

struct CrossEntropyValue {
    double value = 0.0;
    Tensor dlogits;
    double accuracy = 0.0;
};

// Mean negative log-likelihood over the batch, from raw logits (N,K,1,1).
inline CrossEntropyValue softmax_cross_entropy(const Tensor& logits,
                                               const std::vector<int>& labels) {
    if (logits.h != 1 || logits.w != 1)
        throw std::invalid_argument("softmax_cross_entropy: logits must be (N,K,1,1)");
    if (static_cast<int>(labels.size()) != logits.n)
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    CrossEntropyValue out;
    out.dlogits = Tensor(logits.n, logits.c, 1, 1);
    const double invn = 1.0 / static_cast<double>(logits.n);
    int correct = 0;
    for (int n = 0; n < logits.n; ++n) {
        const int y = labels[static_cast<std::size_t>(n)];
        if (y < 0 || y >= logits.c)
            throw std::invalid_argument("softmax_cross_entropy: label out of range");
        double mx = logits.at(n, 0, 0, 0);
        int argmax = 0;
        for (int k = 1; k < logits.c; ++k)
            if (logits.at(n, k, 0, 0) > mx) { mx = logits.at(n, k, 0, 0); argmax = k; }
        if (argmax == y) ++correct;
        double z = 0.0;
        for (int k = 0; k < logits.c; ++k) z += std::exp(logits.at(n, k, 0, 0) - mx);
        const double logz = std::log(z) + mx;
        out.value += (logz - logits.at(n, y, 0, 0)) * invn;
        for (int k = 0; k < logits.c; ++k) {
            const double p = std::exp(logits.at(n, k, 0, 0) - logz);
            out.dlogits.at(n, k, 0, 0) = (p - (k == y ? 1.0 : 0.0)) * invn;
        }
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(logits.n);
    return out;
}

// --- least-squares GAN -------------------------------------------------------

// Generator objective: mean((D(fake) - 1)^2), gradient w.r.t. D(fake).
inline LossValue lsgan_generator_loss(const Tensor& d_fake) {
    LossValue out;
    out.grad = Tensor(d_fake.n, d_fake.c, d_fake.h, d_fake.w);
    const double inv = 1.0 / static_cast<double>(d_fake.v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < d_fake.v.size(); ++i) {
        const double d = d_fake.v[i] - 1.0;
        s += d * d;
        out.grad.v[i] = 2.0 * d * inv;
    }
    out.value = s * inv;
    return out;
}

struct DiscriminatorLoss {
    double value = 0.0;
    Tensor grad_real;  // w.r.t. D(real)
    Tensor grad_fake;  // w.r.t. D(fake)
};

// Discriminator objective: 0.5 * (mean((D(real)-1)^2) + mean(D(fake)^2)).
// The two gradients let callers backpropagate the real and fake passes
// separately, accumulating parameter gradients across both.
inline DiscriminatorLoss lsgan_discriminator_loss(const Tensor& d_real, const Tensor& d_fake) {
    require_same_shape(d_real, d_fake, "lsgan_discriminator_loss");
    DiscriminatorLoss out;
    out.grad_real = Tensor(d_real.n, d_real.c, d_real.h, d_real.w);
    out.grad_fake = Tensor(d_fake.n, d_fake.c, d_fake.h, d_fake.w);
    const double inv = 1.0 / static_cast<double>(d_real.v.size());
    double sr = 0.0, sf = 0.0;
    for (std::size_t i = 0; i < d_real.v.size(); ++i) {
        const double dr = d_real.v[i] - 1.0;
        sr += dr * dr;
        out.grad_real.v[i] = dr * inv;  // 0.5 * 2 * dr * inv
        const double df = d_fake.v[i];
        sf += df * df;
        out.grad_fake.v[i] = df * inv;
    }
    out.value = 0.5 * (sr + sf) * inv;
    return out;
}

// --- frozen random-feature perceptual distance -------------------------------

// A small fixed conv stack with seeded random weights; the perceptual loss is
// the mean over tapped stages of the MSE between the two images' feature
// maps. The stack's weights are never trained.
class PerceptualExtractor {
public:
    PerceptualExtractor(int in_channels, std::uint64_t seed, std::vector<int> taps = {1, 2, 3})
        : taps_(std::move(taps)) {
        if (in_channels <= 0)
            throw std::invalid_argument("PerceptualExtractor: bad channel count");
        if (taps_.empty()) throw std::invalid_argument("PerceptualExtractor: no taps");
        for (int t : taps_)
            if (t < 1 || t > 3)
                throw std::invalid_argument("PerceptualExtractor: tap outside stages 1..3");
        RngStream rng(seed);
        const int widths[3] = {8, 16, 32};
        int prev = in_channels;
        for (int s = 0; s < 3; ++s) {
            layers_.push_back(std::make_unique<nn::Conv2d>("feat" + std::to_string(s + 1),
                                                           prev, widths[s], 3, 2, 1, true, rng));
            layers_.push_back(std::make_unique<nn::ReLU>());
            prev = widths[s];
        }
    }

    // Loss value and gradient w.r.t. pred; target is treated as constant.
    LossValue loss(const Tensor& pred, const Tensor& target) {
        require_same_shape(pred, target, "PerceptualExtractor::loss");
        const std::vector<Tensor> target_feats = run(target);
        const std::vector<Tensor> pred_feats = run(pred);  // leaves caches on pred

        LossValue out;
        const double invk = 1.0 / static_cast<double>(taps_.size());
        std::vector<Tensor> tap_grads(3);
        for (int t : taps_) {
            const Tensor& pf = pred_feats[static_cast<std::size_t>(t - 1)];
            const Tensor& tf = target_feats[static_cast<std::size_t>(t - 1)];
            LossValue stage = mse_loss(pf, tf);
            out.value += stage.value * invk;
            for (double& g : stage.grad.v) g *= invk;
            tap_grads[static_cast<std::size_t>(t - 1)] = std::move(stage.grad);
        }

        // walk the stack backwards, injecting tap gradients where they attach
        Tensor g(pred_feats.back().n, pred_feats.back().c, pred_feats.back().h,
                 pred_feats.back().w);
        for (std::size_t i = layers_.size(); i-- > 0;) {
            if (i % 2 == 1) {  // output of stage (i/2 + 1) ReLU
                const Tensor& tg = tap_grads[i / 2];
                if (!tg.v.empty())
                    for (std::size_t j = 0; j < g.v.size(); ++j) g.v[j] += tg.v[j];
            }
            g = layers_[i]->backward(g);
        }
        out.grad = std::move(g);
        return out;
    }

private:
    std::vector<Tensor> run(const Tensor& x) {
        std::vector<Tensor> feats;
        Tensor y = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            y = layers_[i]->forward(y, false);
            if (i % 2 == 1) feats.push_back(y);
        }
        return feats;
    }

    std::vector<std::unique_ptr<nn::Layer>> layers_;
    std::vector<int> taps_;
};

// --- composite generator objective -------------------------------------------

struct GanWeights {
    double lambda_l1 = 10.0;
    double lambda_perceptual = 10.0;
};

// Scalar composition of the three generator terms.
inline double compose_generator_loss(double gan, double l1, double perceptual,
                                     const GanWeights& w) {
    return gan + w.lambda_l1 * l1 + w.lambda_perceptual * perceptual;
}

struct GeneratorLossBreakdown {
    double total = 0.0;
    double gan = 0.0;
    double l1 = 0.0;
    double perceptual = 0.0;
    Tensor grad_pred;    // l1 + perceptual contribution, w.r.t. the prediction
    Tensor grad_d_fake;  // gan contribution, w.r.t. D(fake)
};

// Full generator objective for the dehazing GAN. The caller adds the GAN
// contribution to grad_pred by backpropagating grad_d_fake through the
// discriminator down to its input.
inline GeneratorLossBreakdown dehaze_generator_loss(const Tensor& pred, const Tensor& target,
                                                    const Tensor& d_fake,
                                                    PerceptualExtractor& percep,
                                                    const GanWeights& w) {
    GeneratorLossBreakdown out;
    LossValue gan = lsgan_generator_loss(d_fake);
    LossValue l1 = l1_loss(pred, target);
    LossValue lp = percep.loss(pred, target);
    out.gan = gan.value;
    out.l1 = l1.value;
    out.perceptual = lp.value;
    out.total = compose_generator_loss(out.gan, out.l1, out.perceptual, w);
    out.grad_pred = Tensor(pred.n, pred.c, pred.h, pred.w);
    for (std::size_t i = 0; i < out.grad_pred.v.size(); ++i)
        out.grad_pred.v[i] = w.lambda_l1 * l1.grad.v[i] + w.lambda_perceptual * lp.grad.v[i];
    out.grad_d_fake = std::move(gan.grad);
    return out;
}

}  // namespace indrop::losses
