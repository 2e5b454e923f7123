#pragma once

// Minimal CPU training stack: layers with explicit forward/backward passes,
// SGD with momentum, and a binary checkpoint container for named arrays.
//
// Convolution is im2col + a dense GEMM. Everything runs in double precision
// on a single thread so repeated runs are bit-identical.

#ifndef EIGEN_DONT_PARALLELIZE
#define EIGEN_DONT_PARALLELIZE
#endif

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "indrop/rng.hpp"
#include "indrop/tensor.hpp"

namespace indrop::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string name_, Tensor value_)
        : name(std::move(name_)), value(std::move(value_)),
          grad(value.n, value.c, value.h, value.w) {}
};

class Layer {
public:
    virtual ~Layer() = default;
    // Caches whatever the matching backward() needs.
    virtual Tensor forward(const Tensor& x, bool train) = 0;
    // Returns d(loss)/d(input); accumulates into param grads (+=).
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual std::vector<Param*> params() { return {}; }
};

class Conv2d : public Layer {
public:
    Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int padding,
           bool bias, RngStream& rng)
        : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), stride_(stride), pad_(padding),
          has_bias_(bias) {
        if (in_ch <= 0 || out_ch <= 0 || kernel <= 0 || stride <= 0 || padding < 0)
            throw std::invalid_argument("Conv2d: bad geometry");
        weight_ = Param(name + ".weight", Tensor(out_ch, in_ch, kernel, kernel));
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch) * kernel * kernel);
        for (double& v : weight_.value.v) v = rng.uniform(-bound, bound);
        if (has_bias_) {
            bias_ = Param(name + ".bias", Tensor(out_ch, 1, 1, 1));
            for (double& v : bias_.value.v) v = rng.uniform(-bound, bound);
        }
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.c != in_ch_)
            throw std::invalid_argument("Conv2d: expected " + std::to_string(in_ch_) +
                                        " input channels, got " + std::to_string(x.c));
        in_shape_ = {x.n, x.c, x.h, x.w};
        oh_ = (x.h + 2 * pad_ - k_) / stride_ + 1;
        ow_ = (x.w + 2 * pad_ - k_) / stride_ + 1;
        if (oh_ <= 0 || ow_ <= 0)
            throw std::invalid_argument("Conv2d: input smaller than receptive field");

        const int kdim = in_ch_ * k_ * k_;
        const int ncols = x.n * oh_ * ow_;
        cols_.resize(kdim, ncols);
        for (int n = 0; n < x.n; ++n)
            for (int oh = 0; oh < oh_; ++oh)
                for (int ow = 0; ow < ow_; ++ow) {
                    const int col = (n * oh_ + oh) * ow_ + ow;
                    for (int ic = 0; ic < in_ch_; ++ic)
                        for (int kh = 0; kh < k_; ++kh)
                            for (int kw = 0; kw < k_; ++kw) {
                                const int ih = oh * stride_ - pad_ + kh;
                                const int iw = ow * stride_ - pad_ + kw;
                                const int row = (ic * k_ + kh) * k_ + kw;
                                cols_(row, col) =
                                    (ih >= 0 && ih < x.h && iw >= 0 && iw < x.w)
                                        ? x.at(n, ic, ih, iw)
                                        : 0.0;
                            }
                }

        Eigen::Map<const MatRM> w(weight_.value.v.data(), out_ch_, kdim);
        Eigen::MatrixXd out_mat = w * cols_;
        if (has_bias_)
            for (int oc = 0; oc < out_ch_; ++oc)
                out_mat.row(oc).array() += bias_.value.v[static_cast<std::size_t>(oc)];

        Tensor out(x.n, out_ch_, oh_, ow_);
        for (int n = 0; n < x.n; ++n)
            for (int oc = 0; oc < out_ch_; ++oc)
                for (int oh = 0; oh < oh_; ++oh)
                    for (int ow = 0; ow < ow_; ++ow)
                        out.at(n, oc, oh, ow) = out_mat(oc, (n * oh_ + oh) * ow_ + ow);
        return out;
    }

    Tensor backward(const Tensor& g) override {
        const auto [xn, xc, xh, xw] = in_shape_;
        if (g.n != xn || g.c != out_ch_ || g.h != oh_ || g.w != ow_)
            throw std::invalid_argument("Conv2d: gradient shape mismatch");
        const int kdim = in_ch_ * k_ * k_;
        const int ncols = xn * oh_ * ow_;

        Eigen::MatrixXd gmat(out_ch_, ncols);
        for (int n = 0; n < xn; ++n)
            for (int oc = 0; oc < out_ch_; ++oc)
                for (int oh = 0; oh < oh_; ++oh)
                    for (int ow = 0; ow < ow_; ++ow)
                        gmat(oc, (n * oh_ + oh) * ow_ + ow) = g.at(n, oc, oh, ow);

        Eigen::Map<MatRM> dw(weight_.grad.v.data(), out_ch_, kdim);
        dw.noalias() += gmat * cols_.transpose();
        if (has_bias_)
            for (int oc = 0; oc < out_ch_; ++oc)
                bias_.grad.v[static_cast<std::size_t>(oc)] += gmat.row(oc).sum();

        Eigen::Map<const MatRM> w(weight_.value.v.data(), out_ch_, kdim);
        Eigen::MatrixXd dcols = w.transpose() * gmat;

        Tensor dx(xn, xc, xh, xw);
        for (int n = 0; n < xn; ++n)
            for (int oh = 0; oh < oh_; ++oh)
                for (int ow = 0; ow < ow_; ++ow) {
                    const int col = (n * oh_ + oh) * ow_ + ow;
                    for (int ic = 0; ic < in_ch_; ++ic)
                        for (int kh = 0; kh < k_; ++kh)
                            for (int kw = 0; kw < k_; ++kw) {
                                const int ih = oh * stride_ - pad_ + kh;
                                const int iw = ow * stride_ - pad_ + kw;
                                if (ih >= 0 && ih < xh && iw >= 0 && iw < xw)
                                    dx.at(n, ic, ih, iw) +=
                                        dcols((ic * k_ + kh) * k_ + kw, col);
                            }
                }
        return dx;
    }

    std::vector<Param*> params() override {
        std::vector<Param*> p{&weight_};
        if (has_bias_) p.push_back(&bias_);
        return p;
    }

    Param& weight() { return weight_; }
    Param& bias() {
        if (!has_bias_) throw std::logic_error("Conv2d: layer has no bias");
        return bias_;
    }
    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }
    int kernel() const { return k_; }
    int stride() const { return stride_; }
    int padding() const { return pad_; }
    bool has_bias() const { return has_bias_; }

private:
    int in_ch_, out_ch_, k_, stride_, pad_;
    bool has_bias_;
    Param weight_, bias_;
    std::tuple<int, int, int, int> in_shape_{};
    int oh_ = 0, ow_ = 0;
    Eigen::MatrixXd cols_;
};

class Linear : public Layer {
public:
    Linear(std::string name, int in_dim, int out_dim, RngStream& rng)
        : in_dim_(in_dim), out_dim_(out_dim) {
        if (in_dim <= 0 || out_dim <= 0) throw std::invalid_argument("Linear: bad dims");
        weight_ = Param(name + ".weight", Tensor(out_dim, in_dim, 1, 1));
        bias_ = Param(name + ".bias", Tensor(out_dim, 1, 1, 1));
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
        for (double& v : weight_.value.v) v = rng.uniform(-bound, bound);
        for (double& v : bias_.value.v) v = rng.uniform(-bound, bound);
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.c != in_dim_ || x.h != 1 || x.w != 1)
            throw std::invalid_argument("Linear: expected input (N," +
                                        std::to_string(in_dim_) + ",1,1), got " + x.shape_str());
        x_cache_ = x;
        Eigen::Map<const MatRM> xm(x.v.data(), x.n, in_dim_);
        Eigen::Map<const MatRM> wm(weight_.value.v.data(), out_dim_, in_dim_);
        MatRM ym = xm * wm.transpose();
        Tensor y(x.n, out_dim_, 1, 1);
        for (int n = 0; n < x.n; ++n)
            for (int o = 0; o < out_dim_; ++o)
                y.at(n, o, 0, 0) = ym(n, o) + bias_.value.v[static_cast<std::size_t>(o)];
        return y;
    }

    Tensor backward(const Tensor& g) override {
        if (g.n != x_cache_.n || g.c != out_dim_ || g.h != 1 || g.w != 1)
            throw std::invalid_argument("Linear: gradient shape mismatch");
        Eigen::Map<const MatRM> gm(g.v.data(), g.n, out_dim_);
        Eigen::Map<const MatRM> xm(x_cache_.v.data(), x_cache_.n, in_dim_);
        Eigen::Map<const MatRM> wm(weight_.value.v.data(), out_dim_, in_dim_);
        Eigen::Map<MatRM> dwm(weight_.grad.v.data(), out_dim_, in_dim_);
        dwm.noalias() += gm.transpose() * xm;
        for (int o = 0; o < out_dim_; ++o)
            bias_.grad.v[static_cast<std::size_t>(o)] += gm.col(o).sum();
        MatRM dxm = gm * wm;
        Tensor dx(x_cache_.n, in_dim_, 1, 1);
        std::memcpy(dx.v.data(), dxm.data(), dx.v.size() * sizeof(double));
        return dx;
    }

    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    Param& weight() { return weight_; }
    Param& bias() { return bias_; }

private:
    int in_dim_, out_dim_;
    Param weight_, bias_;
    Tensor x_cache_;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        mask_.assign(x.v.size(), 0);
        Tensor y = x;
        for (std::size_t i = 0; i < y.v.size(); ++i) {
            if (y.v[i] > 0.0) mask_[i] = 1;
            else y.v[i] = 0.0;
        }
        return y;
    }
    Tensor backward(const Tensor& g) override {
        if (g.v.size() != mask_.size()) throw std::invalid_argument("ReLU: gradient shape mismatch");
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.v.size(); ++i)
            if (!mask_[i]) dx.v[i] = 0.0;
        return dx;
    }

private:
    std::vector<unsigned char> mask_;
};

class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(double slope = 0.2) : slope_(slope) {}
    Tensor forward(const Tensor& x, bool) override {
        mask_.assign(x.v.size(), 0);
        Tensor y = x;
        for (std::size_t i = 0; i < y.v.size(); ++i) {
            if (y.v[i] > 0.0) mask_[i] = 1;
            else y.v[i] *= slope_;
        }
        return y;
    }
    Tensor backward(const Tensor& g) override {
        if (g.v.size() != mask_.size())
            throw std::invalid_argument("LeakyReLU: gradient shape mismatch");
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.v.size(); ++i)
            if (!mask_[i]) dx.v[i] *= slope_;
        return dx;
    }

private:
    double slope_;
    std::vector<unsigned char> mask_;
};

class Sigmoid : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        y_cache_ = x;
        for (double& v : y_cache_.v) v = 1.0 / (1.0 + std::exp(-v));
        return y_cache_;
    }
    Tensor backward(const Tensor& g) override {
        require_same_shape(g, y_cache_, "Sigmoid::backward");
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.v.size(); ++i)
            dx.v[i] *= y_cache_.v[i] * (1.0 - y_cache_.v[i]);
        return dx;
    }

private:
    Tensor y_cache_;
};

class Tanh : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        y_cache_ = x;
        for (double& v : y_cache_.v) v = std::tanh(v);
        return y_cache_;
    }
    Tensor backward(const Tensor& g) override {
        require_same_shape(g, y_cache_, "Tanh::backward");
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.v.size(); ++i)
            dx.v[i] *= 1.0 - y_cache_.v[i] * y_cache_.v[i];
        return dx;
    }

private:
    Tensor y_cache_;
};

class GlobalAvgPool : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        in_shape_ = {x.n, x.c, x.h, x.w};
        Tensor y(x.n, x.c, 1, 1);
        const double inv = 1.0 / (static_cast<double>(x.h) * x.w);
        for (int n = 0; n < x.n; ++n)
            for (int c = 0; c < x.c; ++c) {
                double s = 0.0;
                for (int h = 0; h < x.h; ++h)
                    for (int w = 0; w < x.w; ++w) s += x.at(n, c, h, w);
                y.at(n, c, 0, 0) = s * inv;
            }
        return y;
    }
    Tensor backward(const Tensor& g) override {
        const auto [n_, c_, h_, w_] = in_shape_;
        if (g.n != n_ || g.c != c_ || g.h != 1 || g.w != 1)
            throw std::invalid_argument("GlobalAvgPool: gradient shape mismatch");
        Tensor dx(n_, c_, h_, w_);
        const double inv = 1.0 / (static_cast<double>(h_) * w_);
        for (int n = 0; n < n_; ++n)
            for (int c = 0; c < c_; ++c) {
                const double v = g.at(n, c, 0, 0) * inv;
                for (int h = 0; h < h_; ++h)
                    for (int w = 0; w < w_; ++w) dx.at(n, c, h, w) = v;
            }
        return dx;
    }

private:
    std::tuple<int, int, int, int> in_shape_{};
};

// Nearest-neighbour 2x upsampling.
class Upsample2x : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        in_shape_ = {x.n, x.c, x.h, x.w};
        Tensor y(x.n, x.c, 2 * x.h, 2 * x.w);
        for (int n = 0; n < x.n; ++n)
            for (int c = 0; c < x.c; ++c)
                for (int h = 0; h < y.h; ++h)
                    for (int w = 0; w < y.w; ++w)
                        y.at(n, c, h, w) = x.at(n, c, h / 2, w / 2);
        return y;
    }
    Tensor backward(const Tensor& g) override {
        const auto [n_, c_, h_, w_] = in_shape_;
        if (g.n != n_ || g.c != c_ || g.h != 2 * h_ || g.w != 2 * w_)
            throw std::invalid_argument("Upsample2x: gradient shape mismatch");
        Tensor dx(n_, c_, h_, w_);
        for (int n = 0; n < n_; ++n)
            for (int c = 0; c < c_; ++c)
                for (int h = 0; h < g.h; ++h)
                    for (int w = 0; w < g.w; ++w)
                        dx.at(n, c, h / 2, w / 2) += g.at(n, c, h, w);
        return dx;
    }

private:
    std::tuple<int, int, int, int> in_shape_{};
};

class Sequential : public Layer {
public:
    Sequential() = default;

    Sequential& add(std::unique_ptr<Layer> layer) {
        layers_.push_back(std::move(layer));
        return *this;
    }
    template <typename L, typename... Args>
    Sequential& emplace(Args&&... args) {
        layers_.push_back(std::make_unique<L>(std::forward<Args>(args)...));
        return *this;
    }

    Tensor forward(const Tensor& x, bool train) override {
        Tensor y = x;
        for (auto& l : layers_) y = l->forward(y, train);
        return y;
    }
    Tensor backward(const Tensor& g) override {
        Tensor d = g;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
        return d;
    }
    std::vector<Param*> params() override {
        std::vector<Param*> out;
        for (auto& l : layers_)
            for (Param* p : l->params()) out.push_back(p);
        return out;
    }
    std::size_t size() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_.at(i); }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// y = relu(x + body(x)); the body must preserve the input shape.
class Residual : public Layer {
public:
    explicit Residual(std::unique_ptr<Layer> body) : body_(std::move(body)) {}

    Tensor forward(const Tensor& x, bool train) override {
        Tensor y = body_->forward(x, train);
        require_same_shape(y, x, "Residual (body must preserve shape)");
        for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += x.v[i];
        mask_.assign(y.v.size(), 0);
        for (std::size_t i = 0; i < y.v.size(); ++i) {
            if (y.v[i] > 0.0) mask_[i] = 1;
            else y.v[i] = 0.0;
        }
        return y;
    }
    Tensor backward(const Tensor& g) override {
        if (g.v.size() != mask_.size())
            throw std::invalid_argument("Residual: gradient shape mismatch");
        Tensor dsum = g;
        for (std::size_t i = 0; i < dsum.v.size(); ++i)
            if (!mask_[i]) dsum.v[i] = 0.0;
        Tensor dx = body_->backward(dsum);
        for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dsum.v[i];
        return dx;
    }
    std::vector<Param*> params() override { return body_->params(); }

private:
    std::unique_ptr<Layer> body_;
    std::vector<unsigned char> mask_;
};

inline void zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params) p->grad.zero();
}

class SgdMomentum {
public:
    SgdMomentum(std::vector<Param*> params, double lr, double momentum = 0.9)
        : params_(std::move(params)), lr_(lr), momentum_(momentum) {
        if (!(lr > 0.0)) throw std::invalid_argument("SgdMomentum: lr must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw std::invalid_argument("SgdMomentum: momentum outside [0,1)");
        for (Param* p : params_)
            velocity_.emplace_back(p->value.n, p->value.c, p->value.h, p->value.w);
    }

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Param* p = params_[i];
            Tensor& v = velocity_[i];
            for (std::size_t j = 0; j < v.v.size(); ++j) {
                v.v[j] = momentum_ * v.v[j] - lr_ * p->grad.v[j];
                p->value.v[j] += v.v[j];
            }
        }
    }
    void zero_grad() { zero_grads(params_); }

private:
    std::vector<Param*> params_;
    double lr_, momentum_;
    std::vector<Tensor> velocity_;
};

// --- checkpoint container ------------------------------------------------
//
// Layout (little-endian):
//   magic "IDCKPT01" | u32 version | u32 count |
//   per array: u32 name_len | name | u32 rank(=4) | 4 x i32 dims | f64 data

constexpr char kCheckpointMagic[8] = {'I', 'D', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const std::vector<Param*>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_pod(os, kCheckpointVersion);
    detail::write_pod(os, static_cast<std::uint32_t>(params.size()));
    for (const Param* p : params) {
        detail::write_pod(os, static_cast<std::uint32_t>(p->name.size()));
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        detail::write_pod(os, static_cast<std::uint32_t>(4));
        for (int d : {p->value.n, p->value.c, p->value.h, p->value.w})
            detail::write_pod(os, static_cast<std::int32_t>(d));
        os.write(reinterpret_cast<const char*>(p->value.v.data()),
                 static_cast<std::streamsize>(p->value.v.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

// Populates params by name; the file must contain exactly the given set.
inline void load_checkpoint(const std::string& path, const std::vector<Param*>& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    std::uint32_t version = 0, count = 0;
    detail::read_pod(is, version);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported format version " +
                                 std::to_string(version));
    detail::read_pod(is, count);
    if (count != params.size())
        throw std::runtime_error("checkpoint: array count mismatch (file has " +
                                 std::to_string(count) + ", model has " +
                                 std::to_string(params.size()) + ")");
    std::vector<bool> filled(params.size(), false);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = 0;
        detail::read_pod(is, name_len);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        std::uint32_t rank = 0;
        detail::read_pod(is, rank);
        if (rank != 4) throw std::runtime_error("checkpoint: unsupported rank");
        std::int32_t dims[4];
        for (auto& d : dims) detail::read_pod(is, d);
        Param* target = nullptr;
        std::size_t target_idx = 0;
        for (std::size_t j = 0; j < params.size(); ++j)
            if (params[j]->name == name) { target = params[j]; target_idx = j; break; }
        if (!target) throw std::runtime_error("checkpoint: unknown array '" + name + "'");
        if (filled[target_idx]) throw std::runtime_error("checkpoint: duplicate array '" + name + "'");
        if (dims[0] != target->value.n || dims[1] != target->value.c ||
            dims[2] != target->value.h || dims[3] != target->value.w)
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        is.read(reinterpret_cast<char*>(target->value.v.data()),
                static_cast<std::streamsize>(target->value.v.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated data for '" + name + "'");
        filled[target_idx] = true;
    }
    for (std::size_t j = 0; j < params.size(); ++j)
        if (!filled[j])
            throw std::runtime_error("checkpoint: missing array '" + params[j]->name + "'");
}

}  // namespace indrop::nn
