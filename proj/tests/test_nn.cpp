#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <memory>
#include <vector>

#include "indrop/nn.hpp"
#include "indrop/rng.hpp"
#include "indrop/tensor.hpp"

using namespace indrop;
using namespace indrop::nn;

namespace {

Tensor random_tensor(int n, int c, int h, int w, RngStream& rng, double scale = 1.0) {
    Tensor t(n, c, h, w);
    for (double& v : t.v) v = rng.normal() * scale;
    return t;
}

// Direct convolution, loops only: the independent oracle for Conv2d.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad) {
    const int oh = (x.h + 2 * pad - w.h) / stride + 1;
    const int ow = (x.w + 2 * pad - w.w) / stride + 1;
    Tensor y(x.n, w.n, oh, ow);
    for (int i = 0; i < x.n; ++i)
        for (int o = 0; o < w.n; ++o)
            for (int yy = 0; yy < oh; ++yy)
                for (int xx = 0; xx < ow; ++xx) {
                    double acc = bias ? bias->v[static_cast<std::size_t>(o)] : 0.0;
                    for (int c = 0; c < x.c; ++c)
                        for (int dy = 0; dy < w.h; ++dy)
                            for (int dx = 0; dx < w.w; ++dx) {
                                const int sy = yy * stride + dy - pad;
                                const int sx = xx * stride + dx - pad;
                                if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
                                acc += x.at(i, c, sy, sx) * w.at(o, c, dy, dx);
                            }
                    y.at(i, o, yy, xx) = acc;
                }
    return y;
}

double weighted_sum(const Tensor& y, const Tensor& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * r.v[i];
    return s;
}

double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

// Central-difference check of d(sum(r * layer(x)))/d(input and params).
// Verifies at most `samples` coordinates per tensor to stay fast.
void gradcheck(Layer& layer, const Tensor& x0, std::uint64_t seed, int samples = 20,
               double h = 1e-5, double tol = 1e-3) {
    RngStream rng(seed);
    Tensor x = x0;
    Tensor y = layer.forward(x, true);
    Tensor r(y.n, y.c, y.h, y.w);
    for (double& v : r.v) v = rng.normal();
    zero_grads(layer.params());
    const Tensor dx = layer.backward(r);

    const auto check_coord = [&](Tensor& target, const Tensor& grad, std::size_t idx) {
        const double keep = target.v[idx];
        target.v[idx] = keep + h;
        const double up = weighted_sum(layer.forward(x, true), r);
        target.v[idx] = keep - h;
        const double dn = weighted_sum(layer.forward(x, true), r);
        target.v[idx] = keep;
        const double numeric = (up - dn) / (2.0 * h);
        INFO("coordinate " << idx << ": analytic " << grad.v[idx] << " numeric " << numeric);
        CHECK(rel_err(grad.v[idx], numeric) < tol);
    };

    for (int s = 0; s < samples; ++s)
        check_coord(x, dx, static_cast<std::size_t>(rng.uniform_int(
                                static_cast<int>(x.v.size()))));
    for (Param* p : layer.params())
        for (int s = 0; s < samples; ++s)
            check_coord(p->value, p->grad,
                        static_cast<std::size_t>(
                            rng.uniform_int(static_cast<int>(p->value.v.size()))));
    // leave caches consistent with the unperturbed input
    layer.forward(x, true);
}

}  // namespace

TEST_CASE("conv2d forward equals direct convolution") {
    RngStream rng(31);
    struct Geo {
        int in, out, k, stride, pad, h, w;
        bool bias;
    };
    const Geo cases[] = {
        {3, 8, 3, 1, 1, 6, 6, true},  {1, 4, 3, 2, 1, 7, 5, true},
        {4, 2, 1, 1, 0, 4, 4, false}, {2, 3, 5, 2, 2, 9, 9, true},
    };
    for (const Geo& g : cases) {
        RngStream init(rng.next_u64());
        Conv2d conv("c", g.in, g.out, g.k, g.stride, g.pad, g.bias, init);
        const Tensor x = random_tensor(2, g.in, g.h, g.w, rng);
        const Tensor got = conv.forward(x, false);
        const Tensor want =
            naive_conv(x, conv.weight().value, g.bias ? &conv.bias().value : nullptr,
                       g.stride, g.pad);
        REQUIRE(got.n == want.n);
        REQUIRE(got.c == want.c);
        REQUIRE(got.h == want.h);
        REQUIRE(got.w == want.w);
        CHECK(max_abs_diff(got, want) < 1e-12);
    }
}

TEST_CASE("conv2d gradients pass finite differences") {
    RngStream rng(32);
    RngStream init(1);
    Conv2d conv("c", 3, 4, 3, 2, 1, true, init);
    gradcheck(conv, random_tensor(2, 3, 6, 6, rng), 41);
}

TEST_CASE("linear matches a hand computation and its gradients check out") {
    RngStream init(2);
    Linear lin("l", 3, 2, init);
    // overwrite with known weights: y = W x + b, W row-major (out, in)
    const double w[2][3] = {{1, 2, 3}, {4, 5, 6}};
    for (int o = 0; o < 2; ++o)
        for (int i = 0; i < 3; ++i) lin.params()[0]->value.at(o, i, 0, 0) = w[o][i];
    lin.params()[1]->value.v = {0.5, -0.5};
    Tensor x(1, 3, 1, 1);
    x.v = {1.0, 1.0, 2.0};
    const Tensor y = lin.forward(x, false);
    CHECK_THAT(y.v[0], Catch::Matchers::WithinAbs(1 + 2 + 6 + 0.5, 1e-12));
    CHECK_THAT(y.v[1], Catch::Matchers::WithinAbs(4 + 5 + 12 - 0.5, 1e-12));

    RngStream rng(33);
    gradcheck(lin, random_tensor(4, 3, 1, 1, rng), 42);
}

TEST_CASE("activation layers pass finite differences") {
    RngStream rng(34);
    // offset inputs away from the ReLU kink so central differences are clean
    Tensor x = random_tensor(2, 3, 4, 4, rng);
    for (double& v : x.v)
        if (std::abs(v) < 1e-3) v = 0.1;

    ReLU relu;
    gradcheck(relu, x, 43);
    LeakyReLU leaky(0.2);
    gradcheck(leaky, x, 44);
    Sigmoid sigmoid;
    gradcheck(sigmoid, x, 45);
    Tanh tanh_layer;
    gradcheck(tanh_layer, x, 46);
}

TEST_CASE("pooling and upsampling behave and differentiate correctly") {
    Tensor x(1, 1, 2, 2);
    x.v = {1.0, 2.0, 3.0, 4.0};
    GlobalAvgPool gap;
    const Tensor pooled = gap.forward(x, false);
    REQUIRE(pooled.h == 1);
    REQUIRE(pooled.w == 1);
    CHECK_THAT(pooled.v[0], Catch::Matchers::WithinAbs(2.5, 1e-15));

    Upsample2x up;
    const Tensor big = up.forward(x, false);
    REQUIRE(big.h == 4);
    REQUIRE(big.w == 4);
    CHECK(big.at(0, 0, 0, 0) == 1.0);
    CHECK(big.at(0, 0, 0, 1) == 1.0);
    CHECK(big.at(0, 0, 3, 3) == 4.0);

    RngStream rng(35);
    gradcheck(gap, random_tensor(2, 3, 4, 4, rng), 47);
    gradcheck(up, random_tensor(2, 3, 3, 3, rng), 48);
}

TEST_CASE("sequential and residual compose forward and backward") {
    RngStream init(3), rng(36);
    auto seq = std::make_unique<Sequential>();
    seq->emplace<Conv2d>("a", 2, 4, 3, 1, 1, true, init);
    seq->emplace<ReLU>();
    seq->emplace<Conv2d>("b", 4, 2, 3, 1, 1, true, init);
    Residual res(std::move(seq));
    CHECK(res.params().size() == 4);  // two convs x (weight, bias)
    gradcheck(res, random_tensor(2, 2, 5, 5, rng), 49);
}

TEST_CASE("sgd momentum follows the velocity recurrence") {
    Param p("p", Tensor(1, 1, 1, 1));
    p.value.v[0] = 1.0;
    SgdMomentum opt({&p}, 0.1, 0.9);
    p.grad.v[0] = 2.0;
    opt.step();  // v = -0.2, w = 0.8
    CHECK_THAT(p.value.v[0], Catch::Matchers::WithinAbs(0.8, 1e-15));
    p.grad.v[0] = 1.0;
    opt.step();  // v = 0.9*(-0.2) - 0.1 = -0.28, w = 0.52
    CHECK_THAT(p.value.v[0], Catch::Matchers::WithinAbs(0.52, 1e-15));
    opt.zero_grad();
    CHECK(p.grad.v[0] == 0.0);
    CHECK_THROWS_AS(SgdMomentum({&p}, 0.0, 0.9), std::invalid_argument);
    CHECK_THROWS_AS(SgdMomentum({&p}, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip parameters exactly") {
    RngStream init(4);
    Conv2d a("stem", 3, 4, 3, 1, 1, true, init);
    Linear b("head", 4, 2, init);
    std::vector<Param*> params = a.params();
    for (Param* p : b.params()) params.push_back(p);

    const std::string path = "ckpt_roundtrip.bin";
    save_checkpoint(path, params);

    RngStream init2(5);  // different init: values must be overwritten by load
    Conv2d a2("stem", 3, 4, 3, 1, 1, true, init2);
    Linear b2("head", 4, 2, init2);
    std::vector<Param*> params2 = a2.params();
    for (Param* p : b2.params()) params2.push_back(p);
    load_checkpoint(path, params2);
    for (std::size_t i = 0; i < params.size(); ++i)
        CHECK(params[i]->value.v == params2[i]->value.v);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loading is strict about the parameter set") {
    RngStream init(6);
    Linear lin("head", 3, 2, init);
    const std::string path = "ckpt_strict.bin";
    save_checkpoint(path, lin.params());

    Linear renamed("other", 3, 2, init);
    CHECK_THROWS_AS(load_checkpoint(path, renamed.params()), std::runtime_error);

    Linear reshaped("head", 4, 2, init);
    CHECK_THROWS_AS(load_checkpoint(path, reshaped.params()), std::runtime_error);

    Linear partial("head", 3, 2, init);
    std::vector<Param*> missing = {partial.params()[0]};  // weight only, bias missing
    CHECK_THROWS_AS(load_checkpoint(path, missing), std::runtime_error);

    CHECK_THROWS_AS(load_checkpoint("no_such_file.bin", lin.params()), std::runtime_error);
    std::remove(path.c_str());
}
