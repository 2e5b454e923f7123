#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "indrop/adapt.hpp"
#include "indrop/nn.hpp"
#include "indrop/rng.hpp"
#include "indrop/tensor.hpp"

using namespace indrop;
using namespace indrop::adapt;

namespace {

Tensor random_tensor(int n, int c, int h, int w, RngStream& rng, double scale = 1.0) {
    Tensor t(n, c, h, w);
    for (double& v : t.v) v = rng.normal() * scale;
    return t;
}

// appends `extra` zero channels to x
Tensor with_zero_channels(const Tensor& x, int extra) {
    Tensor zeros(x.n, extra, x.h, x.w);
    return adapt::detail::concat_channels(x, zeros);
}

double weighted_sum(const Tensor& y, const Tensor& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * r.v[i];
    return s;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

// finite-difference check over a net exposing forward/backward/params
template <typename Net>
void net_gradcheck(Net& net, const Tensor& x0, std::uint64_t seed, int samples = 12,
                   double h = 1e-5, double tol = 1e-3) {
    RngStream rng(seed);
    Tensor x = x0;
    const Tensor y = net.forward(x, true);
    Tensor r(y.n, y.c, y.h, y.w);
    for (double& v : r.v) v = rng.normal();
    nn::zero_grads(net.params());
    const Tensor dx = net.backward(r);

    const auto check_coord = [&](Tensor& target, const Tensor& grad, std::size_t idx) {
        const double keep = target.v[idx];
        target.v[idx] = keep + h;
        const double up = weighted_sum(net.forward(x, true), r);
        target.v[idx] = keep - h;
        const double dn = weighted_sum(net.forward(x, true), r);
        target.v[idx] = keep;
        const double numeric = (up - dn) / (2.0 * h);
        INFO("analytic " << grad.v[idx] << " numeric " << numeric);
        CHECK(rel_err(grad.v[idx], numeric) < tol);
    };

    for (int s = 0; s < samples; ++s)
        check_coord(x, dx,
                    static_cast<std::size_t>(rng.uniform_int(static_cast<int>(x.v.size()))));
    std::vector<nn::Param*> params = net.params();
    for (std::size_t pi = 0; pi < params.size(); ++pi)
        for (int s = 0; s < 3; ++s)
            check_coord(params[pi]->value, params[pi]->grad,
                        static_cast<std::size_t>(
                            rng.uniform_int(static_cast<int>(params[pi]->value.v.size()))));
    net.forward(x, true);
}

}  // namespace

TEST_CASE("channel inflation copies the donor slice and zero-fills the new one") {
    RngStream rng(51);
    const Tensor donor = random_tensor(4, 3, 3, 3, rng);
    const Tensor donor_copy = donor;
    const Tensor wide = expand_input_channels(donor, 2, InflateInit::zeros);
    REQUIRE(wide.n == 4);
    REQUIRE(wide.c == 5);
    for (int o = 0; o < 4; ++o)
        for (int c = 0; c < 3; ++c)
            for (int kh = 0; kh < 3; ++kh)
                for (int kw = 0; kw < 3; ++kw)
                    CHECK(wide.at(o, c, kh, kw) == donor.at(o, c, kh, kw));
    for (int o = 0; o < 4; ++o)
        for (int c = 3; c < 5; ++c)
            for (int kh = 0; kh < 3; ++kh)
                for (int kw = 0; kw < 3; ++kw) CHECK(wide.at(o, c, kh, kw) == 0.0);
    CHECK(max_abs_diff(donor, donor_copy) == 0.0);  // donor untouched
}

TEST_CASE("random inflation bounds the new weights by the widened fan-in") {
    RngStream rng(52), fill(53);
    const Tensor donor = random_tensor(4, 3, 3, 3, rng);
    const Tensor wide = expand_input_channels(donor, 1, InflateInit::random_fan_in, &fill);
    const double bound = 1.0 / std::sqrt(4.0 * 3.0 * 3.0);
    bool any_nonzero = false;
    for (int o = 0; o < 4; ++o)
        for (int kh = 0; kh < 3; ++kh)
            for (int kw = 0; kw < 3; ++kw) {
                const double v = wide.at(o, 3, kh, kw);
                CHECK(std::abs(v) <= bound);
                any_nonzero = any_nonzero || v != 0.0;
            }
    CHECK(any_nonzero);
    CHECK_THROWS_AS(expand_input_channels(donor, 1, InflateInit::random_fan_in, nullptr),
                    std::invalid_argument);
    CHECK_THROWS_AS(expand_input_channels(donor, 0, InflateInit::zeros), std::invalid_argument);
}

TEST_CASE("inflated classifier reproduces the donor when new channels are zero") {
    RngStream init(54), data(55);
    ClassifierSpec spec;
    spec.in_channels = 3;
    spec.width = 8;
    spec.res_blocks = 2;
    ClassifierNet donor(spec, init);
    for (InflateInit mode : {InflateInit::zeros, InflateInit::random_fan_in}) {
        ClassifierNet wide = inflate_classifier_input(donor, 1, mode, 99);
        for (int rep = 0; rep < 5; ++rep) {
            const Tensor rgb = random_tensor(2, 3, 16, 16, data);
            const Tensor rgbz = with_zero_channels(rgb, 1);
            const Tensor y_donor = donor.forward(rgb, false);
            const Tensor y_wide = wide.forward(rgbz, false);
            CHECK(max_abs_diff(y_donor, y_wide) <= 1e-6);
        }
    }
}

TEST_CASE("inflated generator reproduces the donor when new channels are zero") {
    RngStream init(56), data(57);
    GeneratorSpec spec;
    spec.width = 8;
    spec.res_blocks = 1;
    GeneratorNet donor(spec, init);
    GeneratorNet wide = inflate_generator_input(donor, 1, InflateInit::zeros, 100);
    for (int rep = 0; rep < 3; ++rep) {
        const Tensor rgb = random_tensor(1, 3, 16, 16, data);
        const Tensor y_donor = donor.forward(rgb, false);
        const Tensor y_wide = wide.forward(with_zero_channels(rgb, 1), false);
        CHECK(max_abs_diff(y_donor, y_wide) <= 1e-6);
    }
}

TEST_CASE("inflated classifier diverges once the new channels carry signal") {
    RngStream init(58), data(59), fill(60);
    ClassifierSpec spec;
    spec.width = 8;
    spec.res_blocks = 1;
    ClassifierNet donor(spec, init);
    ClassifierNet wide = inflate_classifier_input(donor, 1, InflateInit::random_fan_in, 101);
    const Tensor rgb = random_tensor(2, 3, 16, 16, data);
    Tensor extra(2, 1, 16, 16);
    for (double& v : extra.v) v = data.normal();
    const Tensor y_donor = donor.forward(rgb, false);
    const Tensor y_wide = wide.forward(adapt::detail::concat_channels(rgb, extra), false);
    CHECK(max_abs_diff(y_donor, y_wide) > 1e-6);
}

TEST_CASE("classifier output shape and gradients") {
    RngStream init(61), data(62);
    ClassifierSpec spec;
    spec.in_channels = 4;
    spec.num_classes = 4;
    spec.width = 4;
    spec.res_blocks = 1;
    ClassifierNet net(spec, init);
    const Tensor x = random_tensor(2, 4, 8, 8, data);
    const Tensor y = net.forward(x, false);
    REQUIRE(y.n == 2);
    REQUIRE(y.c == 4);
    REQUIRE(y.h == 1);
    REQUIRE(y.w == 1);
    net_gradcheck(net, x, 63);
}

TEST_CASE("classifier spec validation") {
    RngStream init(64);
    ClassifierSpec bad;
    bad.width = 0;
    CHECK_THROWS_AS(ClassifierNet(bad, init), std::invalid_argument);
    ClassifierSpec bad2;
    bad2.num_classes = 1;
    CHECK_THROWS_AS(ClassifierNet(bad2, init), std::invalid_argument);
}

TEST_CASE("generator keeps spatial size and stays in (0, 1)") {
    RngStream init(65), data(66);
    GeneratorSpec spec;
    spec.width = 4;
    spec.res_blocks = 1;
    GeneratorNet net(spec, init);
    const Tensor x = random_tensor(1, 3, 8, 8, data, 0.5);
    const Tensor y = net.forward(x, false);
    REQUIRE(y.n == 1);
    REQUIRE(y.c == 3);
    REQUIRE(y.h == 8);
    REQUIRE(y.w == 8);
    for (double v : y.v) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    net_gradcheck(net, x, 67, 8);
}

TEST_CASE("patch discriminator downsamples to a realness map and differentiates") {
    RngStream init(68), data(69);
    DiscriminatorSpec spec;
    spec.width = 4;
    PatchDiscriminator net(spec, init);
    const Tensor x = random_tensor(1, 3, 8, 8, data, 0.5);
    const Tensor y = net.forward(x, false);
    REQUIRE(y.c == 1);
    REQUIRE(y.h == 2);
    REQUIRE(y.w == 2);
    net_gradcheck(net, x, 70, 8);
}

TEST_CASE("moddrop net fuses two branches and differentiates") {
    RngStream init(71), data(72);
    ModDropSpec spec;
    spec.width = 4;
    ModDropNet net(spec, init);
    const Tensor x = random_tensor(2, 4, 8, 8, data);
    const Tensor y = net.forward(x, false);
    REQUIRE(y.c == spec.num_classes);
    net_gradcheck(net, x, 73, 8);

    Tensor wrong(2, 3, 8, 8);
    CHECK_THROWS_AS(net.forward(wrong, false), std::invalid_argument);
}

TEST_CASE("moddrop responds to both modalities independently") {
    RngStream init(74), data(75);
    ModDropSpec spec;
    spec.width = 4;
    ModDropNet net(spec, init);
    Tensor x = random_tensor(1, 4, 8, 8, data);
    const Tensor y0 = net.forward(x, false);
    Tensor x_rgb = x;
    for (int yx = 0; yx < 8 * 8; ++yx) x_rgb.v[static_cast<std::size_t>(yx)] += 0.5;
    CHECK(max_abs_diff(net.forward(x_rgb, false), y0) > 0.0);
    Tensor x_depth = x;
    for (int yx = 0; yx < 8 * 8; ++yx)
        x_depth.v[x_depth.index(0, 3, 0, 0) + static_cast<std::size_t>(yx)] += 0.5;
    CHECK(max_abs_diff(net.forward(x_depth, false), y0) > 0.0);
}
