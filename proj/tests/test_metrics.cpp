#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "indrop/metrics.hpp"
#include "indrop/rng.hpp"
#include "indrop/tensor.hpp"

using namespace indrop;
using namespace indrop::metrics;

namespace {

using Rot = std::array<std::array<double, 3>, 3>;

Rot identity() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

Rot rot_z(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

Tensor random_image(int n, int c, int h, int w, std::uint64_t seed) {
    Tensor t(n, c, h, w);
    RngStream rng(seed);
    for (double& v : t.v) v = rng.uniform();
    return t;
}

}  // namespace

TEST_CASE("psnr hits the closed-form value for unit error at 8-bit peak") {
    Tensor pred(1, 1, 4, 4, 0.0), target(1, 1, 4, 4, 1.0);  // MSE exactly 1
    CHECK_THAT(psnr(pred, target, 255.0),
               Catch::Matchers::WithinAbs(48.130803608679103, 1e-9));
}

TEST_CASE("psnr caps identical images and scales with error") {
    const Tensor x = random_image(1, 3, 8, 8, 1);
    CHECK(psnr(x, x, 1.0) == 100.0);
    Tensor off1 = x, off2 = x;
    for (double& v : off1.v) v += 0.1;
    for (double& v : off2.v) v += 0.2;  // 4x the squared error
    CHECK_THAT(psnr(x, off1, 1.0) - psnr(x, off2, 1.0),
               Catch::Matchers::WithinAbs(10.0 * std::log10(4.0), 1e-9));
    CHECK_THROWS_AS(psnr(x, off1, 0.0), std::invalid_argument);
    Tensor other(1, 3, 8, 9);
    CHECK_THROWS_AS(psnr(x, other, 1.0), std::invalid_argument);
}

TEST_CASE("ssim of an image with itself is one") {
    const Tensor x = random_image(2, 3, 12, 12, 2);
    CHECK_THAT(ssim(x, x), Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("ssim of two constant images matches the closed form") {
    // mu_x = 0.5, mu_y = 0.25, zero variances: only the stabilizers remain:
    // (2*0.125 + 1e-4) / (0.3125 + 1e-4) = 0.80006397952655150
    Tensor pred(1, 1, 12, 12, 0.5), target(1, 1, 12, 12, 0.25);
    CHECK_THAT(ssim(pred, target), Catch::Matchers::WithinAbs(0.8000639795265515, 1e-12));
}

TEST_CASE("ssim is symmetric and penalizes structural change") {
    const Tensor a = random_image(1, 1, 16, 16, 3);
    const Tensor b = random_image(1, 1, 16, 16, 4);
    CHECK_THAT(ssim(a, b), Catch::Matchers::WithinAbs(ssim(b, a), 1e-12));
    CHECK(ssim(a, b) < 0.99);
    Tensor tiny(1, 1, 8, 8);
    CHECK_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);  // smaller than window
}

TEST_CASE("rotation distance hits 0, pi/2 and pi exactly") {
    CHECK_THAT(rotation_distance(identity(), identity()),
               Catch::Matchers::WithinAbs(0.0, 1e-9));
    const double half_pi = std::acos(-1.0) / 2.0;
    CHECK_THAT(rotation_distance(identity(), rot_z(half_pi)),
               Catch::Matchers::WithinAbs(half_pi, 1e-9));
    CHECK_THAT(rotation_distance(identity(), rot_z(2.0 * half_pi)),
               Catch::Matchers::WithinAbs(2.0 * half_pi, 1e-9));
}

TEST_CASE("rotation distance is symmetric and validates input") {
    const Rot a = rot_z(0.3), b = rot_z(1.2);
    CHECK_THAT(rotation_distance(a, b),
               Catch::Matchers::WithinAbs(rotation_distance(b, a), 1e-12));
    CHECK_THAT(rotation_distance(a, b), Catch::Matchers::WithinAbs(0.9, 1e-9));
    Rot reflection = identity();
    reflection[2][2] = -1.0;  // det -1
    CHECK_THROWS_AS(rotation_distance(identity(), reflection), std::invalid_argument);
    Rot scaled = identity();
    scaled[0][0] = 2.0;
    CHECK_THROWS_AS(rotation_distance(identity(), scaled), std::invalid_argument);
}

TEST_CASE("translation error is the euclidean distance") {
    CHECK(translation_error({0, 0, 0}, {3, 4, 12}) == 13.0);
    CHECK(translation_error({1, 2, 3}, {1, 2, 3}) == 0.0);
}

TEST_CASE("iou covers overlap, identity and disjoint boxes") {
    const DetectionBox a{0, 0, 0, 1, 1, 1.0};
    const DetectionBox b{0, 0.5, 0, 1.5, 1, 1.0};
    CHECK_THAT(iou(a, b), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
    CHECK(iou(a, a) == 1.0);
    const DetectionBox far{0, 5, 5, 6, 6, 1.0};
    CHECK(iou(a, far) == 0.0);
    const DetectionBox inverted{0, 1, 0, 0, 1, 1.0};
    CHECK_THROWS_AS(iou(a, inverted), std::invalid_argument);
}

TEST_CASE("average precision: false positive ranked above the true positive") {
    const std::vector<DetectionBox> gt = {{0, 0, 0, 10, 10, 1.0}};
    const std::vector<DetectionBox> dets = {
        {0, 50, 50, 60, 60, 0.9},  // FP, ranked first
        {0, 0, 0, 10, 10, 0.8},    // TP
    };
    CHECK(average_precision(dets, gt) == 0.5);
}

TEST_CASE("average precision: true positive first gives a perfect score") {
    const std::vector<DetectionBox> gt = {{0, 0, 0, 10, 10, 1.0}};
    const std::vector<DetectionBox> dets = {
        {0, 0, 0, 10, 10, 0.9},    // TP
        {0, 50, 50, 60, 60, 0.8},  // trailing FP does not hurt the envelope
    };
    CHECK(average_precision(dets, gt) == 1.0);
}

TEST_CASE("average precision matches greedy one-to-one counting") {
    // second hit on an already-matched box is a false positive
    const std::vector<DetectionBox> gt = {{0, 0, 0, 10, 10, 1.0}};
    const std::vector<DetectionBox> dets = {
        {0, 0, 0, 10, 10, 0.9},
        {0, 1, 1, 10, 10, 0.8},  // overlaps the same (matched) box
    };
    CHECK(average_precision(dets, gt) == 1.0);  // recall saturated by the first

    // two GT boxes, only one found: recall tops out at 1/2
    const std::vector<DetectionBox> gt2 = {{0, 0, 0, 10, 10, 1.0}, {0, 20, 20, 30, 30, 1.0}};
    const std::vector<DetectionBox> one = {{0, 0, 0, 10, 10, 0.9}};
    CHECK(average_precision(one, gt2) == 0.5);

    CHECK(average_precision({}, gt) == 0.0);
    CHECK_THROWS_AS(average_precision(one, {}), std::invalid_argument);
}

TEST_CASE("average precision respects the IoU threshold") {
    const std::vector<DetectionBox> gt = {{0, 0, 0, 10, 10, 1.0}};
    // overlap 5x10 on 10x10 boxes: IoU = 50/150 = 1/3
    const std::vector<DetectionBox> dets = {{0, 5, 0, 15, 10, 0.9}};
    CHECK(average_precision(dets, gt, 0.3) == 1.0);
    CHECK(average_precision(dets, gt, 0.5) == 0.0);
}

TEST_CASE("mAP averages per-class AP and skips classes without ground truth") {
    const std::vector<DetectionBox> gt = {
        {0, 0, 0, 10, 10, 1.0},
        {1, 20, 20, 30, 30, 1.0},
    };
    const std::vector<DetectionBox> dets = {
        {0, 0, 0, 10, 10, 0.9},    // class 0: AP 1
        {1, 50, 50, 60, 60, 0.9},  // class 1: AP 0
        {7, 0, 0, 10, 10, 0.9},    // class 7 has no GT: excluded
    };
    CHECK(map_at_iou(dets, gt) == 0.5);
    CHECK_THROWS_AS(map_at_iou(dets, {}), std::invalid_argument);
}

TEST_CASE("classification accuracy takes the argmax, ties to the lowest index") {
    Tensor logits(3, 3, 1, 1);
    // row 0: argmax 2; row 1: tie between 0 and 1 -> 0; row 2: argmax 1
    const double rows[3][3] = {{0.1, 0.2, 0.9}, {0.5, 0.5, 0.1}, {0.0, 2.0, 1.0}};
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) logits.at(i, k, 0, 0) = rows[i][k];
    CHECK_THAT(classification_accuracy(logits, {2, 0, 1}),
               Catch::Matchers::WithinAbs(1.0, 1e-15));
    CHECK_THAT(classification_accuracy(logits, {2, 1, 1}),
               Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    CHECK_THROWS_AS(classification_accuracy(logits, {2, 0}), std::invalid_argument);
    CHECK_THROWS_AS(classification_accuracy(logits, {2, 0, 5}), std::invalid_argument);
}

TEST_CASE("relative gain formats both error-like and score-like metrics") {
    CHECK_THAT(relative_gain(43.2, 28.8, true), Catch::Matchers::WithinAbs(100.0 / 3.0, 1e-9));
    CHECK_THAT(relative_gain(0.228, 0.271, false),
               Catch::Matchers::WithinAbs((0.271 - 0.228) / 0.228 * 100.0, 1e-12));
    CHECK(relative_gain(10.0, 10.0, true) == 0.0);
    CHECK(relative_gain(10.0, 12.0, true) < 0.0);  // error went up: negative gain
    CHECK_THROWS_AS(relative_gain(0.0, 1.0, false), std::invalid_argument);
}
