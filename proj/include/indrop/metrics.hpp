#pragma once

// Evaluation metrics: PSNR, SSIM, geodesic rotation distance, L2 translation
// error, IoU, average precision / mAP, classification accuracy and relative
// gain between methods.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "indrop/tensor.hpp"

namespace indrop::metrics {

// Peak signal-to-noise ratio in dB: 10*log10(peak^2 / MSE). Identical inputs
// (MSE = 0) are capped at 100 dB.
inline double psnr(const Tensor& pred, const Tensor& target, double peak) {
    if (peak <= 0.0) throw std::invalid_argument("psnr: peak must be positive");
    const double mse = mean_squared_error(pred, target);
    if (mse == 0.0) return 100.0;
    return 10.0 * std::log10(peak * peak / mse);
}

struct SsimParams {
    double k1 = 0.01;
    double k2 = 0.03;
    int window = 11;     // Gaussian window taps
    double sigma = 1.5;  // Gaussian window std
    double peak = 1.0;
};

// Mean local SSIM over valid (fully interior) windows, channel- and
// batch-averaged. Local statistics are Gaussian-weighted.
inline double ssim(const Tensor& pred, const Tensor& target, const SsimParams& p = {}) {
    require_same_shape(pred, target, "ssim");
    const int win = p.window;
    if (pred.h < win || pred.w < win)
        throw std::invalid_argument("ssim: image smaller than window");
    const int half = win / 2;

    std::vector<double> g(static_cast<std::size_t>(win) * win);
    double gsum = 0.0;
    for (int dy = 0; dy < win; ++dy)
        for (int dx = 0; dx < win; ++dx) {
            const double ry = dy - half, rx = dx - half;
            const double v = std::exp(-(ry * ry + rx * rx) / (2.0 * p.sigma * p.sigma));
            g[dy * win + dx] = v;
            gsum += v;
        }
    for (double& v : g) v /= gsum;

    const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
    const double c2 = (p.k2 * p.peak) * (p.k2 * p.peak);

    double total = 0.0;
    std::size_t windows = 0;
    for (int i = 0; i < pred.n; ++i)
        for (int j = 0; j < pred.c; ++j)
            for (int y = half; y < pred.h - half; ++y)
                for (int x = half; x < pred.w - half; ++x) {
                    double mx = 0.0, my = 0.0;
                    for (int dy = 0; dy < win; ++dy)
                        for (int dx = 0; dx < win; ++dx) {
                            const double wgt = g[dy * win + dx];
                            mx += wgt * pred.at(i, j, y + dy - half, x + dx - half);
                            my += wgt * target.at(i, j, y + dy - half, x + dx - half);
                        }
                    double vx = 0.0, vy = 0.0, cov = 0.0;
                    for (int dy = 0; dy < win; ++dy)
                        for (int dx = 0; dx < win; ++dx) {
                            const double wgt = g[dy * win + dx];
                            const double ax = pred.at(i, j, y + dy - half, x + dx - half) - mx;
                            const double ay = target.at(i, j, y + dy - half, x + dx - half) - my;
                            vx += wgt * ax * ax;
                            vy += wgt * ay * ay;
                            cov += wgt * ax * ay;
                        }
                    const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
                    const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
                    total += num / den;
                    ++windows;
                }
    return total / static_cast<double>(windows);
}

// Rigid pose: orthonormal right-handed rotation plus translation in mm.
struct Pose {
    std::array<std::array<double, 3>, 3> rotation{};
    std::array<double, 3> translation{};
};

namespace detail {
inline double det3(const std::array<std::array<double, 3>, 3>& r) {
    return r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
           r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
           r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
}
}  // namespace detail

inline void require_rotation(const std::array<std::array<double, 3>, 3>& r,
                             double tol = 1e-6) {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += r[k][i] * r[k][j];
            const double expect = (i == j) ? 1.0 : 0.0;
            if (std::abs(dot - expect) > tol)
                throw std::invalid_argument("rotation matrix is not orthonormal");
        }
    if (std::abs(detail::det3(r) - 1.0) > tol)
        throw std::invalid_argument("rotation matrix determinant is not +1");
}

// Geodesic distance between two rotations in radians:
// arccos(clamp((Tr(R1^T R2) - 1) / 2, -1, 1)), in [0, pi].
inline double rotation_distance(const std::array<std::array<double, 3>, 3>& r1,
                                const std::array<std::array<double, 3>, 3>& r2) {
    require_rotation(r1);
    require_rotation(r2);
    double trace = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) trace += r1[k][i] * r2[k][i];
    const double arg = std::clamp((trace - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(arg);
}

inline double translation_error(const std::array<double, 3>& t1,
                                const std::array<double, 3>& t2) {
    const double dx = t1[0] - t2[0], dy = t1[1] - t2[1], dz = t1[2] - t2[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Axis-aligned detection or ground-truth box in pixel coordinates.
// Confidence is meaningful for detections only (ground truth ignores it).
struct DetectionBox {
    int class_id = 0;
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    double confidence = 1.0;

    void validate(bool is_detection) const {
        if (!(x1 < x2) || !(y1 < y2))
            throw std::invalid_argument("DetectionBox: empty or inverted box");
        if (is_detection && !(confidence >= 0.0 && confidence <= 1.0))
            throw std::invalid_argument("DetectionBox: confidence outside [0,1]");
    }
};

inline double iou(const DetectionBox& a, const DetectionBox& b) {
    a.validate(false);
    b.validate(false);
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
    const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
    const double uni = area_a + area_b - inter;
    return inter / uni;
}

// Average precision for one class: detections sorted by descending confidence
// (stable, so equal confidences keep input order), greedy one-to-one matching
// against the best still-unmatched ground-truth box at the IoU threshold, area
// under the all-point interpolated precision-recall curve.
inline double average_precision(std::vector<DetectionBox> detections,
                                const std::vector<DetectionBox>& ground_truth,
                                double iou_threshold = 0.5) {
    if (ground_truth.empty())
        throw std::invalid_argument("average_precision: no ground truth");
    for (const auto& d : detections) d.validate(true);
    for (const auto& g : ground_truth) g.validate(false);
    if (detections.empty()) return 0.0;

    std::stable_sort(detections.begin(), detections.end(),
                     [](const DetectionBox& a, const DetectionBox& b) {
                         return a.confidence > b.confidence;
                     });

    std::vector<bool> matched(ground_truth.size(), false);
    std::vector<double> precision, recall;
    int tp = 0, fp = 0;
    const auto num_gt = static_cast<double>(ground_truth.size());
    for (const auto& det : detections) {
        double best = -1.0;
        int best_j = -1;
        for (std::size_t j = 0; j < ground_truth.size(); ++j) {
            if (matched[j]) continue;
            const double ov = iou(det, ground_truth[j]);
            if (ov > best) { best = ov; best_j = static_cast<int>(j); }
        }
        if (best_j >= 0 && best >= iou_threshold) {
            matched[best_j] = true;
            ++tp;
        } else {
            ++fp;
        }
        precision.push_back(static_cast<double>(tp) / (tp + fp));
        recall.push_back(static_cast<double>(tp) / num_gt);
    }

    // precision envelope, then sum over recall increments
    double ap = 0.0, env = 0.0;
    for (std::size_t k = precision.size(); k-- > 0;) {
        env = std::max(env, precision[k]);
        const double r_prev = (k == 0) ? 0.0 : recall[k - 1];
        if (recall[k] != r_prev) ap += (recall[k] - r_prev) * env;
    }
    return ap;
}

// Mean AP over classes that have ground truth; classes without any ground
// truth are excluded. Throws if no class has ground truth.
inline double map_at_iou(const std::vector<DetectionBox>& detections,
                         const std::vector<DetectionBox>& ground_truth,
                         double iou_threshold = 0.5) {
    std::map<int, std::vector<DetectionBox>> det_by_class, gt_by_class;
    for (const auto& d : detections) det_by_class[d.class_id].push_back(d);
    for (const auto& g : ground_truth) gt_by_class[g.class_id].push_back(g);
    if (gt_by_class.empty())
        throw std::invalid_argument("map_at_iou: no class has ground truth");
    double total = 0.0;
    for (const auto& [cls, gts] : gt_by_class) {
        const auto it = det_by_class.find(cls);
        const std::vector<DetectionBox> empty;
        total += average_precision(it == det_by_class.end() ? empty : it->second,
                                   gts, iou_threshold);
    }
    return total / static_cast<double>(gt_by_class.size());
}

// Fraction of rows whose argmax matches the label. Ties go to the lowest
// class index. Logits are (N, K, 1, 1).
inline double classification_accuracy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.h != 1 || logits.w != 1)
        throw std::invalid_argument("classification_accuracy: logits must be N x K x 1 x 1");
    if (static_cast<std::size_t>(logits.n) != labels.size())
        throw std::invalid_argument("classification_accuracy: one label per row required");
    if (logits.n == 0) throw std::invalid_argument("classification_accuracy: empty batch");
    int correct = 0;
    for (int i = 0; i < logits.n; ++i) {
        int best = 0;
        for (int k = 1; k < logits.c; ++k)
            if (logits.at(i, k, 0, 0) > logits.at(i, best, 0, 0)) best = k;
        if (labels[i] < 0 || labels[i] >= logits.c)
            throw std::invalid_argument("classification_accuracy: label out of range");
        if (best == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / logits.n;
}

// Percentage improvement of `treated` over `baseline`, sign-adjusted so a
// positive gain always means "better".
inline double relative_gain(double baseline, double treated, bool lower_is_better) {
    if (baseline == 0.0) throw std::invalid_argument("relative_gain: zero baseline");
    if (lower_is_better) return (baseline - treated) / baseline * 100.0;
    return (treated - baseline) / baseline * 100.0;
}

}  // namespace indrop::metrics
