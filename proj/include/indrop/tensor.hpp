#pragma once

// Dense rank-4 tensor (N x C x H x W), row-major, double precision.
// The whole library trains and evaluates in 64-bit so gradients can be
// checked against central finite differences.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace indrop {

struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
        : n(n_), c(c_), h(h_), w(w_) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
            throw std::invalid_argument("Tensor: negative dimension");
        v.assign(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill);
    }

    std::size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }

    std::size_t index(int i, int j, int y, int x) const {
        return ((static_cast<std::size_t>(i) * c + j) * h + y) * w + x;
    }
    double& at(int i, int j, int y, int x) { return v[index(i, j, y, x)]; }
    double at(int i, int j, int y, int x) const { return v[index(i, j, y, x)]; }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    std::string shape_str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" +
               std::to_string(h) + "x" + std::to_string(w);
    }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a.v[i] - b.v[i];
        if (d < 0) d = -d;
        if (d > m) m = d;
    }
    return m;
}

inline double mean_squared_error(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mean_squared_error");
    if (a.empty()) throw std::invalid_argument("mean_squared_error: empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

// Per-sample channel slice [c0, c1) copied out of a batch.
inline Tensor slice_channels(const Tensor& x, int c0, int c1) {
    if (c0 < 0 || c1 > x.c || c0 >= c1)
        throw std::invalid_argument("slice_channels: bad range");
    Tensor out(x.n, c1 - c0, x.h, x.w);
    for (int i = 0; i < x.n; ++i)
        for (int j = c0; j < c1; ++j)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx)
                    out.at(i, j - c0, y, xx) = x.at(i, j, y, xx);
    return out;
}

// Rows 'rows' of a batch gathered into a new tensor (batch assembly).
inline Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
    Tensor out(static_cast<int>(rows.size()), x.c, x.h, x.w);
    const std::size_t stride = static_cast<std::size_t>(x.c) * x.h * x.w;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] >= x.n)
            throw std::out_of_range("gather_rows: row index");
        std::copy(x.v.begin() + rows[r] * stride,
                  x.v.begin() + (rows[r] + 1) * stride,
                  out.v.begin() + r * stride);
    }
    return out;
}

}  // namespace indrop
