#pragma once

// Brute-force reference implementations used as independent oracles. These
// deliberately re-derive results from first principles (dense loops, direct
// formulas) and never call the production code paths they check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "kcal/model.hpp"
#include "kcal/tensor.hpp"

namespace kcal::test {

// symmetric reflection, folded until in range
inline int reflect_oracle(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

// full 2-D Gaussian kernel (normalized over all taps), dense convolution
inline FloatMap dense_blur_oracle(const FloatMap& map, int kernel, double sigma) {
    int r = kernel / 2;
    std::vector<double> k2(static_cast<std::size_t>(kernel) * kernel);
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            k2[static_cast<std::size_t>(dy + r) * kernel + (dx + r)] = v;
            sum += v;
        }
    for (auto& v : k2) v /= sum;

    FloatMap out(map.rows, map.cols);
    for (int y = 0; y < map.rows; ++y)
        for (int x = 0; x < map.cols; ++x) {
            double acc = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx)
                    acc += k2[static_cast<std::size_t>(dy + r) * kernel + (dx + r)] *
                           map.at(reflect_oracle(y + dy, map.rows),
                                  reflect_oracle(x + dx, map.cols));
            out.at(y, x) = acc;
        }
    return out;
}

// fractional-area integration over every source pixel
inline FloatMap area_downsample_oracle(const FloatMap& map, int oh, int ow) {
    FloatMap out(oh, ow);
    double sy = static_cast<double>(map.rows) / oh;
    double sx = static_cast<double>(map.cols) / ow;
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
            double y0 = r * sy, y1 = (r + 1) * sy;
            double x0 = c * sx, x1 = (c + 1) * sx;
            double acc = 0.0;
            for (int y = 0; y < map.rows; ++y)
                for (int x = 0; x < map.cols; ++x) {
                    double oy = std::max(0.0, std::min<double>(y + 1, y1) - std::max<double>(y, y0));
                    double ox = std::max(0.0, std::min<double>(x + 1, x1) - std::max<double>(x, x0));
                    acc += oy * ox * map.at(y, x);
                }
            out.at(r, c) = acc / (sy * sx);
        }
    return out;
}

inline FloatMap minmax_oracle(const FloatMap& map) {
    double lo = *std::min_element(map.v.begin(), map.v.end());
    double hi = *std::max_element(map.v.begin(), map.v.end());
    FloatMap out(map.rows, map.cols, 0.0);
    if (hi > lo)
        for (std::size_t i = 0; i < map.size(); ++i) out.v[i] = (map.v[i] - lo) / (hi - lo);
    return out;
}

// per-pixel weighted sum of feature maps, then min-max
inline FloatMap msm_oracle(const Tensor3& fm, const std::vector<float>& weights) {
    FloatMap raw(fm.h, fm.w);
    for (int y = 0; y < fm.h; ++y)
        for (int x = 0; x < fm.w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < fm.c; ++k)
                acc += static_cast<double>(weights[static_cast<std::size_t>(k)]) * fm.at(y, x, k);
            raw.at(y, x) = acc;
        }
    return minmax_oracle(raw);
}

// zero-padded 3x3 convolution, dense loops
inline Tensor3 conv3x3_oracle(const Tensor3& in, const std::vector<float>& weight,
                              const std::vector<float>& bias, int c_out) {
    Tensor3 out(in.h, in.w, c_out);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x)
            for (int co = 0; co < c_out; ++co) {
                double acc = bias[static_cast<std::size_t>(co)];
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        int iy = y + ky - 1, ix = x + kx - 1;
                        if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
                        for (int ci = 0; ci < in.c; ++ci)
                            acc += static_cast<double>(
                                       weight[(static_cast<std::size_t>(co) * 9 +
                                               static_cast<std::size_t>(ky) * 3 + kx) *
                                                  in.c +
                                              ci]) *
                                   in.at(iy, ix, ci);
                    }
                out.at(y, x, co) = acc;
            }
    return out;
}

inline double mse_oracle(const std::vector<double>& p, const std::vector<double>& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
    return acc / static_cast<double>(p.size());
}

inline double mae_oracle(const std::vector<double>& p, const std::vector<double>& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::fabs(p[i] - t[i]);
    return acc / static_cast<double>(p.size());
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(a.size());
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va < 1e-24 || vb < 1e-24) return 0.0;
    return cov / std::sqrt(va * vb);
}

inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

// ---- central finite differences with a kink-window guard -----------------
//
// Central differences estimate a derivative only where the loss is C^1
// inside the +-eps window. ReLU sign flips and min-max argmin/argmax
// switches inside the window make the estimate meaningless there. A
// coordinate passes if the analytic gradient matches the eps-window
// estimate; otherwise the window is validated by comparing against the
// eps/2 estimate (they agree closely iff the window is kink-free) and
// shrunk until clean. Coordinates that never present a clean window are
// skipped and counted; genuine gradient errors always surface because a
// clean window with a persistent mismatch fails.

struct FdReport {
    double max_rel_err = 0.0;
    long checked = 0;
    long shrunk = 0;
    long skipped = 0;
};

template <typename LossFn>
void fd_check_param(std::vector<float>& values, const std::vector<double>& analytic,
                    LossFn&& loss_at, double eps, double tol, FdReport& report) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        float saved = values[i];
        auto fd_at = [&](double e) {
            values[i] = static_cast<float>(static_cast<double>(saved) + e);
            double up = static_cast<double>(values[i]);
            double lp = loss_at();
            values[i] = static_cast<float>(static_cast<double>(saved) - e);
            double dn = static_cast<double>(values[i]);
            double lm = loss_at();
            values[i] = saved;
            return (lp - lm) / (up - dn);
        };

        double fd1 = fd_at(eps);
        if (rel_err(analytic[i], fd1) < tol) {
            report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic[i], fd1));
            ++report.checked;
            continue;
        }
        // suspicious: validate the window before declaring a failure
        double e = eps;
        bool resolved = false;
        for (int shrink = 0; shrink < 6 && !resolved; ++shrink) {
            double fa = fd_at(e);
            double fb = fd_at(e / 2);
            if (rel_err(fa, fb) < 2e-4) {
                report.max_rel_err = std::max(report.max_rel_err, rel_err(analytic[i], fa));
                ++report.checked;
                if (shrink > 0) ++report.shrunk;
                resolved = true;
            } else {
                e /= 4.0;
            }
        }
        if (!resolved) ++report.skipped;
    }
}

} // namespace kcal::test
