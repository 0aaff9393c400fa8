#pragma once

// Dense numeric containers. FloatMap is a 2-D row-major map (saliency maps,
// masks, kernels); Tensor3 is H x W x C with the channel index contiguous,
// which keeps convolution inner loops on contiguous memory.

#include <cassert>
#include <cstddef>
#include <vector>

namespace kcal {

struct FloatMap {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    FloatMap() = default;
    FloatMap(int r, int c, double fill = 0.0)
        : rows(r), cols(c), v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return v.size(); }
    bool same_dims(const FloatMap& o) const { return rows == o.rows && cols == o.cols; }
};

struct Tensor3 {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<double> v;

    Tensor3() = default;
    Tensor3(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_),
          v(static_cast<std::size_t>(h_) * static_cast<std::size_t>(w_) * static_cast<std::size_t>(c_),
            fill) {}

    double& at(int y, int x, int ch) {
        return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    double at(int y, int x, int ch) const {
        return v[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }

    // pointer to the channel vector at (y, x)
    double* pixel(int y, int x) { return &v[(static_cast<std::size_t>(y) * w + x) * c]; }
    const double* pixel(int y, int x) const {
        return &v[(static_cast<std::size_t>(y) * w + x) * c];
    }

    std::size_t size() const { return v.size(); }
};

// Channel ch of a Tensor3 as a FloatMap (copies).
inline FloatMap channel_map(const Tensor3& t, int ch) {
    FloatMap m(t.h, t.w);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
            m.at(y, x) = t.at(y, x, ch);
    return m;
}

} // namespace kcal
