#include "kcal/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "kcal/error.hpp"
#include "kcal/image.hpp"

namespace kcal {
namespace {

// symmetric reflection: -1 -> 0, n -> n-1; folds until in range so kernels
// wider than the map still work
int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

std::vector<double> gaussian_kernel(int kernel_size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(kernel_size));
    int c = kernel_size / 2;
    double sum = 0.0;
    for (int i = 0; i < kernel_size; ++i) {
        double d = i - c;
        k[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// overlap weights of source cells [i, i+1) against output cell r covering
// [r*n/m, (r+1)*n/m)
struct CellWeights {
    int first = 0;
    std::vector<double> w; // sums to 1
};

std::vector<CellWeights> area_weights(int n, int m) {
    std::vector<CellWeights> out(static_cast<std::size_t>(m));
    double scale = static_cast<double>(n) / m;
    for (int r = 0; r < m; ++r) {
        double lo = r * scale;
        double hi = (r + 1) * scale;
        int first = static_cast<int>(std::floor(lo));
        int last = std::min(n - 1, static_cast<int>(std::ceil(hi)) - 1);
        CellWeights cw;
        cw.first = first;
        double total = 0.0;
        for (int i = first; i <= last; ++i) {
            double overlap = std::min<double>(i + 1, hi) - std::max<double>(i, lo);
            overlap = std::max(overlap, 0.0);
            cw.w.push_back(overlap);
            total += overlap;
        }
        for (auto& v : cw.w) v /= total;
        out[static_cast<std::size_t>(r)] = std::move(cw);
    }
    return out;
}

} // namespace

int default_kernel_size(int image_h, int image_w) {
    int k = std::min(image_h, image_w) / 2;
    if (k % 2 == 0) --k;
    return std::max(k, 3);
}

FloatMap boxes_to_mask(const Annotation& annotation) {
    FloatMap mask(annotation.image_h, annotation.image_w, 0.0);
    for (const Box& b : annotation.boxes) {
        int x0 = std::clamp(b.x, 0, annotation.image_w);
        int y0 = std::clamp(b.y, 0, annotation.image_h);
        int x1 = std::clamp(b.x + b.w, 0, annotation.image_w);
        int y1 = std::clamp(b.y + b.h, 0, annotation.image_h);
        if (x1 <= x0 || y1 <= y0)
            fail(errc::box_out_of_bounds, "box has no area inside the image after clamping");
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) mask.at(y, x) = 1.0;
    }
    return mask;
}

FloatMap gaussian_blur(const FloatMap& map, int kernel_size, double sigma) {
    if (kernel_size < 3 || kernel_size % 2 == 0)
        fail(errc::even_kernel, "kernel size must be an odd integer >= 3");
    if (!(sigma > 0.0)) fail(errc::non_positive_sigma, "sigma must be positive");

    std::vector<double> k = gaussian_kernel(kernel_size, sigma);
    int radius = kernel_size / 2;

    FloatMap tmp(map.rows, map.cols);
    for (int y = 0; y < map.rows; ++y) {
        for (int x = 0; x < map.cols; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t)
                acc += k[static_cast<std::size_t>(t + radius)] *
                       map.at(y, reflect_index(x + t, map.cols));
            tmp.at(y, x) = acc;
        }
    }
    FloatMap out(map.rows, map.cols);
    for (int y = 0; y < map.rows; ++y) {
        for (int x = 0; x < map.cols; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t)
                acc += k[static_cast<std::size_t>(t + radius)] *
                       tmp.at(reflect_index(y + t, map.rows), x);
            out.at(y, x) = acc;
        }
    }
    return out;
}

FloatMap downsample_area(const FloatMap& map, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) fail(errc::invalid_config, "target dims must be positive");
    if (out_h > map.rows || out_w > map.cols)
        fail(errc::upsample_requested, "target dims exceed source dims");

    auto rows = area_weights(map.rows, out_h);
    auto cols = area_weights(map.cols, out_w);

    FloatMap out(out_h, out_w);
    for (int r = 0; r < out_h; ++r) {
        for (int c = 0; c < out_w; ++c) {
            double acc = 0.0;
            for (std::size_t ri = 0; ri < rows[static_cast<std::size_t>(r)].w.size(); ++ri) {
                double row_acc = 0.0;
                int y = rows[static_cast<std::size_t>(r)].first + static_cast<int>(ri);
                for (std::size_t ci = 0; ci < cols[static_cast<std::size_t>(c)].w.size(); ++ci) {
                    int x = cols[static_cast<std::size_t>(c)].first + static_cast<int>(ci);
                    row_acc += cols[static_cast<std::size_t>(c)].w[ci] * map.at(y, x);
                }
                acc += rows[static_cast<std::size_t>(r)].w[ri] * row_acc;
            }
            out.at(r, c) = acc;
        }
    }
    return out;
}

FloatMap minmax_normalize(const FloatMap& map) {
    double lo = map.v[0];
    double hi = map.v[0];
    for (double v : map.v) {
        if (!std::isfinite(v)) fail(errc::non_finite_input, "map contains NaN or Inf");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    FloatMap out(map.rows, map.cols, 0.0);
    if (hi > lo) {
        double inv = 1.0 / (hi - lo);
        for (std::size_t i = 0; i < map.size(); ++i) out.v[i] = (map.v[i] - lo) * inv;
    }
    return out;
}

SaliencyMap build_hsm(const Annotation& annotation, const HeatmapConfig& config) {
    int kernel = config.kernel_size != 0
                     ? config.kernel_size
                     : default_kernel_size(annotation.image_h, annotation.image_w);
    double sigma = config.sigma != 0.0 ? config.sigma : kernel / 6.0;

    FloatMap mask = boxes_to_mask(annotation);
    FloatMap blurred = gaussian_blur(mask, kernel, sigma);
    FloatMap small = downsample_area(blurred, config.cam_h, config.cam_w);
    return SaliencyMap{minmax_normalize(small), Provenance::human};
}

void write_heatmap(const SaliencyMap& map, const std::filesystem::path& path) {
    write_png_gray8(path, map.values);
}

SaliencyMap read_heatmap(const std::filesystem::path& path) {
    return SaliencyMap{read_png_gray8(path), Provenance::human};
}

} // namespace kcal
