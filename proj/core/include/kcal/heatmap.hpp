#pragma once

// Human saliency maps: bounding boxes -> binary mask -> large-kernel
// Gaussian blur (reflect borders) -> area-average downsample to the model's
// feature-map resolution -> min-max scaling to [0,1].

#include <filesystem>

#include "kcal/annotation.hpp"
#include "kcal/tensor.hpp"

namespace kcal {

struct HeatmapConfig {
    int kernel_size = 0; // 0 -> default_kernel_size(image dims)
    double sigma = 0.0;  // 0 -> kernel_size / 6
    int cam_h = 7;
    int cam_w = 7;
    // border policy is fixed to reflect so constant maps stay constant
};

// Largest odd integer <= min(dims)/2, never below 3.
int default_kernel_size(int image_h, int image_w);

enum class Provenance { human, model };

struct SaliencyMap {
    FloatMap values; // in [0,1]; non-constant inputs attain 0 and 1 exactly
    Provenance provenance = Provenance::human;
};

// 1.0 inside any box (clamped to the image), 0.0 elsewhere; overlaps stay 1.0.
FloatMap boxes_to_mask(const Annotation& annotation);

// Separable Gaussian, kernel normalized to unit sum, reflect borders.
FloatMap gaussian_blur(const FloatMap& map, int kernel_size, double sigma);

// Area-average resampling: each output cell is the mean of its (possibly
// fractional) source region. Target dims must not exceed source dims.
FloatMap downsample_area(const FloatMap& map, int out_h, int out_w);

// (v - min) / (max - min); a constant map normalizes to all zeros.
FloatMap minmax_normalize(const FloatMap& map);

SaliencyMap build_hsm(const Annotation& annotation, const HeatmapConfig& config);

// 8-bit grayscale PNG, value = round(255 * v); read applies 1/255, so the
// round trip is within 1/510 per cell.
void write_heatmap(const SaliencyMap& map, const std::filesystem::path& path);
SaliencyMap read_heatmap(const std::filesystem::path& path);

} // namespace kcal
