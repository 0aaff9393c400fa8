#pragma once

// 8-bit PNG image IO. Images are exchanged as Tensor3 (H x W x 3) with
// values in [0,1]; grayscale files are replicated to 3 channels on load.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kcal/tensor.hpp"

namespace kcal {

using ImageTensor = Tensor3; // H x W x 3, values in [0,1]

// Decodes an 8-bit RGB or grayscale PNG; channel values scaled by 1/255.
ImageTensor load_image(const std::filesystem::path& path);

// Dimensions without a full decode (reads the IHDR chunk).
struct ImageDims {
    int height = 0;
    int width = 0;
};
ImageDims probe_image_dims(const std::filesystem::path& path);

// Encodes round(255 * v) per channel. Values are clamped to [0,1].
void write_image_rgb8(const std::filesystem::path& path, const Tensor3& image);

// Raw 8-bit interleaved RGB rows, for callers that already work in bytes.
void write_png_rgb8(const std::filesystem::path& path, int height, int width,
                    const std::vector<std::uint8_t>& rgb);

// 8-bit grayscale PNG from/to a [0,1] map: write stores round(255 * v),
// read applies 1/255.
void write_png_gray8(const std::filesystem::path& path, const FloatMap& map);
FloatMap read_png_gray8(const std::filesystem::path& path);

} // namespace kcal
