#pragma once

// Synthetic scene generator with an exact calorie oracle. Scenes are flat
// colored shapes on a plain background; per-shape calories are
// area_px * calorie_density where area_px is the exact rasterized pixel
// count and the density is a fixed function of the shape's red channel.
// The annotation boxes the single highest-calorie shape, so the true
// salient region is known by construction.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kcal/annotation.hpp"
#include "kcal/manifest.hpp"
#include "kcal/rng.hpp"

namespace kcal {

enum class ShapeKind { ellipse, rectangle };

struct SyntheticShape {
    ShapeKind kind = ShapeKind::rectangle;
    std::uint8_t rgb[3] = {0, 0, 0};
    int x = 0, y = 0, w = 0, h = 0; // bounding box, origin top-left
    int area_px = 0;                // exact painted pixel count
    double calorie_density = 0.0;   // kcal per pixel
    double mass_density = 0.0;      // grams per pixel

    double calories() const { return static_cast<double>(area_px) * calorie_density; }
    double mass() const { return static_cast<double>(area_px) * mass_density; }
};

// Backgrounds come from two palettes: the training palette is dark, the
// shifted palette is brighter and overlaps the shapes' color range. Test
// corpora generated with the shifted palette probe whether a model keys on
// background pixels.
enum class BackgroundStyle { dark, shifted };

struct SyntheticScene {
    int canvas_h = 0;
    int canvas_w = 0;
    std::uint8_t background[3] = {0, 0, 0};
    std::vector<SyntheticShape> shapes;

    double total_calories() const; // sum of area_px * density, shape order
    double total_mass() const;
    std::size_t max_calorie_shape() const; // argmax area_px * density, first on ties
    std::string class_label() const;       // one of the five calorie bands
    Annotation annotation() const;         // boxes the max-calorie shape
};

struct RenderedScene {
    SyntheticScene scene;
    std::vector<std::uint8_t> rgb; // canvas_h * canvas_w * 3
};

// Samples and rasterizes one scene; shape area_px fields hold the exact
// painted pixel counts. Shapes never overlap.
RenderedScene make_scene(int canvas_h, int canvas_w, SplitMix64& rng, BackgroundStyle style);

struct SyntheticConfig {
    int count = 1;
    int canvas_h = 64;
    int canvas_w = 64;
    std::uint64_t seed = 0;
    BackgroundStyle style = BackgroundStyle::dark;
};

// Writes count scene PNGs, one annotation JSON per image, and manifest.csv
// into out_dir. Per-scene RNG streams derive from (seed, scene index), so
// output is independent of generation order. Returns the manifest (also
// saved as out_dir/manifest.csv).
Manifest generate_synthetic(const SyntheticConfig& config, const std::filesystem::path& out_dir);

} // namespace kcal
