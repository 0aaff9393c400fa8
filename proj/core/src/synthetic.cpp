#include "kcal/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <system_error>

#include "kcal/error.hpp"
#include "kcal/image.hpp"

namespace kcal {
namespace {

// Densities keep desk-scale totals around O(10) kcal so losses on both the
// calorie and saliency paths live within a few orders of magnitude of each
// other during training.
constexpr double kDensityMax = 0.04; // kcal/px at red = 255
constexpr double kMassDensityEllipse = 0.016;
constexpr double kMassDensityRect = 0.024;

// calorie bands used as classification labels
constexpr std::array<double, 4> kBandEdges = {6.0, 10.0, 14.0, 20.0};

bool boxes_touch(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh, int margin) {
    return ax < bx + bw + margin && bx < ax + aw + margin && ay < by + bh + margin &&
           by < ay + ah + margin;
}

bool inside_ellipse(int px, int py, const SyntheticShape& s) {
    double cx = s.x + s.w / 2.0;
    double cy = s.y + s.h / 2.0;
    double dx = (px + 0.5 - cx) / (s.w / 2.0);
    double dy = (py + 0.5 - cy) / (s.h / 2.0);
    return dx * dx + dy * dy <= 1.0;
}

} // namespace

double SyntheticScene::total_calories() const {
    double total = 0.0;
    for (const auto& s : shapes) total += s.calories();
    return total;
}

double SyntheticScene::total_mass() const {
    double total = 0.0;
    for (const auto& s : shapes) total += s.mass();
    return total;
}

std::size_t SyntheticScene::max_calorie_shape() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < shapes.size(); ++i)
        if (shapes[i].calories() > shapes[best].calories()) best = i;
    return best;
}

std::string SyntheticScene::class_label() const {
    double cal = total_calories();
    std::size_t band = 0;
    while (band < kBandEdges.size() && cal >= kBandEdges[band]) ++band;
    return "cal_band_" + std::to_string(band);
}

Annotation SyntheticScene::annotation() const {
    const SyntheticShape& s = shapes[max_calorie_shape()];
    Annotation a;
    a.image_h = canvas_h;
    a.image_w = canvas_w;
    a.boxes.push_back(Box{s.x, s.y, s.w, s.h});
    return a;
}

RenderedScene make_scene(int canvas_h, int canvas_w, SplitMix64& rng, BackgroundStyle style) {
    RenderedScene out;
    SyntheticScene& scene = out.scene;
    scene.canvas_h = canvas_h;
    scene.canvas_w = canvas_w;

    int target_shapes = rng.next_int(1, 3);
    int max_side = std::min({24, canvas_h - 2, canvas_w - 2});
    int min_side = std::min(10, max_side);

    for (int k = 0; k < target_shapes; ++k) {
        SyntheticShape s;
        s.kind = rng.next_below(2) == 0 ? ShapeKind::ellipse : ShapeKind::rectangle;
        s.w = rng.next_int(min_side, max_side);
        s.h = rng.next_int(min_side, max_side);
        int red = rng.next_int(112, 255);
        s.rgb[0] = static_cast<std::uint8_t>(red);
        s.rgb[1] = static_cast<std::uint8_t>(rng.next_int(0, 180));
        s.rgb[2] = static_cast<std::uint8_t>(rng.next_int(0, 180));
        s.calorie_density = kDensityMax * static_cast<double>(red) / 255.0;
        s.mass_density = s.kind == ShapeKind::ellipse ? kMassDensityEllipse : kMassDensityRect;

        bool placed = false;
        for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
            s.x = rng.next_int(1, canvas_w - s.w - 1);
            s.y = rng.next_int(1, canvas_h - s.h - 1);
            placed = true;
            for (const auto& other : scene.shapes)
                if (boxes_touch(s.x, s.y, s.w, s.h, other.x, other.y, other.w, other.h, 2))
                    placed = false;
        }
        if (placed) scene.shapes.push_back(s);
    }
    // first shape always fits, so every scene has at least one

    // The training palette carries a background cue correlated with the scene's
    // calories (a shortcut a model may latch onto); the shifted palette draws
    // the same marginal range with the correlation broken.
    scene.background[0] = static_cast<std::uint8_t>(rng.next_int(8, 48));
    scene.background[2] = static_cast<std::uint8_t>(rng.next_int(8, 48));
    if (style == BackgroundStyle::dark) {
        int cue = 40 + static_cast<int>(std::lround(4.0 * scene.total_calories())) +
                  rng.next_int(-12, 12);
        scene.background[1] = static_cast<std::uint8_t>(std::clamp(cue, 40, 200));
    } else {
        scene.background[1] = static_cast<std::uint8_t>(rng.next_int(40, 200));
    }

    out.rgb.assign(static_cast<std::size_t>(canvas_h) * canvas_w * 3, 0);
    for (int y = 0; y < canvas_h; ++y)
        for (int x = 0; x < canvas_w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                out.rgb[(static_cast<std::size_t>(y) * canvas_w + x) * 3 + ch] =
                    scene.background[ch];

    for (auto& s : scene.shapes) {
        int count = 0;
        for (int py = s.y; py < s.y + s.h; ++py) {
            for (int px = s.x; px < s.x + s.w; ++px) {
                if (s.kind == ShapeKind::ellipse && !inside_ellipse(px, py, s)) continue;
                std::size_t at = (static_cast<std::size_t>(py) * canvas_w + px) * 3;
                out.rgb[at] = s.rgb[0];
                out.rgb[at + 1] = s.rgb[1];
                out.rgb[at + 2] = s.rgb[2];
                ++count;
            }
        }
        s.area_px = count;
    }
    return out;
}

Manifest generate_synthetic(const SyntheticConfig& config, const std::filesystem::path& out_dir) {
    if (config.count < 1) fail(errc::invalid_config, "count must be >= 1");
    if (config.canvas_h < 16 || config.canvas_w < 16)
        fail(errc::invalid_config, "canvas must be at least 16x16");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        fail(errc::unwritable_output_dir, "cannot create output dir: " + out_dir.string());
    {
        std::FILE* probe = std::fopen((out_dir / ".write_probe").string().c_str(), "wb");
        if (!probe) fail(errc::unwritable_output_dir, "output dir not writable: " + out_dir.string());
        std::fclose(probe);
        std::filesystem::remove(out_dir / ".write_probe");
    }

    Manifest manifest;
    manifest.base_dir = out_dir;

    for (int i = 0; i < config.count; ++i) {
        SplitMix64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
        RenderedScene rendered = make_scene(config.canvas_h, config.canvas_w, rng, config.style);

        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d", i);
        std::string image_name = std::string(name) + ".png";
        std::string ann_name = std::string(name) + ".ann.json";

        write_png_rgb8(out_dir / image_name, config.canvas_h, config.canvas_w, rendered.rgb);
        write_annotation(rendered.scene.annotation(), out_dir / ann_name);

        ManifestRecord rec;
        rec.image_path = image_name;
        rec.calories = rendered.scene.total_calories();
        rec.mass = rendered.scene.total_mass();
        rec.class_label = rendered.scene.class_label();
        rec.annotation_path = ann_name;
        manifest.records.push_back(std::move(rec));
    }

    save_manifest(manifest, out_dir / "manifest.csv");
    return manifest;
}

} // namespace kcal
