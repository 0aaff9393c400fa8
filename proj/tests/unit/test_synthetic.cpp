#include <doctest.h>

#include <set>
#include <fstream>

#include "kcal/error.hpp"
#include "kcal/synthetic.hpp"
#include "support/tmpdir.hpp"

using namespace kcal;
using kcal::test::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

} // namespace

TEST_CASE("scene calories are area times density by construction") {
    SyntheticScene scene;
    scene.canvas_h = scene.canvas_w = 64;
    SyntheticShape s;
    s.kind = ShapeKind::rectangle;
    s.area_px = 100;
    s.calorie_density = 2.0;
    scene.shapes.push_back(s);
    CHECK(scene.total_calories() == 200.0);
}

TEST_CASE("annotation bounds the maximum-calorie shape") {
    SyntheticScene scene;
    scene.canvas_h = scene.canvas_w = 64;
    SyntheticShape a;
    a.area_px = 50;
    a.calorie_density = 1.0;
    a.x = 1; a.y = 1; a.w = 10; a.h = 5;
    SyntheticShape b;
    b.area_px = 20;
    b.calorie_density = 4.0; // 80 kcal > 50 kcal
    b.x = 30; b.y = 30; b.w = 5; b.h = 4;
    scene.shapes = {a, b};

    CHECK(scene.max_calorie_shape() == 1);
    Annotation ann = scene.annotation();
    REQUIRE(ann.boxes.size() == 1);
    CHECK(ann.boxes[0].x == 30);
    CHECK(ann.boxes[0].y == 30);
    CHECK(ann.boxes[0].w == 5);
    CHECK(ann.boxes[0].h == 4);
}

TEST_CASE("generated manifest calories equal the scene oracle exactly") {
    TempDir dir("synth_oracle");
    SyntheticConfig config;
    config.count = 60;
    config.seed = 5;
    Manifest manifest = generate_synthetic(config, dir.path);
    REQUIRE(manifest.size() == 60);

    for (int i = 0; i < config.count; ++i) {
        SplitMix64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
        RenderedScene rendered = make_scene(64, 64, rng, BackgroundStyle::dark);

        double expected = 0.0;
        for (const auto& s : rendered.scene.shapes)
            expected += static_cast<double>(s.area_px) * s.calorie_density;
        CHECK(manifest.records[static_cast<std::size_t>(i)].calories == expected);
        CHECK(manifest.records[static_cast<std::size_t>(i)].mass ==
              rendered.scene.total_mass());

        // the annotated box is the argmax shape's box
        const auto& best = rendered.scene.shapes[rendered.scene.max_calorie_shape()];
        for (const auto& s : rendered.scene.shapes)
            CHECK(best.calories() >= s.calories());
    }

    // round trip through the file keeps the exact doubles
    Manifest reloaded = load_manifest(dir / "manifest.csv");
    for (std::size_t i = 0; i < manifest.size(); ++i)
        CHECK(reloaded.records[i].calories == manifest.records[i].calories);
}

TEST_CASE("regeneration with the same seed is byte-identical") {
    TempDir a("synth_a"), b("synth_b");
    SyntheticConfig config;
    config.count = 40;
    config.seed = 99;
    generate_synthetic(config, a.path);
    generate_synthetic(config, b.path);

    CHECK(slurp(a / "manifest.csv") == slurp(b / "manifest.csv"));
    CHECK(slurp(a / "img_00000.png") == slurp(b / "img_00000.png"));
    CHECK(slurp(a / "img_00013.ann.json") == slurp(b / "img_00013.ann.json"));

    SyntheticConfig other = config;
    other.seed = 100;
    TempDir c("synth_c");
    generate_synthetic(other, c.path);
    CHECK(slurp(a / "manifest.csv") != slurp(c / "manifest.csv"));
}

TEST_CASE("generator validates its inputs") {
    TempDir dir("synth_bad");
    SyntheticConfig config;
    config.count = 0;
    CHECK_THROWS_AS(generate_synthetic(config, dir.path), error);
    config.count = 1;
    config.canvas_h = 8;
    CHECK_THROWS_AS(generate_synthetic(config, dir.path), error);
}

TEST_CASE("unwritable output dir is reported") {
    TempDir dir("synth_unwritable");
    std::ofstream(dir / "blocker").put('x');
    SyntheticConfig config;
    config.count = 1;
    try {
        generate_synthetic(config, dir.path / "blocker" / "out");
        FAIL("expected UnwritableOutputDir");
    } catch (const error& e) {
        CHECK(e.code() == errc::unwritable_output_dir);
    }
}

TEST_CASE("scenes never overlap and class bands cover the corpus") {
    SplitMix64 rng(123);
    std::set<std::string> bands;
    for (int i = 0; i < 200; ++i) {
        RenderedScene r = make_scene(64, 64, rng, BackgroundStyle::dark);
        bands.insert(r.scene.class_label());
        const auto& shapes = r.scene.shapes;
        REQUIRE(shapes.size() >= 1);
        for (std::size_t a = 0; a < shapes.size(); ++a)
            for (std::size_t b = a + 1; b < shapes.size(); ++b) {
                bool overlap = shapes[a].x < shapes[b].x + shapes[b].w &&
                               shapes[b].x < shapes[a].x + shapes[a].w &&
                               shapes[a].y < shapes[b].y + shapes[b].h &&
                               shapes[b].y < shapes[a].y + shapes[a].h;
                CHECK_FALSE(overlap);
            }
    }
    CHECK(bands.size() == 5);
}
