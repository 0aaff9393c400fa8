#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "kcal/error.hpp"
#include "kcal/image.hpp"
#include "kcal/manifest.hpp"
#include "kcal/rng.hpp"
#include "support/tmpdir.hpp"

using namespace kcal;
using kcal::test::TempDir;

namespace {

// 1x1 black png all rows can point at
std::filesystem::path make_stub_image(const TempDir& dir) {
    auto p = dir / "stub.png";
    write_png_rgb8(p, 1, 1, {0, 0, 0});
    return p;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
    std::ofstream out(p, std::ios::binary);
    for (const auto& l : lines) out << l << "\n";
}

} // namespace

TEST_CASE("load_manifest parses rows in file order") {
    TempDir dir("manifest");
    make_stub_image(dir);
    write_lines(dir / "m.csv", {
                                   "image_path,calories,mass,class_label,annotation_path",
                                   "stub.png,100,,,",
                                   "stub.png,250,80.5,soup,",
                                   "stub.png,410,,,stub.ann.json",
                               });
    Manifest m = load_manifest(dir / "m.csv");
    REQUIRE(m.size() == 3);
    CHECK(m.records[0].calories == 100.0);
    CHECK(m.records[1].calories == 250.0);
    CHECK(m.records[2].calories == 410.0);
    CHECK(m.records[1].mass == 80.5);
    CHECK(m.records[1].class_label == "soup");
    CHECK_FALSE(m.records[0].annotation_path.has_value());
    CHECK(m.records[2].annotation_path == "stub.ann.json");
}

TEST_CASE("load_manifest rejects negative calories with the line number") {
    TempDir dir("manifest_neg");
    make_stub_image(dir);
    write_lines(dir / "m.csv", {"image_path,calories,mass,class_label,annotation_path",
                                "stub.png,100,,,", "stub.png,-5,,,"});
    try {
        load_manifest(dir / "m.csv");
        FAIL("expected NegativeCalories");
    } catch (const error& e) {
        CHECK(e.code() == errc::negative_calories);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("load_manifest error paths") {
    TempDir dir("manifest_err");
    make_stub_image(dir);

    CHECK_THROWS_AS(load_manifest(dir / "nope.csv"), error);

    write_lines(dir / "bad_header.csv", {"image,calories", "stub.png,1,,,"});
    try {
        load_manifest(dir / "bad_header.csv");
        FAIL("expected MalformedRow");
    } catch (const error& e) {
        CHECK(e.code() == errc::malformed_row);
    }

    write_lines(dir / "bad_float.csv", {"image_path,calories,mass,class_label,annotation_path",
                                        "stub.png,abc,,,"});
    try {
        load_manifest(dir / "bad_float.csv");
        FAIL("expected MalformedRow");
    } catch (const error& e) {
        CHECK(e.code() == errc::malformed_row);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    write_lines(dir / "dangling.csv", {"image_path,calories,mass,class_label,annotation_path",
                                       "missing.png,10,,,"});
    try {
        load_manifest(dir / "dangling.csv");
        FAIL("expected DanglingImagePath");
    } catch (const error& e) {
        CHECK(e.code() == errc::dangling_image_path);
    }
}

TEST_CASE("646-row manifest loads all records") {
    TempDir dir("manifest_646");
    make_stub_image(dir);
    std::vector<std::string> lines = {"image_path,calories,mass,class_label,annotation_path"};
    for (int i = 0; i < 646; ++i)
        lines.push_back("stub.png," + std::to_string(100 + i) + ",,,");
    write_lines(dir / "m.csv", lines);
    CHECK(load_manifest(dir / "m.csv").size() == 646);
}

TEST_CASE("manifest load/save round trip is idempotent") {
    TempDir dir("manifest_rt");
    make_stub_image(dir);
    write_lines(dir / "m.csv", {"image_path,calories,mass,class_label,annotation_path",
                                "stub.png,12.625,3.1415926535897931,a,x.json",
                                "stub.png,0.1,,,"});
    Manifest m1 = load_manifest(dir / "m.csv");
    save_manifest(m1, dir / "m2.csv");
    Manifest m2 = load_manifest(dir / "m2.csv");
    save_manifest(m2, dir / "m3.csv");

    REQUIRE(m1.size() == m2.size());
    for (std::size_t i = 0; i < m1.size(); ++i) {
        CHECK(m1.records[i].calories == m2.records[i].calories);
        CHECK(m1.records[i].mass == m2.records[i].mass);
        CHECK(m1.records[i].image_path == m2.records[i].image_path);
    }
    // saved files are byte-identical from the second save on
    std::ifstream a(dir / "m2.csv", std::ios::binary), b(dir / "m3.csv", std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
}

namespace {

Manifest fake_manifest(std::size_t n) {
    Manifest m;
    m.base_dir = ".";
    for (std::size_t i = 0; i < n; ++i) {
        ManifestRecord rec;
        rec.image_path = "img_" + std::to_string(i) + ".png";
        rec.calories = static_cast<double>(i);
        m.records.push_back(rec);
    }
    return m;
}

} // namespace

TEST_CASE("split sizes follow floor(train_fraction * N)") {
    SplitResult r = split_dataset(fake_manifest(10), SplitSpec{0.8, 1});
    CHECK(r.train.size() == 8);
    CHECK(r.validation.size() == 2);
    CHECK_FALSE(r.empty_train);

    SplitResult one = split_dataset(fake_manifest(1), SplitSpec{0.8, 1});
    CHECK(one.train.size() == 0);
    CHECK(one.validation.size() == 1);
    CHECK(one.empty_train);
}

TEST_CASE("split is deterministic in the seed") {
    Manifest m = fake_manifest(50);
    SplitResult a = split_dataset(m, SplitSpec{0.8, 42});
    SplitResult b = split_dataset(m, SplitSpec{0.8, 42});
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i)
        CHECK(a.train.records[i].image_path == b.train.records[i].image_path);

    SplitResult c = split_dataset(m, SplitSpec{0.8, 43});
    bool all_same = true;
    for (std::size_t i = 0; i < a.train.size(); ++i)
        all_same &= a.train.records[i].image_path == c.train.records[i].image_path;
    CHECK_FALSE(all_same);
}

TEST_CASE("split is a partition for randomized sizes") {
    SplitMix64 rng(7);
    for (int trial = 0; trial < 12; ++trial) {
        std::size_t n = 1 + rng.next_below(10000);
        double fraction = 0.05 + 0.9 * rng.next_double();
        Manifest m = fake_manifest(n);
        SplitResult r = split_dataset(m, SplitSpec{fraction, rng.next()});

        CHECK(r.train.size() + r.validation.size() == n);
        CHECK(r.train.size() == static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));

        std::set<std::string> seen;
        for (const auto& rec : r.train.records) seen.insert(rec.image_path);
        for (const auto& rec : r.validation.records) seen.insert(rec.image_path);
        CHECK(seen.size() == n); // no duplication, no loss
    }
}

TEST_CASE("split rejects empty manifests and bad fractions") {
    CHECK_THROWS_AS(split_dataset(Manifest{}, SplitSpec{0.8, 0}), error);
    CHECK_THROWS_AS(split_dataset(fake_manifest(5), SplitSpec{1.0, 0}), error);
    CHECK_THROWS_AS(split_dataset(fake_manifest(5), SplitSpec{0.0, 0}), error);
}

TEST_CASE("collect_class_labels returns the sorted closed set") {
    Manifest a = fake_manifest(2);
    a.records[0].class_label = "soup";
    a.records[1].class_label = "bread";
    Manifest b = fake_manifest(1);
    b.records[0].class_label = "soup";
    auto labels = collect_class_labels({&a, &b});
    REQUIRE(labels.size() == 2);
    CHECK(labels[0] == "bread");
    CHECK(labels[1] == "soup");
}
