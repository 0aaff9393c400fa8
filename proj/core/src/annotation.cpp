#include "kcal/annotation.hpp"

#include <fstream>

#include <json.hpp>

#include "kcal/error.hpp"

namespace kcal {

Annotation read_annotation(const std::filesystem::path& path, int image_h, int image_w) {
    std::ifstream in(path);
    if (!in) fail(errc::missing_file, "annotation not found: " + path.string());

    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(errc::malformed_row, "bad annotation JSON " + path.string() + ": " + e.what());
    }

    Annotation a;
    a.image_h = image_h;
    a.image_w = image_w;
    if (!j.is_object() || !j.contains("boxes") || !j["boxes"].is_array())
        fail(errc::malformed_row, path.string() + ": expected {\"boxes\": [...]}");
    for (const auto& jb : j["boxes"]) {
        Box b;
        try {
            b.x = jb.at("x").get<int>();
            b.y = jb.at("y").get<int>();
            b.w = jb.at("w").get<int>();
            b.h = jb.at("h").get<int>();
        } catch (const nlohmann::json::exception& e) {
            fail(errc::malformed_row, path.string() + ": bad box: " + e.what());
        }
        if (b.w <= 0 || b.h <= 0)
            fail(errc::malformed_row, path.string() + ": box with non-positive size");
        a.boxes.push_back(b);
    }
    if (a.boxes.empty()) fail(errc::malformed_row, path.string() + ": no boxes");
    return a;
}

void write_annotation(const Annotation& annotation, const std::filesystem::path& path) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const Box& b : annotation.boxes)
        boxes.push_back({{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
    nlohmann::json j{{"boxes", boxes}};

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::unwritable_path, "cannot write annotation: " + path.string());
    out << j.dump() << "\n";
}

} // namespace kcal
