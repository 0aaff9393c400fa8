#pragma once

// Bounding-box annotations marking the most caloric image regions.
// File schema: {"boxes":[{"x":int,"y":int,"w":int,"h":int}, ...]},
// origin top-left, pixel units.

#include <filesystem>
#include <vector>

namespace kcal {

struct Box {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
};

struct Annotation {
    int image_h = 0;
    int image_w = 0;
    std::vector<Box> boxes;
};

// image_h/image_w come from the image the annotation belongs to; the file
// stores only the boxes. Requires at least one box with w > 0 and h > 0.
Annotation read_annotation(const std::filesystem::path& path, int image_h, int image_w);

void write_annotation(const Annotation& annotation, const std::filesystem::path& path);

} // namespace kcal
