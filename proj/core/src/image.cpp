#include "kcal/image.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include "kcal/error.hpp"

namespace kcal {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode, errc on_fail) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) fail(on_fail, "cannot open " + path.string());
    return f;
}

// libpng reports errors through longjmp; convert to exceptions outside the
// png_* call frames.
struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;

    PngReader() {
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (png) info = png_create_info_struct(png);
    }
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;

    PngWriter() {
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (png) info = png_create_info_struct(png);
    }
    ~PngWriter() { png_destroy_write_struct(&png, &info); }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;
};

struct DecodedPng {
    int height = 0;
    int width = 0;
    int channels = 0; // 1 (gray) or 3 (rgb)
    std::vector<std::uint8_t> data; // row-major, interleaved
};

DecodedPng decode_png(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb", errc::missing_file);

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        fail(errc::unsupported_format, path.string() + " is not a PNG file");

    PngReader r;
    if (!r.png || !r.info) fail(errc::corrupt_image, "libpng init failed");

    DecodedPng out;
    if (setjmp(png_jmpbuf(r.png)))
        fail(errc::corrupt_image, "corrupt PNG: " + path.string());

    png_init_io(r.png, f.get());
    png_set_sig_bytes(r.png, 8);
    png_read_info(r.png, r.info);

    png_uint_32 w = 0, h = 0;
    int bit_depth = 0, color_type = 0;
    png_get_IHDR(r.png, r.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);

    if (bit_depth != 8)
        fail(errc::unsupported_format, path.string() + ": only 8-bit PNG is supported");
    if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB)
        fail(errc::unsupported_format,
             path.string() + ": only 8-bit RGB or grayscale PNG is supported");

    out.height = static_cast<int>(h);
    out.width = static_cast<int>(w);
    out.channels = color_type == PNG_COLOR_TYPE_GRAY ? 1 : 3;

    std::size_t row_bytes = static_cast<std::size_t>(out.width) * out.channels;
    out.data.resize(static_cast<std::size_t>(out.height) * row_bytes);

    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y)
        rows[static_cast<std::size_t>(y)] = out.data.data() + static_cast<std::size_t>(y) * row_bytes;

    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
    return out;
}

void encode_png(const std::filesystem::path& path, int height, int width, int channels,
                const std::uint8_t* data) {
    FilePtr f = open_file(path, "wb", errc::unwritable_path);

    PngWriter wtr;
    if (!wtr.png || !wtr.info) fail(errc::unwritable_path, "libpng init failed");

    if (setjmp(png_jmpbuf(wtr.png)))
        fail(errc::unwritable_path, "PNG write failed: " + path.string());

    png_init_io(wtr.png, f.get());
    int color_type = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(wtr.png, wtr.info, static_cast<png_uint_32>(width),
                 static_cast<png_uint_32>(height), 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    // fixed encoder settings keep output bytes deterministic
    png_set_compression_level(wtr.png, 6);
    png_set_filter(wtr.png, 0, PNG_FILTER_NONE);
    png_write_info(wtr.png, wtr.info);

    std::size_t row_bytes = static_cast<std::size_t>(width) * channels;
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(data + static_cast<std::size_t>(y) * row_bytes);

    png_write_image(wtr.png, rows.data());
    png_write_end(wtr.png, nullptr);
}

std::uint8_t quantize01(double v) {
    if (v <= 0.0) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

} // namespace

ImageTensor load_image(const std::filesystem::path& path) {
    DecodedPng png = decode_png(path);
    ImageTensor t(png.height, png.width, 3);
    const double scale = 1.0 / 255.0;
    std::size_t i = 0;
    for (int y = 0; y < png.height; ++y) {
        for (int x = 0; x < png.width; ++x) {
            if (png.channels == 1) {
                double v = png.data[i++] * scale;
                t.at(y, x, 0) = v;
                t.at(y, x, 1) = v;
                t.at(y, x, 2) = v;
            } else {
                t.at(y, x, 0) = png.data[i++] * scale;
                t.at(y, x, 1) = png.data[i++] * scale;
                t.at(y, x, 2) = png.data[i++] * scale;
            }
        }
    }
    return t;
}

ImageDims probe_image_dims(const std::filesystem::path& path) {
    // IHDR is always the first chunk: signature (8) + length/type (8) + data
    FilePtr f = open_file(path, "rb", errc::missing_file);
    unsigned char buf[24];
    if (std::fread(buf, 1, 24, f.get()) != 24 || png_sig_cmp(buf, 0, 8) != 0)
        fail(errc::unsupported_format, path.string() + " is not a PNG file");
    if (std::memcmp(buf + 12, "IHDR", 4) != 0)
        fail(errc::corrupt_image, "corrupt PNG: " + path.string());
    auto be32 = [&](int off) {
        return (static_cast<std::uint32_t>(buf[off]) << 24) |
               (static_cast<std::uint32_t>(buf[off + 1]) << 16) |
               (static_cast<std::uint32_t>(buf[off + 2]) << 8) |
               static_cast<std::uint32_t>(buf[off + 3]);
    };
    ImageDims d;
    d.width = static_cast<int>(be32(16));
    d.height = static_cast<int>(be32(20));
    return d;
}

void write_image_rgb8(const std::filesystem::path& path, const Tensor3& image) {
    if (image.c != 3) fail(errc::shape_mismatch, "write_image_rgb8 expects 3 channels");
    std::vector<std::uint8_t> bytes(image.size());
    std::size_t i = 0;
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            for (int ch = 0; ch < 3; ++ch) bytes[i++] = quantize01(image.at(y, x, ch));
    encode_png(path, image.h, image.w, 3, bytes.data());
}

void write_png_rgb8(const std::filesystem::path& path, int height, int width,
                    const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(height) * width * 3)
        fail(errc::shape_mismatch, "write_png_rgb8: byte count does not match dims");
    encode_png(path, height, width, 3, rgb.data());
}

void write_png_gray8(const std::filesystem::path& path, const FloatMap& map) {
    std::vector<std::uint8_t> bytes(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) bytes[i] = quantize01(map.v[i]);
    encode_png(path, map.rows, map.cols, 1, bytes.data());
}

FloatMap read_png_gray8(const std::filesystem::path& path) {
    DecodedPng png = decode_png(path);
    FloatMap m(png.height, png.width);
    const double scale = 1.0 / 255.0;
    if (png.channels == 1) {
        for (std::size_t i = 0; i < m.size(); ++i) m.v[i] = png.data[i] * scale;
    } else {
        fail(errc::unsupported_format, path.string() + ": expected a grayscale PNG");
    }
    return m;
}

} // namespace kcal
