#pragma once

#include <png.h>

#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "morphcolor/colorspace.hpp"
#include "morphcolor/field.hpp"

namespace morphcolor {

namespace detail {

inline uint8_t to_byte(double v) {
    const double scaled = std::clamp(v, 0.0, 1.0) * 255.0;
    return static_cast<uint8_t>(std::lround(scaled));
}

inline ColorImage color_from_rgb8(const std::vector<uint8_t>& rgb, int rows, int cols) {
    ColorImage out(rows, cols);
    for (int i = 0; i < rows * cols; ++i) {
        out.r[i] = rgb[static_cast<size_t>(i) * 3] / 255.0;
        out.g[i] = rgb[static_cast<size_t>(i) * 3 + 1] / 255.0;
        out.b[i] = rgb[static_cast<size_t>(i) * 3 + 2] / 255.0;
    }
    return out;
}

inline ColorImage load_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError("failed to open PNG '" + path + "': " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError("failed to decode PNG '" + path + "': " + image.message);
    }
    return color_from_rgb8(buffer, static_cast<int>(image.height), static_cast<int>(image.width));
}

// Binary PPM (P6) and PGM (P5), 8-bit only; gray data is replicated to RGB.
inline ColorImage load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6") throw IoError("'" + path + "': unsupported PNM type");

    const auto next_int = [&in, &path]() {
        // skip whitespace and '#' comment lines between header tokens
        int c = in.peek();
        while (c == '#' || std::isspace(c)) {
            if (c == '#') in.ignore(1 << 20, '\n');
            else in.get();
            c = in.peek();
        }
        int value = -1;
        in >> value;
        if (!in) throw IoError("'" + path + "': malformed PNM header");
        return value;
    };
    const int cols = next_int();
    const int rows = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw IoError("'" + path + "': only 8-bit PNM (maxval 255) is supported");
    in.get();  // single whitespace after the header

    const int channels = magic == "P6" ? 3 : 1;
    std::vector<uint8_t> raw(static_cast<size_t>(rows) * cols * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw IoError("'" + path + "': truncated PNM data");

    if (channels == 3) return color_from_rgb8(raw, rows, cols);
    ColorImage out(rows, cols);
    for (int i = 0; i < rows * cols; ++i) {
        const double v = raw[static_cast<size_t>(i)] / 255.0;
        out.r[i] = v;
        out.g[i] = v;
        out.b[i] = v;
    }
    return out;
}

}  // namespace detail

/// Loads an 8-bit PNG, PPM, or PGM file (detected by magic bytes) as an RGB
/// image with channels in [0, 1]; gray inputs come back with equal channels.
inline ColorImage load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open '" + path + "'");
    char magic[2] = {0, 0};
    probe.read(magic, 2);
    probe.close();
    if (magic[0] == '\x89' && magic[1] == 'P') return detail::load_png(path);
    if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) return detail::load_pnm(path);
    throw IoError("'" + path + "': not a PNG, PPM, or PGM file");
}

inline void save_png(const std::string& path, const ColorImage& img) {
    const int rows = img.rows(), cols = img.cols();
    std::vector<uint8_t> buffer(static_cast<size_t>(rows) * cols * 3);
    for (int i = 0; i < rows * cols; ++i) {
        buffer[static_cast<size_t>(i) * 3] = detail::to_byte(img.r[i]);
        buffer[static_cast<size_t>(i) * 3 + 1] = detail::to_byte(img.g[i]);
        buffer[static_cast<size_t>(i) * 3 + 2] = detail::to_byte(img.b[i]);
    }
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(cols);
    image.height = static_cast<png_uint_32>(rows);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
        throw IoError("failed to write PNG '" + path + "': " + image.message);
}

inline void save_png_gray(const std::string& path, const ScalarField& f) {
    const int rows = f.rows(), cols = f.cols();
    std::vector<uint8_t> buffer(static_cast<size_t>(rows) * cols);
    for (int i = 0; i < rows * cols; ++i) buffer[static_cast<size_t>(i)] = detail::to_byte(f[i]);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(cols);
    image.height = static_cast<png_uint_32>(rows);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
        throw IoError("failed to write PNG '" + path + "': " + image.message);
}

/// True when every pixel's channels agree within one 8-bit step; such inputs
/// are treated as already gray.
inline bool nearly_grayscale(const ColorImage& img) {
    const double tol = 1.0 / 255.0 + 1e-12;
    for (int i = 0; i < img.r.size(); ++i) {
        const double lo = std::min({img.r[i], img.g[i], img.b[i]});
        const double hi = std::max({img.r[i], img.g[i], img.b[i]});
        if (hi - lo > tol) return false;
    }
    return true;
}

/// Gray plane of a near-gray image (channel average).
inline ScalarField gray_plane(const ColorImage& img) {
    ScalarField out(img.rows(), img.cols());
    for (int i = 0; i < out.size(); ++i) out[i] = (img.r[i] + img.g[i] + img.b[i]) / 3.0;
    return out;
}

}  // namespace morphcolor
