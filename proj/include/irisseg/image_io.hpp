#pragma once

// 8-bit grayscale PNG / binary PGM (P5) reading and writing, plus the mask
// decoding rule used for ground-truth and prediction files.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "grid.hpp"
#include "mask.hpp"

namespace irisseg {

using Gray8 = Grid<std::uint8_t>;

namespace detail {

inline std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

// Skips whitespace and '#' comments between PNM header tokens.
inline void pnm_skip(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

inline Gray8 read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require_data(static_cast<bool>(in), "cannot open " + path.string());
    std::string magic;
    in >> magic;
    require_data(magic == "P5", path.string() + ": not a binary PGM (P5) file");
    std::size_t width = 0, height = 0, maxval = 0;
    pnm_skip(in);
    in >> width;
    pnm_skip(in);
    in >> height;
    pnm_skip(in);
    in >> maxval;
    require_data(static_cast<bool>(in), path.string() + ": malformed PGM header");
    require_data(width > 0 && height > 0, path.string() + ": zero image dimensions");
    require_data(maxval > 0 && maxval <= 255, path.string() + ": only 8-bit PGM is supported");
    in.get();  // single whitespace before raster
    Gray8 img(height, width);
    in.read(reinterpret_cast<char*>(img.values().data()), static_cast<std::streamsize>(img.size()));
    require_data(static_cast<std::size_t>(in.gcount()) == img.size(), path.string() + ": truncated PGM raster");
    return img;
}

inline void write_pgm(const std::filesystem::path& path, const Gray8& img) {
    std::ofstream out(path, std::ios::binary);
    require_data(static_cast<bool>(out), "cannot write " + path.string());
    out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.values().data()), static_cast<std::streamsize>(img.size()));
    require_data(static_cast<bool>(out), "write failed: " + path.string());
}

inline Gray8 read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw DataError(path.string() + ": " + image.message);
    if (image.format & PNG_FORMAT_FLAG_COLOR) {
        png_image_free(&image);
        throw DataError(path.string() + ": expected a single-channel grayscale PNG");
    }
    if (image.width == 0 || image.height == 0) {
        png_image_free(&image);
        throw DataError(path.string() + ": zero image dimensions");
    }
    image.format = PNG_FORMAT_GRAY;
    Gray8 img(image.height, image.width);
    if (!png_image_finish_read(&image, nullptr, img.values().data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw DataError(path.string() + ": " + msg);
    }
    return img;
}

inline void write_png(const std::filesystem::path& path, const Gray8& img) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.values().data(), 0, nullptr))
        throw DataError(path.string() + ": " + image.message);
}

}  // namespace detail

inline bool is_supported_image(const std::filesystem::path& path) {
    const auto ext = detail::lower_extension(path);
    return ext == ".png" || ext == ".pgm";
}

/// Reads an 8-bit grayscale raster; the format is chosen by extension.
inline Gray8 read_gray8(const std::filesystem::path& path) {
    const auto ext = detail::lower_extension(path);
    if (ext == ".png") return detail::read_png(path);
    if (ext == ".pgm") return detail::read_pgm(path);
    throw DataError(path.string() + ": unsupported image format (use .png or .pgm)");
}

inline void write_gray8(const std::filesystem::path& path, const Gray8& img) {
    detail::require_data(!img.empty(), "refusing to write an empty image");
    const auto ext = detail::lower_extension(path);
    if (ext == ".png") return detail::write_png(path, img);
    if (ext == ".pgm") return detail::write_pgm(path, img);
    throw DataError(path.string() + ": unsupported image format (use .png or .pgm)");
}

/// Maps raw 8-bit pixel values to class labels.
///
/// A raster whose values are all in [0, N) is taken as already label-coded
/// (this covers 0/1 binary masks). Otherwise the binary rule applies: 0 is
/// background and any value >= 128 is iris. Values in 1..127 are rejected in
/// strict mode and read as background otherwise.
inline LabelMask decode_mask(const Gray8& raw, const ClassSpec& spec, bool strict = true) {
    spec.validate();
    detail::require_data(raw.height() > 0 && raw.width() > 0, "mask has zero dimensions");
    const bool label_coded =
        std::all_of(raw.values().begin(), raw.values().end(), [&](std::uint8_t v) { return v < spec.num_classes; });
    LabelMask mask(raw.height(), raw.width());
    if (label_coded) {
        std::copy(raw.values().begin(), raw.values().end(), mask.values().begin());
        return mask;
    }
    detail::require_data(spec.num_classes == 2, "non label-coded masks are only supported for binary class specs");
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::uint8_t v = raw[i];
        if (v == 0) {
            mask[i] = kBackground;
        } else if (v >= 128) {
            mask[i] = kIris;
        } else {
            if (strict) throw DataError("unmappable pixel value " + std::to_string(v));
            mask[i] = kBackground;
        }
    }
    return mask;
}

inline LabelMask load_mask(const std::filesystem::path& path, const ClassSpec& spec, bool strict = true) {
    try {
        return decode_mask(read_gray8(path), spec, strict);
    } catch (const DataError& e) {
        const std::string what = e.what();
        if (what.find(path.string()) != std::string::npos) throw;
        throw DataError(path.string() + ": " + what);
    }
}

/// Writes labels spread over 0..255 (binary masks become 0/255).
inline void save_mask(const std::filesystem::path& path, const LabelMask& mask, const ClassSpec& spec = {}) {
    Gray8 raw(mask.height(), mask.width());
    const std::size_t step = 255 / (spec.num_classes - 1);
    for (std::size_t i = 0; i < mask.size(); ++i) raw[i] = static_cast<std::uint8_t>(mask[i] * step);
    write_gray8(path, raw);
}

template <class T>
Gray8 quantize(const Image<T>& img) {
    Gray8 raw(img.height(), img.width());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp(static_cast<double>(img[i]), 0.0, 1.0);
        raw[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return raw;
}

template <class T = double>
Image<T> load_image(const std::filesystem::path& path) {
    const Gray8 raw = read_gray8(path);
    Image<T> img(raw.height(), raw.width());
    for (std::size_t i = 0; i < raw.size(); ++i) img[i] = static_cast<T>(raw[i]) / T(255);
    return img;
}

template <class T>
void save_image(const std::filesystem::path& path, const Image<T>& img) {
    write_gray8(path, quantize(img));
}

}  // namespace irisseg
