#pragma once

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <png.h>

#include "cvquant/image.hpp"

namespace cvquant {

struct SizeReport {
    std::string path;
    std::uintmax_t bytes = 0;
    std::size_t palette_size = 0;
    std::string encoder;  // pinned settings used to produce the file, if written here
};

inline constexpr const char* kPngEncoderSettings = "libpng,zlib-level=9,filter=none";

namespace detail {

// libpng reports errors by longjmp; the message is stashed here so the
// cleanup branch can rethrow it. thread_local keeps it off the stack, which
// setjmp rules would otherwise make indeterminate.
inline thread_local std::string png_error_message;

inline void on_png_error(png_structp png, png_const_charp msg) {
    png_error_message = msg ? msg : "unknown libpng error";
    png_longjmp(png, 1);
}

inline void on_png_warning(png_structp, png_const_charp) {}

inline const char* color_type_name(int ctype) {
    switch (ctype) {
        case PNG_COLOR_TYPE_GRAY: return "grayscale";
        case PNG_COLOR_TYPE_GRAY_ALPHA: return "grayscale+alpha";
        case PNG_COLOR_TYPE_PALETTE: return "indexed";
        case PNG_COLOR_TYPE_RGB: return "truecolor";
        case PNG_COLOR_TYPE_RGB_ALPHA: return "truecolor+alpha";
        default: return "unknown";
    }
}

}  // namespace detail

inline ImageBuffer read_png(const std::filesystem::path& path,
                            std::vector<std::string>* warnings = nullptr) {
    FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw std::runtime_error("png: cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::on_png_error,
                                             detail::on_png_warning);
    if (!png) {
        std::fclose(fp);
        throw std::runtime_error("png: failed to allocate read state");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        std::fclose(fp);
        throw std::runtime_error("png: failed to allocate info state");
    }

    // Only volatile-qualified locals may be both written after setjmp and
    // read in the longjmp branch.
    png_byte* volatile data = nullptr;
    png_bytep* volatile rows = nullptr;
    if (setjmp(png_jmpbuf(png))) {
        std::free(rows);
        std::free(data);
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("png: " + path.string() + ": " + detail::png_error_message);
    }

    png_init_io(png, fp);
    png_read_info(png, info);
    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int ctype = png_get_color_type(png, info);

    const auto fail = [&](const std::string& msg) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("png: " + path.string() + ": " + msg);
    };
    if (depth == 16) fail("unsupported bit depth 16 (only 8-bit and lower are handled)");

    bool dropped_alpha = false;
    switch (ctype) {
        case PNG_COLOR_TYPE_PALETTE:
            png_set_palette_to_rgb(png);
            break;
        case PNG_COLOR_TYPE_GRAY:
            if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
            png_set_gray_to_rgb(png);
            break;
        case PNG_COLOR_TYPE_RGB:
            break;
        case PNG_COLOR_TYPE_RGB_ALPHA:
            png_set_strip_alpha(png);
            dropped_alpha = true;
            break;
        default:
            fail(std::string("unsupported PNG color type ") + detail::color_type_name(ctype) + " (" +
                 std::to_string(ctype) + ")");
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_strip_alpha(png);
        dropped_alpha = true;
    }

    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != std::size_t(width) * 3) fail("decoder did not produce 3 channels per pixel");

    data = static_cast<png_byte*>(std::malloc(std::size_t(height) * rowbytes));
    rows = static_cast<png_bytep*>(std::malloc(height * sizeof(png_bytep)));
    if (!data || !rows) {
        std::free(rows);
        std::free(data);
        fail("out of memory decoding image");
    }
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = data + std::size_t(y) * rowbytes;
    png_read_image(png, rows);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    ImageBuffer img(width, height);
    const png_byte* src = data;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels[i] = Rgb24{src[i * 3], src[i * 3 + 1], src[i * 3 + 2]};
    }
    std::free(rows);
    std::free(data);

    if (dropped_alpha && warnings) {
        warnings->push_back("png: " + path.string() + ": alpha channel dropped");
    }
    return img;
}

// Writes an 8-bit indexed PNG whose PLTE lists the distinct colors in
// first-occurrence scan order. Compression settings are pinned (zlib level
// 9, no row filtering) so identical pixels always give identical bytes.
inline SizeReport write_indexed_png(const ImageBuffer& img, const std::filesystem::path& path) {
    if (img.empty()) throw std::invalid_argument("png: cannot write an empty image");

    std::vector<png_color> palette;
    std::unordered_map<std::uint32_t, std::uint8_t> index_of;
    std::vector<png_byte> indexed(img.pixel_count());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const Rgb24 c = img.pixels[i];
        auto [it, inserted] = index_of.try_emplace(pack_rgb(c), std::uint8_t(palette.size()));
        if (inserted) {
            if (palette.size() == 256) {
                throw std::invalid_argument("png: palette overflow (more than 256 distinct colors)");
            }
            palette.push_back(png_color{c.r, c.g, c.b});
        }
        indexed[i] = it->second;
    }

    std::vector<png_bytep> rows(img.height);
    for (std::size_t y = 0; y < img.height; ++y) rows[y] = indexed.data() + y * img.width;

    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw std::runtime_error("png: cannot open " + path.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::on_png_error,
                                              detail::on_png_warning);
    if (!png) {
        std::fclose(fp);
        throw std::runtime_error("png: failed to allocate write state");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        std::fclose(fp);
        throw std::runtime_error("png: failed to allocate info state");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("png: " + path.string() + ": " + detail::png_error_message);
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_PLTE(png, info, palette.data(), int(palette.size()));
    png_set_compression_level(png, 9);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);

    SizeReport report;
    report.path = path.string();
    report.bytes = std::filesystem::file_size(path);
    report.palette_size = palette.size();
    report.encoder = kPngEncoderSettings;
    return report;
}

inline SizeReport measure(const std::filesystem::path& path) {
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(path, ec);
    if (ec) throw std::runtime_error("measure: " + path.string() + ": " + ec.message());

    const ImageBuffer img = read_png(path);
    std::unordered_map<std::uint32_t, bool> seen;
    for (const Rgb24& p : img.pixels) seen.emplace(pack_rgb(p), true);

    SizeReport report;
    report.path = path.string();
    report.bytes = bytes;
    report.palette_size = seen.size();
    return report;
}

}  // namespace cvquant
