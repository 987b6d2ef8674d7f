#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "cvquant/color.hpp"

namespace cvquant {

// Row-major grid of 24-bit pixels.
struct ImageBuffer {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Rgb24> pixels;

    ImageBuffer() = default;
    ImageBuffer(std::size_t w, std::size_t h, Rgb24 fill = {0, 0, 0})
        : width(w), height(h), pixels(w * h, fill) {}

    std::size_t pixel_count() const { return width * height; }
    bool empty() const { return pixels.empty(); }

    Rgb24& at(std::size_t x, std::size_t y) {
        if (x >= width || y >= height) throw std::out_of_range("ImageBuffer::at");
        return pixels[y * width + x];
    }
    const Rgb24& at(std::size_t x, std::size_t y) const {
        if (x >= width || y >= height) throw std::out_of_range("ImageBuffer::at");
        return pixels[y * width + x];
    }

    bool operator==(const ImageBuffer& o) const {
        return width == o.width && height == o.height && pixels == o.pixels;
    }
};

}  // namespace cvquant
