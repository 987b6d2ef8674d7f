#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cvquant/image.hpp"
#include "cvquant/rng.hpp"

namespace fixtures {

// Deterministic stand-in for a photographic benchmark image: layered smooth
// gradients, a few soft color blobs, and mild per-pixel noise. Thousands of
// distinct colors, spatially smooth, so median cut and the merger passes
// behave like they do on camera output.
inline cvquant::ImageBuffer photo_image(std::size_t width, std::size_t height, std::uint64_t seed) {
    cvquant::Rng rng(seed);

    struct Blob {
        double cx, cy, radius;
        double r, g, b;
    };
    std::vector<Blob> blobs;
    const int blob_count = rng.range(4, 7);
    for (int i = 0; i < blob_count; ++i) {
        Blob blob;
        blob.cx = rng.uniform(0.0, double(width));
        blob.cy = rng.uniform(0.0, double(height));
        blob.radius = rng.uniform(0.15, 0.45) * double(std::min(width, height));
        blob.r = rng.uniform(-80.0, 80.0);
        blob.g = rng.uniform(-80.0, 80.0);
        blob.b = rng.uniform(-80.0, 80.0);
        blobs.push_back(blob);
    }

    const double base_r = rng.uniform(70.0, 180.0);
    const double base_g = rng.uniform(70.0, 180.0);
    const double base_b = rng.uniform(70.0, 180.0);
    const double grad_rx = rng.uniform(-60.0, 60.0);
    const double grad_ry = rng.uniform(-60.0, 60.0);
    const double grad_gx = rng.uniform(-60.0, 60.0);
    const double grad_gy = rng.uniform(-60.0, 60.0);
    const double grad_bx = rng.uniform(-60.0, 60.0);
    const double grad_by = rng.uniform(-60.0, 60.0);
    const double wave = rng.uniform(6.0, 18.0);
    const double wave_freq = rng.uniform(2.0, 5.0);

    cvquant::ImageBuffer img(width, height);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = double(y) / double(height - 1);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = double(x) / double(width - 1);
            double r = base_r + grad_rx * fx + grad_ry * fy + wave * std::sin(wave_freq * 6.28318 * fx);
            double g = base_g + grad_gx * fx + grad_gy * fy + wave * std::sin(wave_freq * 6.28318 * fy);
            double b = base_b + grad_bx * fx + grad_by * fy;
            for (const auto& blob : blobs) {
                const double dx = (double(x) - blob.cx) / blob.radius;
                const double dy = (double(y) - blob.cy) / blob.radius;
                const double falloff = std::exp(-(dx * dx + dy * dy));
                r += blob.r * falloff;
                g += blob.g * falloff;
                b += blob.b * falloff;
            }
            r += rng.uniform(-2.5, 2.5);
            g += rng.uniform(-2.5, 2.5);
            b += rng.uniform(-2.5, 2.5);
            const auto clamp8 = [](double v) {
                return std::uint8_t(v < 0.0 ? 0 : v > 255.0 ? 255 : std::lround(v));
            };
            img.at(x, y) = cvquant::Rgb24{clamp8(r), clamp8(g), clamp8(b)};
        }
    }
    return img;
}

// Small image with an exact palette: pixel i gets colors[i % colors.size()],
// then the tail repeats the first color so counts differ.
inline cvquant::ImageBuffer paletted_image(std::size_t width, std::size_t height,
                                           const std::vector<cvquant::Rgb24>& colors) {
    cvquant::ImageBuffer img(width, height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels[i] = colors[i % colors.size()];
    }
    return img;
}

// Fresh directory under the system temp root, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag = "cvquant-test") {
        static std::atomic<unsigned> counter{0};
        const auto stamp =
            std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(static_cast<long long>(stamp)) + "-" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

}  // namespace fixtures
