#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <string_view>

namespace cvquant {

// 24-bit sRGB color. The total order is lexicographic by (r, g, b); every
// score-based sort in the library breaks ties through it so results are
// reproducible across platforms.
struct Rgb24 {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend constexpr auto operator<=>(const Rgb24&, const Rgb24&) = default;
};

constexpr std::uint32_t pack_rgb(Rgb24 c) {
    return (std::uint32_t(c.r) << 16) | (std::uint32_t(c.g) << 8) | std::uint32_t(c.b);
}

constexpr Rgb24 unpack_rgb(std::uint32_t key) {
    return Rgb24{std::uint8_t(key >> 16), std::uint8_t(key >> 8), std::uint8_t(key)};
}

// CIE-LAB, D65 white point. L in [0, 100] for any Rgb24 input.
struct Lab {
    double L = 0.0;
    double a = 0.0;
    double b = 0.0;
};

namespace detail {

// sRGB <-> linear, IEC 61966-2-1 piecewise companding.
inline double srgb_to_linear(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double v) {
    return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

// sRGB (D65) <-> XYZ matrices, http://www.brucelindbloom.com/Eqn_RGB_XYZ_Matrix.html
inline constexpr std::array<double, 9> kSrgbToXyz = {
    0.4124564, 0.3575761, 0.1804375,
    0.2126729, 0.7151522, 0.0721750,
    0.0193339, 0.1191920, 0.9503041,
};
inline constexpr std::array<double, 9> kXyzToSrgb = {
     3.2404542, -1.5371385, -0.4985314,
    -0.9692660,  1.8760108,  0.0415560,
     0.0556434, -0.2040259,  1.0572252,
};
inline constexpr double kWhiteX = 0.95047;
inline constexpr double kWhiteY = 1.00000;
inline constexpr double kWhiteZ = 1.08883;

inline constexpr double kLabEps = 216.0 / 24389.0;
inline constexpr double kLabKappa = 24389.0 / 27.0;

inline double lab_f(double t) {
    return t > kLabEps ? std::cbrt(t) : (kLabKappa * t + 16.0) / 116.0;
}

inline std::uint8_t to_byte(double v) {
    return std::uint8_t(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace detail

inline Lab rgb_to_lab(Rgb24 c) {
    using namespace detail;
    const double r = srgb_to_linear(c.r / 255.0);
    const double g = srgb_to_linear(c.g / 255.0);
    const double b = srgb_to_linear(c.b / 255.0);

    const double x = kSrgbToXyz[0] * r + kSrgbToXyz[1] * g + kSrgbToXyz[2] * b;
    const double y = kSrgbToXyz[3] * r + kSrgbToXyz[4] * g + kSrgbToXyz[5] * b;
    const double z = kSrgbToXyz[6] * r + kSrgbToXyz[7] * g + kSrgbToXyz[8] * b;

    const double fx = lab_f(x / kWhiteX);
    const double fy = lab_f(y / kWhiteY);
    const double fz = lab_f(z / kWhiteZ);

    return Lab{116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

// Inverse conversion. Out-of-gamut results are clamped channelwise, so this
// is exact only for Lab values that came from an Rgb24 in the first place
// (round trips recover the source channels within +/-1 step).
inline Rgb24 lab_to_rgb(const Lab& lab) {
    using namespace detail;
    const double fy = (lab.L + 16.0) / 116.0;
    const double fx = fy + lab.a / 500.0;
    const double fz = fy - lab.b / 200.0;

    const double fx3 = fx * fx * fx;
    const double fz3 = fz * fz * fz;
    const double xr = fx3 > kLabEps ? fx3 : (116.0 * fx - 16.0) / kLabKappa;
    const double yr = lab.L > kLabKappa * kLabEps ? fy * fy * fy : lab.L / kLabKappa;
    const double zr = fz3 > kLabEps ? fz3 : (116.0 * fz - 16.0) / kLabKappa;

    const double x = xr * kWhiteX;
    const double y = yr * kWhiteY;
    const double z = zr * kWhiteZ;

    const double r = kXyzToSrgb[0] * x + kXyzToSrgb[1] * y + kXyzToSrgb[2] * z;
    const double g = kXyzToSrgb[3] * x + kXyzToSrgb[4] * y + kXyzToSrgb[5] * z;
    const double b = kXyzToSrgb[6] * x + kXyzToSrgb[7] * y + kXyzToSrgb[8] * z;

    return Rgb24{
        to_byte(255.0 * linear_to_srgb(std::clamp(r, 0.0, 1.0))),
        to_byte(255.0 * linear_to_srgb(std::clamp(g, 0.0, 1.0))),
        to_byte(255.0 * linear_to_srgb(std::clamp(b, 0.0, 1.0))),
    };
}

inline double lab_distance(const Lab& p, const Lab& q) {
    const double dL = p.L - q.L;
    const double da = p.a - q.a;
    const double db = p.b - q.b;
    return std::sqrt(dL * dL + da * da + db * db);
}

// Coarse hue family in the spirit of the ten Munsell principal/intermediate
// hues. The HSV hue angle is split into ten equal 36-degree arcs; achromatic
// colors (zero saturation) get the neutral sentinel, which compares unequal
// to every chromatic bucket.
struct HueBucket {
    static constexpr int kNeutral = 10;

    int index = kNeutral;

    constexpr bool chromatic() const { return index >= 0 && index < kNeutral; }

    constexpr std::string_view label() const {
        constexpr std::string_view names[] = {"R", "YR", "Y", "GY", "G", "BG", "B", "PB", "P", "RP", "N"};
        return names[index];
    }

    friend constexpr bool operator==(HueBucket, HueBucket) = default;
};

inline HueBucket hue_bucket(Rgb24 c) {
    const int hi = std::max({c.r, c.g, c.b});
    const int lo = std::min({c.r, c.g, c.b});
    if (hi == lo) return HueBucket{HueBucket::kNeutral};

    const double delta = double(hi - lo);
    double h = 0.0;
    if (hi == c.r)
        h = 60.0 * double(int(c.g) - int(c.b)) / delta;
    else if (hi == c.g)
        h = 60.0 * (double(int(c.b) - int(c.r)) / delta + 2.0);
    else
        h = 60.0 * (double(int(c.r) - int(c.g)) / delta + 4.0);
    if (h < 0.0) h += 360.0;

    return HueBucket{std::min(int(h / 36.0), 9)};
}

}  // namespace cvquant
