#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "cvquant/quantize.hpp"
#include "cvquant/png_io.hpp"
#include "cvquant/rng.hpp"
#include "support/fixtures.hpp"

using cvquant::ImageBuffer;
using cvquant::Rgb24;

namespace {

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes an arbitrary PNG straight through libpng, for producing the input
// shapes the reader must cope with (or refuse).
void write_raw_png(const std::filesystem::path& path, png_uint_32 width, png_uint_32 height,
                   int bit_depth, int color_type, const std::vector<std::uint8_t>& samples) {
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    REQUIRE(fp != nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    REQUIRE(png != nullptr);
    png_infop info = png_create_info_struct(png);
    REQUIRE(info != nullptr);
    if (setjmp(png_jmpbuf(png)) != 0) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        FAIL("libpng failed while writing a fixture");
        return;
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    REQUIRE(samples.size() == rowbytes * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) {
        rows[y] = const_cast<png_bytep>(samples.data() + y * rowbytes);
    }
    png_write_image(png, rows.data());
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

// Pulls the PLTE chunk payload out of a PNG file by walking the chunk list.
std::vector<Rgb24> plte_of(const std::filesystem::path& path) {
    const auto bytes = file_bytes(path);
    REQUIRE(bytes.size() > 8);
    std::size_t pos = 8;  // past the signature
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = std::uint32_t(bytes[pos]) << 24 | std::uint32_t(bytes[pos + 1]) << 16 |
                                  std::uint32_t(bytes[pos + 2]) << 8 | std::uint32_t(bytes[pos + 3]);
        const std::string type(bytes.begin() + long(pos) + 4, bytes.begin() + long(pos) + 8);
        if (type == "PLTE") {
            REQUIRE(len % 3 == 0);
            std::vector<Rgb24> palette;
            for (std::uint32_t i = 0; i < len / 3; ++i) {
                const std::size_t at = pos + 8 + i * 3;
                palette.push_back(Rgb24{bytes[at], bytes[at + 1], bytes[at + 2]});
            }
            return palette;
        }
        pos += 8 + len + 4;  // header, payload, crc
    }
    FAIL("no PLTE chunk found");
    return {};
}

}  // namespace

TEST_CASE("indexed png round trips pixels exactly") {
    fixtures::TempDir dir;
    const auto path = dir.path() / "roundtrip.png";

    const auto img = cvquant::median_cut(fixtures::photo_image(60, 40, 3), 200);
    const auto report = cvquant::write_indexed_png(img, path);
    CHECK(report.bytes > 0);
    CHECK(report.palette_size <= 200);
    CHECK(report.encoder == cvquant::kPngEncoderSettings);

    const ImageBuffer back = cvquant::read_png(path);
    CHECK(back == img);
}

TEST_CASE("a single pixel survives") {
    fixtures::TempDir dir;
    const auto path = dir.path() / "one.png";
    ImageBuffer img(1, 1, Rgb24{255, 0, 0});
    const auto report = cvquant::write_indexed_png(img, path);
    CHECK(report.palette_size == 1);
    CHECK(cvquant::read_png(path) == img);
}

TEST_CASE("the palette chunk lists colors in first-occurrence order") {
    fixtures::TempDir dir;
    const auto path = dir.path() / "plte.png";
    const Rgb24 a{9, 9, 9}, b{1, 2, 3}, c{200, 100, 0};
    ImageBuffer img(5, 1);
    img.pixels = {c, a, c, b, a};
    cvquant::write_indexed_png(img, path);

    const auto palette = plte_of(path);
    REQUIRE(palette.size() == 3);
    CHECK(palette[0] == c);
    CHECK(palette[1] == a);
    CHECK(palette[2] == b);
}

TEST_CASE("writing more than 256 colors is refused") {
    ImageBuffer img(257, 1);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels[i] = Rgb24{std::uint8_t(i & 0xff), std::uint8_t(i >> 8), 0};
    }
    fixtures::TempDir dir;
    CHECK_THROWS_WITH(cvquant::write_indexed_png(img, dir.path() / "big.png"),
                      Catch::Matchers::ContainsSubstring("palette overflow"));

    CHECK_THROWS(cvquant::write_indexed_png(ImageBuffer{}, dir.path() / "empty.png"));
}

TEST_CASE("sixteen-bit input is refused") {
    fixtures::TempDir dir;
    const auto path = dir.path() / "deep.png";
    write_raw_png(path, 2, 1, 16, PNG_COLOR_TYPE_GRAY, {0x12, 0x34, 0xab, 0xcd});
    CHECK_THROWS_WITH(cvquant::read_png(path), Catch::Matchers::ContainsSubstring("bit depth 16"));
}

TEST_CASE("alpha is stripped with a warning") {
    fixtures::TempDir dir;
    const auto path = dir.path() / "rgba.png";
    write_raw_png(path, 2, 1, 8, PNG_COLOR_TYPE_RGB_ALPHA,
                  {10, 20, 30, 255, 40, 50, 60, 128});

    std::vector<std::string> warnings;
    const ImageBuffer img = cvquant::read_png(path, &warnings);
    REQUIRE(img.pixels.size() == 2);
    CHECK(img.pixels[0] == Rgb24{10, 20, 30});
    CHECK(img.pixels[1] == Rgb24{40, 50, 60});
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("alpha") != std::string::npos);
}

TEST_CASE("grayscale expands to rgb") {
    fixtures::TempDir dir;
    const auto path = dir.path() / "gray.png";
    write_raw_png(path, 3, 1, 8, PNG_COLOR_TYPE_GRAY, {0, 128, 255});
    const ImageBuffer img = cvquant::read_png(path);
    REQUIRE(img.pixels.size() == 3);
    CHECK(img.pixels[0] == Rgb24{0, 0, 0});
    CHECK(img.pixels[1] == Rgb24{128, 128, 128});
    CHECK(img.pixels[2] == Rgb24{255, 255, 255});
}

TEST_CASE("grayscale with alpha is refused") {
    fixtures::TempDir dir;
    const auto path = dir.path() / "graya.png";
    write_raw_png(path, 1, 1, 8, PNG_COLOR_TYPE_GRAY_ALPHA, {100, 200});
    CHECK_THROWS_WITH(cvquant::read_png(path),
                      Catch::Matchers::ContainsSubstring("grayscale+alpha"));
}

TEST_CASE("missing files fail with the path in the message") {
    CHECK_THROWS_WITH(cvquant::read_png("/nonexistent/nowhere.png"),
                      Catch::Matchers::ContainsSubstring("nowhere.png"));
}

TEST_CASE("measure reports size and distinct colors") {
    fixtures::TempDir dir;
    const auto path = dir.path() / "measured.png";
    ImageBuffer img(4, 2);
    img.pixels = {Rgb24{1, 1, 1}, Rgb24{2, 2, 2}, Rgb24{1, 1, 1}, Rgb24{3, 3, 3},
                  Rgb24{1, 1, 1}, Rgb24{2, 2, 2}, Rgb24{1, 1, 1}, Rgb24{3, 3, 3}};
    cvquant::write_indexed_png(img, path);

    const auto report = cvquant::measure(path);
    CHECK(report.palette_size == 3);
    CHECK(report.bytes == std::filesystem::file_size(path));

    CHECK_THROWS(cvquant::measure(dir.path() / "absent.png"));
}

TEST_CASE("the encoder is byte-for-byte deterministic") {
    fixtures::TempDir dir;
    const auto img = cvquant::median_cut(fixtures::photo_image(48, 32, 8), 64);
    const auto p1 = dir.path() / "a.png";
    const auto p2 = dir.path() / "b.png";
    cvquant::write_indexed_png(img, p1);
    cvquant::write_indexed_png(img, p2);
    CHECK(file_bytes(p1) == file_bytes(p2));
}
