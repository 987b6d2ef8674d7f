#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include "cvquant/quantize.hpp"

namespace cvquant {

// Sidecar file layout, all integers little-endian:
//   "DQDM"  magic
//   u16     version, currently 1
//   u32     width
//   u32     height
//   u32     entry count
//   entries: u8 r, u8 g, u8 b, u32 index count, then that many u32
//            row-major pixel offsets, strictly ascending
//   u32     CRC32 (zlib polynomial) of every preceding byte
inline constexpr char kSidecarMagic[4] = {'D', 'Q', 'D', 'M'};
inline constexpr std::uint16_t kSidecarVersion = 1;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v & 0xff));
    out.push_back(std::uint8_t(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v & 0xff));
    out.push_back(std::uint8_t((v >> 8) & 0xff));
    out.push_back(std::uint8_t((v >> 16) & 0xff));
    out.push_back(std::uint8_t((v >> 24) & 0xff));
}

struct ByteReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > size) throw std::runtime_error("corrupt sidecar: truncated file");
    }
    std::uint8_t u8() {
        need(1);
        return data[pos++];
    }
    std::uint16_t u16() {
        need(2);
        const std::uint16_t v = std::uint16_t(data[pos]) | std::uint16_t(data[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        const std::uint32_t v = std::uint32_t(data[pos]) | std::uint32_t(data[pos + 1]) << 8 |
                                std::uint32_t(data[pos + 2]) << 16 | std::uint32_t(data[pos + 3]) << 24;
        pos += 4;
        return v;
    }
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
    return std::uint32_t(::crc32(::crc32(0UL, nullptr, 0), data, uInt(size)));
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_sidecar(const DequantSidecar& s) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kSidecarMagic, kSidecarMagic + 4);
    detail::put_u16(out, kSidecarVersion);
    detail::put_u32(out, s.width);
    detail::put_u32(out, s.height);
    detail::put_u32(out, std::uint32_t(s.entries.size()));
    for (const auto& [color, indices] : s.entries) {
        out.push_back(color.r);
        out.push_back(color.g);
        out.push_back(color.b);
        detail::put_u32(out, std::uint32_t(indices.size()));
        for (const std::uint32_t idx : indices) detail::put_u32(out, idx);
    }
    detail::put_u32(out, detail::crc32_of(out.data(), out.size()));
    return out;
}

inline DequantSidecar decode_sidecar(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 22) throw std::runtime_error("corrupt sidecar: truncated file");

    const std::uint32_t stored_crc = std::uint32_t(bytes[bytes.size() - 4]) |
                                     std::uint32_t(bytes[bytes.size() - 3]) << 8 |
                                     std::uint32_t(bytes[bytes.size() - 2]) << 16 |
                                     std::uint32_t(bytes[bytes.size() - 1]) << 24;
    if (detail::crc32_of(bytes.data(), bytes.size() - 4) != stored_crc) {
        throw std::runtime_error("corrupt sidecar: CRC mismatch");
    }

    detail::ByteReader in{bytes.data(), bytes.size() - 4};
    for (char m : kSidecarMagic) {
        if (in.u8() != std::uint8_t(m)) throw std::runtime_error("corrupt sidecar: bad magic");
    }
    const std::uint16_t version = in.u16();
    if (version != kSidecarVersion) {
        throw std::runtime_error("corrupt sidecar: unsupported version " + std::to_string(version));
    }

    DequantSidecar s;
    s.width = in.u32();
    s.height = in.u32();
    const std::uint64_t pixel_count = std::uint64_t(s.width) * s.height;
    const std::uint32_t entry_count = in.u32();

    std::vector<bool> seen(pixel_count, false);
    s.entries.reserve(entry_count);
    for (std::uint32_t e = 0; e < entry_count; ++e) {
        Rgb24 color;
        color.r = in.u8();
        color.g = in.u8();
        color.b = in.u8();
        const std::uint32_t index_count = in.u32();
        std::vector<std::uint32_t> indices;
        indices.reserve(index_count);
        for (std::uint32_t i = 0; i < index_count; ++i) {
            const std::uint32_t idx = in.u32();
            if (idx >= pixel_count) throw std::runtime_error("corrupt sidecar: pixel index out of range");
            if (!indices.empty() && idx <= indices.back()) {
                throw std::runtime_error("corrupt sidecar: indices not strictly ascending");
            }
            if (seen[idx]) throw std::runtime_error("corrupt sidecar: duplicate pixel index");
            seen[idx] = true;
            indices.push_back(idx);
        }
        s.entries.emplace_back(color, std::move(indices));
    }
    if (in.pos != in.size) throw std::runtime_error("corrupt sidecar: trailing bytes");
    return s;
}

inline void save_sidecar(const std::filesystem::path& path, const DequantSidecar& s) {
    const auto bytes = encode_sidecar(s);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("sidecar: cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("sidecar: write to " + path.string() + " failed");
}

inline DequantSidecar load_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("sidecar: cannot open " + path.string());
    const std::size_t size = std::size_t(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(size));
    if (!in) throw std::runtime_error("sidecar: read from " + path.string() + " failed");
    return decode_sidecar(bytes);
}

}  // namespace cvquant
