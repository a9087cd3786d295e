#pragma once

#include <zlib.h>

#include <cstdint>
#include <string>

#include "mproj/io/framestack_io.hpp"
#include "mproj/util/errors.hpp"
#include "mproj/util/image.hpp"

namespace mproj::io {

/// Minimal 16-bit grayscale PNG writer (zlib-compressed, filter 0). Written
/// here rather than through an imaging library to keep exported bytes stable
/// across environments, which the manifest hashes rely on.
namespace detail {

inline void put_be32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

inline void put_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_be32(out, static_cast<uint32_t>(payload.size()));
    std::string body(type, 4);
    body += payload;
    out += body;
    put_be32(out, static_cast<uint32_t>(
                      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), body.size())));
}

}  // namespace detail

inline std::string encode_png16(const Image<uint16_t>& img) {
    std::string png = "\x89PNG\r\n\x1a\n";
    std::string ihdr;
    detail::put_be32(ihdr, static_cast<uint32_t>(img.width));
    detail::put_be32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(16);  // bit depth
    ihdr.push_back(0);   // grayscale
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    detail::put_chunk(png, "IHDR", ihdr);

    std::string scanlines;
    scanlines.reserve(static_cast<size_t>(img.height) * (1 + 2 * img.width));
    for (int y = 0; y < img.height; ++y) {
        scanlines.push_back(0);  // filter type 0
        for (int x = 0; x < img.width; ++x) {
            const uint16_t v = img(y, x);
            scanlines.push_back(static_cast<char>((v >> 8) & 0xff));  // big-endian samples
            scanlines.push_back(static_cast<char>(v & 0xff));
        }
    }
    uLongf bound = compressBound(scanlines.size());
    std::string compressed(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                  reinterpret_cast<const Bytef*>(scanlines.data()), scanlines.size(),
                  Z_BEST_COMPRESSION) != Z_OK)
        throw io_error("png: zlib compression failed");
    compressed.resize(bound);
    detail::put_chunk(png, "IDAT", compressed);
    detail::put_chunk(png, "IEND", "");
    return png;
}

inline void write_png16(const std::string& path, const Image<uint16_t>& img) {
    write_file_atomic(path, encode_png16(img));
}

/// Map a double image to 16-bit with a fixed peak (values clamp at peak).
inline Image<uint16_t> quantize16(const ImageD& img, double peak) {
    Image<uint16_t> out(img.height, img.width);
    for (size_t i = 0; i < img.data.size(); ++i) {
        const double v = peak > 0.0 ? std::clamp(img.data[i] / peak, 0.0, 1.0) : 0.0;
        out.data[i] = static_cast<uint16_t>(std::lround(v * 65535.0));
    }
    return out;
}

}  // namespace mproj::io
