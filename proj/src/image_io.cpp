#include "cardiorecon/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

namespace cardiorecon {

ImageRGB::ImageRGB(int width, int height) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw ShapeError("image dimensions must be positive");
    pixels_.assign(static_cast<std::size_t>(width) * height * 3, 0);
}

std::size_t ImageRGB::offset(int x, int y) const {
    if (x < 0 || x >= width_ || y < 0 || y >= height_) {
        throw ShapeError("pixel coordinates out of bounds");
    }
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
}

void ImageRGB::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const std::size_t o = offset(x, y);
    pixels_[o] = r;
    pixels_[o + 1] = g;
    pixels_[o + 2] = b;
}

std::array<std::uint8_t, 3> ImageRGB::get(int x, int y) const {
    const std::size_t o = offset(x, y);
    return {pixels_[o], pixels_[o + 1], pixels_[o + 2]};
}

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const auto crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png(const ImageRGB& image, const std::filesystem::path& path) {
    const int w = image.width();
    const int h = image.height();

    // raw scanlines, one leading filter byte (0 = none) per row
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(h) * (1 + static_cast<std::size_t>(w) * 3));
    const auto& px = image.pixels();
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        const std::uint8_t* row = px.data() + static_cast<std::size_t>(y) * w * 3;
        raw.insert(raw.end(), row, row + static_cast<std::size_t>(w) * 3);
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> deflated(bound);
    if (compress2(deflated.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
        throw FileError("png compression failed");
    }
    deflated.resize(bound);

    std::vector<std::uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(w));
    put_u32_be(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // interlace

    std::vector<std::uint8_t> file = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    append_chunk(file, "IHDR", ihdr);
    append_chunk(file, "IDAT", deflated);
    append_chunk(file, "IEND", {});

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    if (!out) throw FileError("short write: " + path.string());
}

std::array<std::uint8_t, 3> hot_colormap(double v) {
    v = std::clamp(v, 0.0, 1.0);
    const auto channel = [](double c) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
    };
    return {channel(3.0 * v), channel(3.0 * v - 1.0), channel(3.0 * v - 2.0)};
}

}  // namespace cardiorecon
