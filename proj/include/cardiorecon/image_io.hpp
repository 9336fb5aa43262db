#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cardiorecon/errors.hpp"

namespace cardiorecon {

/// Row-major 8-bit RGB raster. Pixel (x, y) has y counting down from the top
/// row, matching screen orientation when written to disk.
class ImageRGB {
public:
    ImageRGB(int width, int height);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
    std::array<std::uint8_t, 3> get(int x, int y) const;

    const std::vector<std::uint8_t>& pixels() const noexcept { return pixels_; }

private:
    std::size_t offset(int x, int y) const;

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;  // 3 bytes per pixel
};

/// Writes an 8-bit RGB PNG. Output bytes are a pure function of the pixels.
void write_png(const ImageRGB& image, const std::filesystem::path& path);

/// "Hot" colormap over [0, 1] (black -> red -> yellow -> white); inputs are
/// clamped to the valid range.
std::array<std::uint8_t, 3> hot_colormap(double v);

}  // namespace cardiorecon
