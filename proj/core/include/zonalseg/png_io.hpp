#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace zonalseg {

struct Gray16Image {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint16_t> pixels;  // row-major
};

struct Gray8Image {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};

// 16-bit grayscale PNG, lossless; used for intensity images.
void write_png_gray16(const std::filesystem::path& path, const Gray16Image& img);
Gray16Image read_png_gray16(const std::filesystem::path& path);

// 8-bit grayscale PNG; used for label masks (0 background, 1 zone, 2 zone).
void write_png_gray8(const std::filesystem::path& path, const Gray8Image& img);
Gray8Image read_png_gray8(const std::filesystem::path& path);

}  // namespace zonalseg
