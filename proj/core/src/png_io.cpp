#include "zonalseg/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace zonalseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    throw std::runtime_error("cannot open " + path.string());
  }
  return f;
}

void write_gray(const std::filesystem::path& path, std::size_t rows,
                std::size_t cols, int bit_depth, const void* pixels,
                std::size_t bytes_per_pixel) {
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("write png: empty image for " + path.string());
  }
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng init failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng write failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows),
               bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // pixels are host little-endian

  const auto* base = static_cast<const unsigned char*>(pixels);
  for (std::size_t r = 0; r < rows; ++r) {
    png_write_row(png, const_cast<png_bytep>(base + r * cols * bytes_per_pixel));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void read_gray(const std::filesystem::path& path, std::size_t& rows,
               std::size_t& cols, int expect_depth, void* (*alloc)(void*, std::size_t),
               void* ctx, std::size_t bytes_per_pixel) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng init failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng read failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(png, info) != expect_depth) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path.string() + ": expected " +
                             std::to_string(expect_depth) + "-bit grayscale PNG");
  }
  if (expect_depth == 16) png_set_swap(png);
  cols = png_get_image_width(png, info);
  rows = png_get_image_height(png, info);
  auto* base = static_cast<unsigned char*>(alloc(ctx, rows * cols));
  for (std::size_t r = 0; r < rows; ++r) {
    png_read_row(png, base + r * cols * bytes_per_pixel, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

void write_png_gray16(const std::filesystem::path& path, const Gray16Image& img) {
  if (img.pixels.size() != img.rows * img.cols) {
    throw std::invalid_argument("write_png_gray16: pixel count mismatch");
  }
  write_gray(path, img.rows, img.cols, 16, img.pixels.data(), 2);
}

Gray16Image read_png_gray16(const std::filesystem::path& path) {
  Gray16Image img;
  read_gray(
      path, img.rows, img.cols, 16,
      [](void* ctx, std::size_t n) -> void* {
        auto* v = static_cast<std::vector<std::uint16_t>*>(ctx);
        v->resize(n);
        return v->data();
      },
      &img.pixels, 2);
  return img;
}

void write_png_gray8(const std::filesystem::path& path, const Gray8Image& img) {
  if (img.pixels.size() != img.rows * img.cols) {
    throw std::invalid_argument("write_png_gray8: pixel count mismatch");
  }
  write_gray(path, img.rows, img.cols, 8, img.pixels.data(), 1);
}

Gray8Image read_png_gray8(const std::filesystem::path& path) {
  Gray8Image img;
  read_gray(
      path, img.rows, img.cols, 8,
      [](void* ctx, std::size_t n) -> void* {
        auto* v = static_cast<std::vector<std::uint8_t>*>(ctx);
        v->resize(n);
        return v->data();
      },
      &img.pixels, 1);
  return img;
}

}  // namespace zonalseg
