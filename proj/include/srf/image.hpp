#pragma once

// 8-bit RGB images with PNG I/O (libpng). Linear [0,1] maps to bytes via
// round(255 * x) at export; loading divides by 255.

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "srf/tensor.hpp"

namespace srf {

struct Image8 {
  size_t width = 0, height = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

  uint8_t* pixel(size_t x, size_t y) { return rgb.data() + (y * width + x) * 3; }
  const uint8_t* pixel(size_t x, size_t y) const { return rgb.data() + (y * width + x) * 3; }
};

inline uint8_t quantize_channel(double v) {
  if (v <= 0.0) return 0;
  if (v >= 1.0) return 255;
  return static_cast<uint8_t>(std::lround(255.0 * v));
}

// [3,H,W] tensor in [0,1] -> 8-bit image.
template <class T>
Image8 tensor_to_image(const Tensor<T>& t) {
  if (t.shape().size() != 3 || t.shape()[0] != 3) {
    throw std::invalid_argument("tensor_to_image: expected [3,H,W], got " + shape_str(t.shape()));
  }
  Image8 img;
  img.height = t.shape()[1];
  img.width = t.shape()[2];
  img.rgb.resize(img.width * img.height * 3);
  size_t plane = img.width * img.height;
  for (size_t p = 0; p < plane; ++p) {
    for (size_t c = 0; c < 3; ++c) {
      img.rgb[p * 3 + c] = quantize_channel(static_cast<double>(t.value()[c * plane + p]));
    }
  }
  return img;
}

template <class T>
Tensor<T> image_to_tensor(const Image8& img) {
  size_t plane = img.width * img.height;
  std::vector<T> data(3 * plane);
  for (size_t p = 0; p < plane; ++p) {
    for (size_t c = 0; c < 3; ++c) {
      data[c * plane + p] = static_cast<T>(img.rgb[p * 3 + c]) / T(255);
    }
  }
  return Tensor<T>::from_data({3, img.height, img.width}, std::move(data));
}

inline void save_png(const std::string& path, const Image8& img) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open PNG for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw std::runtime_error("PNG write failure: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (size_t y = 0; y < img.height; ++y) {
    rows[y] = const_cast<png_bytep>(img.rgb.data() + y * img.width * 3);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Image8 load_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("PNG not found: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw std::runtime_error("corrupt PNG: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  // Normalize any input to 8-bit RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);
  Image8 img;
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.rgb.resize(img.width * img.height * 3);
  std::vector<png_bytep> rows(img.height);
  for (size_t y = 0; y < img.height; ++y) rows[y] = img.rgb.data() + y * img.width * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

}  // namespace srf
