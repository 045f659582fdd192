#pragma once

// PNG load/save and the resampling helpers used by dataset ingestion.
// Images are CHW float tensors with values in [0, 1].

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "graspkit/error.hpp"
#include "graspkit/tensor.hpp"

namespace graspkit {

using Image = Tensor<float>;

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

// Loads any PNG as 8-bit RGB (gray is replicated, alpha dropped).
inline Image load_png(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw io_error("cannot open image " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw format_error("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  std::vector<png_byte> buffer;
  png_uint_32 width = 0, height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw format_error("corrupt PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img({3, height, width});
  for (png_uint_32 y = 0; y < height; ++y)
    for (png_uint_32 x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) img(c, y, x) = float(rows[y][3 * x + c]) / 255.0f;
  return img;
}

// Writes an interleaved 8-bit RGB buffer.
inline void save_png_rgb8(const std::filesystem::path& path, std::size_t width, std::size_t height,
                          const std::vector<unsigned char>& rgb) {
  if (rgb.size() != width * height * 3) throw config_error("save_png: buffer size mismatch");
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw io_error("cannot write image " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw io_error("PNG encoding failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(rgb.data() + y * width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline void save_png(const std::filesystem::path& path, const Image& img) {
  if (img.rank() != 3 || (img.dim(0) != 3 && img.dim(0) != 1))
    throw config_error("save_png: expected 1- or 3-channel CHW image");
  const std::size_t h = img.dim(1), w = img.dim(2), c = img.dim(0);
  std::vector<unsigned char> rgb(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < 3; ++k) {
        const float v = img(c == 3 ? k : 0, y, x);
        rgb[(y * w + x) * 3 + k] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      }
  save_png_rgb8(path, w, h, rgb);
}

// Bilinear sample at continuous (x, y) with edge clamping.
inline float sample_bilinear(const Image& img, std::size_t c, double x, double y) {
  const int h = int(img.dim(1)), w = int(img.dim(2));
  x = std::clamp(x, 0.0, double(w - 1));
  y = std::clamp(y, 0.0, double(h - 1));
  const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = (1 - fx) * img(c, y0, x0) + fx * img(c, y0, x1);
  const double bot = (1 - fx) * img(c, y1, x0) + fx * img(c, y1, x1);
  return float((1 - fy) * top + fy * bot);
}

// Resizes with pixel-center alignment: output pixel j samples source
// coordinate (j + 0.5) * src / dst - 0.5.
inline Image resize(const Image& img, std::size_t out_h, std::size_t out_w) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (out_h == h && out_w == w) return img;
  Image out({c, out_h, out_w});
  const double sy = double(h) / double(out_h), sx = double(w) / double(out_w);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j)
        out(k, i, j) = sample_bilinear(img, k, (j + 0.5) * sx - 0.5, (i + 0.5) * sy - 0.5);
  return out;
}

inline Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  if (top + h > img.dim(1) || left + w > img.dim(2))
    throw domain_error("crop: window exceeds image bounds");
  Image out({img.dim(0), h, w});
  for (std::size_t k = 0; k < img.dim(0); ++k)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) out(k, i, j) = img(k, top + i, left + j);
  return out;
}

}  // namespace graspkit
