#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "relit/image.hpp"

namespace relit::mapio {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngErrorSink {
  char message[256] = {};
};

inline void relit_png_error(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png));
  std::snprintf(sink->message, sizeof sink->message, "%s", msg);
  png_longjmp(png, 1);
}

inline void relit_png_warning(png_structp, png_const_charp) {}

struct PngHeader {
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0;
};

// The functions below hold only trivially destructible locals so that
// longjmp out of libpng never skips a destructor.
inline bool png_read_header(png_structp png, png_infop info, std::FILE* f, PngHeader* h) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_read_info(png, info);
  png_get_IHDR(png, info, &h->width, &h->height, &h->bit_depth, &h->color_type, nullptr, nullptr,
               nullptr);
  return true;
}

inline bool png_read_rows(png_structp png, png_infop info, png_bytepp rows, int bit_depth) {
  if (setjmp(png_jmpbuf(png))) return false;
  if (bit_depth == 16) png_set_swap(png);
  png_read_image(png, rows);
  png_read_end(png, info);
  return true;
}

inline bool png_write_all(png_structp png, png_infop info, std::FILE* f, png_uint_32 w,
                          png_uint_32 h, int depth, int color, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_IHDR(png, info, w, h, depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (depth == 16) png_set_swap(png);
  png_write_image(png, rows);
  png_write_end(png, info);
  return true;
}

inline int png_channels(int color_type) {
  switch (color_type) {
    case PNG_COLOR_TYPE_GRAY:
      return 1;
    case PNG_COLOR_TYPE_GRAY_ALPHA:
      return 2;
    case PNG_COLOR_TYPE_RGB:
      return 3;
    case PNG_COLOR_TYPE_RGB_ALPHA:
      return 4;
    default:
      return 0;
  }
}

}  // namespace detail

// 8- or 16-bit grayscale/RGB(A) PNG; samples normalized to [0, 1] without any
// transfer-function conversion.
inline ImagePlane read_png(const std::filesystem::path& path) {
  detail::FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open " + path.string());
  detail::PngErrorSink sink;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, detail::relit_png_error,
                                           detail::relit_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  if (!info) throw Error("libpng allocation failed");

  detail::PngHeader h;
  if (!detail::png_read_header(png, info, f.get(), &h))
    throw DataError(path.string() + ": " + sink.message);
  const int channels = detail::png_channels(h.color_type);
  if (channels == 0 || (h.bit_depth != 8 && h.bit_depth != 16))
    throw DataError(path.string() + ": unsupported PNG (bit depth " + std::to_string(h.bit_depth) +
                    ", color type " + std::to_string(h.color_type) + ")");

  const std::size_t bytes_per_sample = h.bit_depth / 8;
  const std::size_t stride = std::size_t(h.width) * channels * bytes_per_sample;
  std::vector<png_byte> buffer(stride * h.height);
  std::vector<png_bytep> rows(h.height);
  for (png_uint_32 y = 0; y < h.height; ++y) rows[y] = buffer.data() + y * stride;
  if (!detail::png_read_rows(png, info, rows.data(), h.bit_depth))
    throw DataError(path.string() + ": " + sink.message);

  ImagePlane img(static_cast<int>(h.width), static_cast<int>(h.height), channels);
  auto s = img.samples();
  if (h.bit_depth == 8) {
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = buffer[i] / 255.0;
  } else {
    const auto* p16 = reinterpret_cast<const std::uint16_t*>(buffer.data());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = p16[i] / 65535.0;
  }
  return img;
}

// Clamps to [0, 1] and quantizes with round-to-nearest.
inline void write_png(const ImagePlane& img, const std::filesystem::path& path, int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16)
    throw ParameterError("PNG bit depth must be 8 or 16, got " + std::to_string(bit_depth));
  static constexpr int kColor[] = {0, PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA,
                                   PNG_COLOR_TYPE_RGB, PNG_COLOR_TYPE_RGB_ALPHA};
  const double maxv = bit_depth == 8 ? 255.0 : 65535.0;
  const std::size_t bps = bit_depth / 8;
  const std::size_t stride = std::size_t(img.width()) * img.channels() * bps;
  std::vector<png_byte> buffer(stride * img.height());
  auto s = img.samples();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(s[i], 0.0, 1.0) * maxv));
    if (bit_depth == 8)
      buffer[i] = static_cast<png_byte>(q);
    else
      reinterpret_cast<std::uint16_t*>(buffer.data())[i] = q;
  }
  std::vector<png_bytep> rows(img.height());
  for (int y = 0; y < img.height(); ++y) rows[y] = buffer.data() + y * stride;

  detail::FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot write " + path.string());
  detail::PngErrorSink sink;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, detail::relit_png_error,
                                            detail::relit_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (!info) throw Error("libpng allocation failed");
  if (!detail::png_write_all(png, info, f.get(), img.width(), img.height(), bit_depth,
                             kColor[img.channels()], rows.data()))
    throw DataError(path.string() + ": " + sink.message);
}

// sRGB transfer function, applied per sample.
inline double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

}  // namespace relit::mapio
