#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "relit/error.hpp"

namespace relit {

// Row-major H x W x C raster. Sample (x, y, c) lives at ((y * W) + x) * C + c.
template <std::floating_point T>
class Image {
 public:
  using value_type = T;

  Image() = default;

  Image(int width, int height, int channels, T fill = T(0))
      : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0)
      throw ParameterError("image extent must be positive, got " + std::to_string(width) + "x" +
                           std::to_string(height));
    if (channels < 1 || channels > 4)
      throw ParameterError("image channel count must be in 1..4, got " + std::to_string(channels));
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  T& operator()(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

  std::span<T> pixel(int x, int y) noexcept {
    return {data_.data() + index(x, y), static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(int x, int y) const noexcept {
    return {data_.data() + index(x, y), static_cast<std::size_t>(channels_)};
  }

  std::span<T> samples() noexcept { return data_; }
  std::span<const T> samples() const noexcept { return data_; }

  bool same_extent(const Image& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_;
  }
  bool same_shape(const Image& o) const noexcept {
    return same_extent(o) && channels_ == o.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using ImagePlane = Image<double>;

// Per-pixel displacement (u, v) in pixels.
class FlowField : public ImagePlane {
 public:
  FlowField() = default;
  FlowField(int width, int height) : ImagePlane(width, height, 2) {}
  explicit FlowField(ImagePlane uv) : ImagePlane(std::move(uv)) {
    if (!empty() && channels() != 2)
      throw DataError("flow field needs 2 channels, got " + std::to_string(channels()));
  }

  double u(int x, int y) const noexcept { return (*this)(x, y, 0); }
  double v(int x, int y) const noexcept { return (*this)(x, y, 1); }
};

// Single-channel image whose samples are exactly 0.0 or 1.0.
class BinaryMask : public ImagePlane {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false)
      : ImagePlane(width, height, 1, fill ? 1.0 : 0.0) {}

  bool test(int x, int y) const noexcept { return (*this)(x, y) != 0.0; }
  void set(int x, int y, bool on) noexcept { (*this)(x, y) = on ? 1.0 : 0.0; }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (double s : samples()) n += s != 0.0;
    return n;
  }

  // 1 where img(x, y, channel) > threshold.
  static BinaryMask threshold(const ImagePlane& img, double threshold, int channel = 0) {
    BinaryMask m(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) m.set(x, y, img(x, y, channel) > threshold);
    return m;
  }
};

inline void require_same_extent(const ImagePlane& a, const ImagePlane& b, const char* what) {
  if (!a.same_extent(b))
    throw DataError(std::string(what) + ": size mismatch " + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                    std::to_string(b.height()));
}

inline void require_same_shape(const ImagePlane& a, const ImagePlane& b, const char* what) {
  require_same_extent(a, b, what);
  if (a.channels() != b.channels())
    throw DataError(std::string(what) + ": channel mismatch " + std::to_string(a.channels()) +
                    " vs " + std::to_string(b.channels()));
}

}  // namespace relit
