#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "relit/image.hpp"
#include "relit/raster.hpp"

namespace relit::metrics {

// Returned by PSNR-style metrics when the compared images are identical.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

inline double psnr_from_mse(double mse, double peak) {
  if (mse == 0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

inline double mse(const ImagePlane& a, const ImagePlane& b, const BinaryMask* mask = nullptr) {
  require_same_shape(a, b, "mse");
  if (mask) require_same_extent(a, *mask, "mse mask");
  double sum = 0;
  std::size_t n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (mask && !mask->test(x, y)) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = a(x, y, c) - b(x, y, c);
        sum += d * d;
      }
      n += a.channels();
    }
  if (n == 0) throw DataError("mse: empty mask");
  return sum / n;
}

inline double psnr(const ImagePlane& a, const ImagePlane& b, double peak = 1.0) {
  if (!(peak > 0)) throw ParameterError("psnr: peak must be > 0");
  return psnr_from_mse(mse(a, b), peak);
}

// PSNR restricted to the pixels set in mask.
inline double psnr(const ImagePlane& a, const ImagePlane& b, const BinaryMask& mask,
                   double peak = 1.0) {
  if (!(peak > 0)) throw ParameterError("psnr: peak must be > 0");
  return psnr_from_mse(mse(a, b, &mask), peak);
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    const double d = i - (size - 1) / 2.0;
    k[i] = std::exp(-d * d / (2 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// 'valid' separable filtering of one channel: output is (w - n + 1) x (h - n + 1).
inline std::vector<double> filter_valid(const std::vector<double>& img, int w, int h,
                                        const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h), out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace detail

// Mean SSIM with a Gaussian window over the fully covered ('valid') region,
// averaged over channels.
inline double ssim(const ImagePlane& a, const ImagePlane& b, const SsimParams& p = {}) {
  require_same_shape(a, b, "ssim");
  if (a.width() < p.window || a.height() < p.window)
    throw DataError("ssim: images smaller than the " + std::to_string(p.window) + "px window");
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const auto k = detail::gaussian_kernel(p.window, p.sigma);
  const int w = a.width(), h = a.height();
  const std::size_t n = a.pixel_count();
  double total = 0;
  for (int c = 0; c < a.channels(); ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        const std::size_t i = static_cast<std::size_t>(py) * w + px;
        x[i] = a(px, py, c), y[i] = b(px, py, c);
        xx[i] = x[i] * x[i], yy[i] = y[i] * y[i], xy[i] = x[i] * y[i];
      }
    const auto mx = detail::filter_valid(x, w, h, k), my = detail::filter_valid(y, w, h, k);
    const auto sxx = detail::filter_valid(xx, w, h, k), syy = detail::filter_valid(yy, w, h, k);
    const auto sxy = detail::filter_valid(xy, w, h, k);
    double sum = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      sum += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / a.channels();
}

// Flow-compensated temporal PSNR: mean over t of PSNR(x_t, warp(x_{t+1}))
// on the valid pixels of step t. Steps with an empty mask are skipped.
inline double tpsnr(std::span<const ImagePlane> frames, std::span<const FlowField> flows,
                    std::span<const BinaryMask> valid, double peak = 1.0) {
  if (frames.size() < 2) throw DataError("tpsnr: needs at least 2 frames");
  if (flows.size() != frames.size() - 1 || valid.size() != frames.size() - 1)
    throw DataError("tpsnr: needs T-1 flows and validity masks");
  double sum = 0;
  int used = 0;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    if (valid[t].count() == 0) continue;
    const ImagePlane warped = backward_warp(frames[t + 1], flows[t]);
    sum += psnr(frames[t], warped, valid[t], peak);
    ++used;
  }
  if (used == 0) throw DataError("tpsnr: every validity mask is empty");
  return sum / used;
}

// Perceptual-path-length stand-in: mean over consecutive frames of
// (1 - SSIM) / 2.
inline double ppl_proxy(std::span<const ImagePlane> frames, const SsimParams& p = {}) {
  if (frames.size() < 2) throw DataError("ppl_proxy: needs at least 2 frames");
  double sum = 0;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t)
    sum += (1.0 - ssim(frames[t], frames[t + 1], p)) / 2.0;
  return sum / static_cast<double>(frames.size() - 1);
}

}  // namespace relit::metrics
