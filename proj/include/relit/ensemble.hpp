#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relit/image.hpp"
#include "relit/parallel.hpp"

namespace relit::ensemble {

inline constexpr int kDefaultPatch = 512;
inline constexpr int kDefaultOverlap = 64;
inline constexpr double kWindowFloor = 1e-3;
inline constexpr double kSigmaPercentile = 0.95;
inline constexpr double kSigmaFallback = 1e-6;

struct Rect {
  int x = 0, y = 0, width = 0, height = 0;

  bool contains(int px, int py) const noexcept {
    return px >= x && px < x + width && py >= y && py < y + height;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct TilePlan {
  int width = 0, height = 0;
  int patch = 0, overlap = 0;
  std::vector<Rect> tiles;  // row-major order
};

namespace detail {

// Tile origins along one axis: stride patch - overlap, last one shifted inward.
inline std::vector<int> axis_origins(int size, int patch, int overlap) {
  if (size <= patch) return {0};
  std::vector<int> out{0};
  int x = 0;
  while (x + patch < size) {
    x = std::min(x + (patch - overlap), size - patch);
    out.push_back(x);
  }
  return out;
}

}  // namespace detail

inline TilePlan plan_tiles(int width, int height, int patch = kDefaultPatch,
                           int overlap = kDefaultOverlap) {
  if (width <= 0 || height <= 0) throw ParameterError("plan_tiles: frame must be non-empty");
  if (patch <= 0 || overlap < 0)
    throw ParameterError("plan_tiles: patch must be > 0, overlap >= 0");
  if (overlap >= patch)
    throw ParameterError("plan_tiles: overlap " + std::to_string(overlap) +
                         " must be smaller than patch " + std::to_string(patch));
  if (patch < 2 * overlap)
    throw ParameterError("plan_tiles: patch must be at least twice the overlap");
  TilePlan plan{width, height, patch, overlap, {}};
  const auto xs = detail::axis_origins(width, patch, overlap);
  const auto ys = detail::axis_origins(height, patch, overlap);
  for (int y : ys)
    for (int x : xs) plan.tiles.push_back({x, y, std::min(patch, width), std::min(patch, height)});
  return plan;
}

// Separable Hann window sampled at pixel centres, floored so that patch
// borders keep a defined (small) weight.
inline double hann_weight(int i, int j, int w, int h) {
  const double wx = std::pow(std::sin(std::numbers::pi * (i + 0.5) / w), 2);
  const double wy = std::pow(std::sin(std::numbers::pi * (j + 0.5) / h), 2);
  return std::max(kWindowFloor, wx * wy);
}

struct Patch {
  Rect rect;
  ImagePlane image;
};

// Normalized weighted average of overlapping patches. Pixels covered by a
// single patch are copied verbatim.
inline ImagePlane blend_patches(std::span<const Patch> patches, const TilePlan& plan) {
  if (patches.size() != plan.tiles.size())
    throw DataError("blend_patches: " + std::to_string(patches.size()) + " patches for " +
                    std::to_string(plan.tiles.size()) + " tiles");
  int channels = 0;
  for (std::size_t j = 0; j < patches.size(); ++j) {
    const auto& p = patches[j];
    if (!(p.rect == plan.tiles[j]) || p.image.width() != p.rect.width ||
        p.image.height() != p.rect.height)
      throw DataError("blend_patches: patch " + std::to_string(j) +
                      " does not match its tile rectangle");
    if (channels == 0) channels = p.image.channels();
    if (p.image.channels() != channels)
      throw DataError("blend_patches: patches disagree on channel count");
  }
  ImagePlane out(plan.width, plan.height, channels);
  parallel_for(0, plan.height, [&](int y) {
    std::vector<double> acc(channels);
    for (int x = 0; x < plan.width; ++x) {
      const Patch* only = nullptr;
      int covering = 0;
      double wsum = 0;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (const auto& p : patches) {
        if (!p.rect.contains(x, y)) continue;
        const int lx = x - p.rect.x, ly = y - p.rect.y;
        ++covering;
        only = &p;
        const double w = hann_weight(lx, ly, p.rect.width, p.rect.height);
        wsum += w;
        for (int c = 0; c < channels; ++c) acc[c] += w * p.image(lx, ly, c);
      }
      for (int c = 0; c < channels; ++c)
        out(x, y, c) =
            covering == 1 ? only->image(x - only->rect.x, y - only->rect.y, c) : acc[c] / wsum;
    }
  });
  return out;
}

struct EnsembleStats {
  ImagePlane mean;
  ImagePlane sigma_norm;  // population std / s_ref, clamped to [0, 1]
  double sigma_ref = 0;   // the s_ref used for normalization
};

// Nearest-rank percentile (q in (0, 1]) of a non-empty value list.
inline double nearest_rank_percentile(std::vector<double> values, double q) {
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
  return values[rank - 1];
}

// Per-pixel mean and normalized population standard deviation over K samples.
// The normalizer is the 95th percentile of the std over foreground pixels
// (all pixels when no mask is given).
inline EnsembleStats ensemble_stats(std::span<const ImagePlane> samples,
                                    const BinaryMask* foreground = nullptr) {
  if (samples.empty()) throw DataError("ensemble_stats: no samples");
  const auto& first = samples.front();
  for (const auto& s : samples) require_same_shape(first, s, "ensemble_stats");
  if (foreground) require_same_extent(first, *foreground, "ensemble_stats foreground");

  const int w = first.width(), h = first.height(), nc = first.channels();
  const double k = static_cast<double>(samples.size());
  EnsembleStats st{ImagePlane(w, h, nc), ImagePlane(w, h, nc), 0.0};
  ImagePlane stddev(w, h, nc);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < nc; ++c) {
        // Anchored at the first sample: identical samples give an exact mean
        // and an exactly zero deviation.
        const double anchor = first(x, y, c);
        double shift = 0;
        for (const auto& s : samples) shift += s(x, y, c) - anchor;
        const double mean = anchor + shift / k;
        double var = 0;
        for (const auto& s : samples) var += (s(x, y, c) - mean) * (s(x, y, c) - mean);
        st.mean(x, y, c) = mean;
        stddev(x, y, c) = std::sqrt(var / k);
      }
  });

  std::vector<double> pool;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!foreground || foreground->test(x, y))
        for (int c = 0; c < nc; ++c) pool.push_back(stddev(x, y, c));
  double ref = pool.empty() ? 0.0 : nearest_rank_percentile(std::move(pool), kSigmaPercentile);
  if (!(ref > 0)) ref = kSigmaFallback;
  st.sigma_ref = ref;
  auto sd = stddev.samples();
  auto out = st.sigma_norm.samples();
  for (std::size_t i = 0; i < sd.size(); ++i) out[i] = std::min(1.0, sd[i] / ref);
  return st;
}

}  // namespace relit::ensemble
