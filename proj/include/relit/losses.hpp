#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "relit/image.hpp"
#include "relit/raster.hpp"
#include "relit/stabilize.hpp"

namespace relit::losses {

inline constexpr double kDefaultEdgeSigma = 0.1;
inline constexpr double kDefaultDepthDelta = 0.01;

using stabilize::ValueAndGradient;

// Anisotropic Huber TV on a depth map: sum H(dz/dx) + H(dz/dy) over forward
// differences.
inline ValueAndGradient depth_tv_huber(const ImagePlane& z, double delta = kDefaultDepthDelta) {
  if (z.channels() != 1) throw DataError("depth_tv_huber: depth must be single-channel");
  if (!(delta > 0)) throw ParameterError("depth_tv_huber: delta must be > 0");
  auto [gx, gy] = spatial_gradients(z);
  double value = 0;
  auto xs = gx.samples();
  auto ys = gy.samples();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    value += stabilize::huber(xs[i], delta) + stabilize::huber(ys[i], delta);
    xs[i] = stabilize::huber_derivative(xs[i], delta);
    ys[i] = stabilize::huber_derivative(ys[i], delta);
  }
  return {value, forward_difference_adjoint(gx, gy)};
}

// Per-pixel exp(-|grad I|^2 / (2 sigma^2)), squared gradients summed over
// all channels of I.
inline ImagePlane edge_weights(const ImagePlane& image, double sigma = kDefaultEdgeSigma) {
  if (!(sigma > 0)) throw ParameterError("edge_weights: sigma must be > 0");
  auto [gx, gy] = spatial_gradients(image);
  ImagePlane w(image.width(), image.height(), 1);
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      double sq = 0;
      for (int c = 0; c < image.channels(); ++c)
        sq += gx(x, y, c) * gx(x, y, c) + gy(x, y, c) * gy(x, y, c);
      w(x, y) = std::exp(-sq / (2 * sigma * sigma));
    }
  return w;
}

// sum_p w(p) |Laplacian n(p)|^2 with the weights held constant.
inline ValueAndGradient normal_laplacian_loss(const ImagePlane& normals,
                                              const ImagePlane& weights) {
  if (normals.channels() != 3) throw DataError("normal_laplacian_loss: normals need 3 channels");
  require_same_extent(normals, weights, "normal_laplacian_loss");
  if (weights.channels() != 1) throw DataError("normal_laplacian_loss: weights need 1 channel");
  ImagePlane lap = laplacian(normals);
  double value = 0;
  for (int y = 0; y < lap.height(); ++y)
    for (int x = 0; x < lap.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const double d = lap(x, y, c);
        value += weights(x, y) * d * d;
        lap(x, y, c) = 2 * weights(x, y) * d;
      }
  return {value, laplacian(lap)};
}

}  // namespace relit::losses
