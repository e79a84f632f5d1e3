#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "relit/image.hpp"
#include "relit/parallel.hpp"

namespace relit {

// Default thresholds for the forward/backward flow consistency test.
inline constexpr double kFlowAbsThreshold = 1.5;
inline constexpr double kFlowRelThreshold = 0.05;

template <std::floating_point T>
using PixelValue = std::array<T, 4>;

namespace detail {

struct BilinearTap {
  int x0, y0, x1, y1;
  double fx, fy;
};

inline BilinearTap bilinear_tap(int width, int height, double x, double y) {
  const double xc = std::clamp(x, 0.0, static_cast<double>(width - 1));
  const double yc = std::clamp(y, 0.0, static_cast<double>(height - 1));
  BilinearTap t;
  t.x0 = static_cast<int>(std::floor(xc));
  t.y0 = static_cast<int>(std::floor(yc));
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.fx = xc - t.x0;
  t.fy = yc - t.y0;
  return t;
}

}  // namespace detail

// Bilinear interpolation with border clamping; only the first channels()
// entries of the result are meaningful.
template <std::floating_point T>
PixelValue<T> bilinear_sample(const Image<T>& img, double x, double y) {
  if (img.empty()) throw ParameterError("bilinear_sample: empty image");
  const auto t = detail::bilinear_tap(img.width(), img.height(), x, y);
  PixelValue<T> out{};
  const int nc = img.channels();
  if (t.fx == 0.0 && t.fy == 0.0) {
    for (int c = 0; c < nc; ++c) out[c] = img(t.x0, t.y0, c);
    return out;
  }
  const T fx = static_cast<T>(t.fx), fy = static_cast<T>(t.fy);
  for (int c = 0; c < nc; ++c) {
    const T a = img(t.x0, t.y0, c), b = img(t.x1, t.y0, c);
    const T d = img(t.x0, t.y1, c), e = img(t.x1, t.y1, c);
    const T top = a + fx * (b - a);
    const T bottom = d + fx * (e - d);
    out[c] = top + fy * (bottom - top);
  }
  return out;
}

// out(p) = src(p + flow(p)), i.e. resamples frame t+1 onto the grid of frame t
// when flow points from t to t+1.
template <std::floating_point T>
Image<T> backward_warp(const Image<T>& src, const FlowField& flow) {
  if (src.width() != flow.width() || src.height() != flow.height())
    throw DataError("backward_warp: source and flow sizes differ");
  Image<T> out(src.width(), src.height(), src.channels());
  parallel_for(0, src.height(), [&](int y) {
    for (int x = 0; x < src.width(); ++x) {
      const auto v = bilinear_sample(src, x + flow.u(x, y), y + flow.v(x, y));
      for (int c = 0; c < src.channels(); ++c) out(x, y, c) = v[c];
    }
  });
  return out;
}

// Adjoint of backward_warp for a fixed flow: scatters each grad(p) back onto
// the four texels it was sampled from. Serial, so accumulation order is fixed.
inline ImagePlane backward_warp_adjoint(const ImagePlane& grad, const FlowField& flow) {
  if (!grad.same_extent(flow))
    throw DataError("backward_warp_adjoint: gradient and flow sizes differ");
  ImagePlane out(grad.width(), grad.height(), grad.channels());
  for (int y = 0; y < grad.height(); ++y) {
    for (int x = 0; x < grad.width(); ++x) {
      const auto t =
          detail::bilinear_tap(grad.width(), grad.height(), x + flow.u(x, y), y + flow.v(x, y));
      const double w00 = (1 - t.fx) * (1 - t.fy), w10 = t.fx * (1 - t.fy);
      const double w01 = (1 - t.fx) * t.fy, w11 = t.fx * t.fy;
      for (int c = 0; c < grad.channels(); ++c) {
        const double g = grad(x, y, c);
        if (g == 0.0) continue;
        out(t.x0, t.y0, c) += w00 * g;
        out(t.x1, t.y0, c) += w10 * g;
        out(t.x0, t.y1, c) += w01 * g;
        out(t.x1, t.y1, c) += w11 * g;
      }
    }
  }
  return out;
}

// A pixel is valid when the forward flow round-trips through the backward flow
// and lands on foreground in the next frame.
inline BinaryMask fb_consistency_mask(const FlowField& flow_fwd, const FlowField& flow_bwd,
                                      const BinaryMask& fg_next,
                                      double abs_thresh = kFlowAbsThreshold,
                                      double rel_thresh = kFlowRelThreshold) {
  if (!flow_fwd.same_extent(flow_bwd) || !flow_fwd.same_extent(fg_next))
    throw DataError("fb_consistency_mask: input sizes differ");
  const ImagePlane fg_warped = backward_warp<double>(fg_next, flow_fwd);
  BinaryMask out(flow_fwd.width(), flow_fwd.height());
  parallel_for(0, flow_fwd.height(), [&](int y) {
    for (int x = 0; x < flow_fwd.width(); ++x) {
      const double u = flow_fwd.u(x, y), v = flow_fwd.v(x, y);
      const auto back = bilinear_sample<double>(flow_bwd, x + u, y + v);
      const double ru = u + back[0], rv = v + back[1];
      const double residual = std::hypot(ru, rv);
      const double limit = std::max(abs_thresh, rel_thresh * std::hypot(u, v));
      out.set(x, y, residual <= limit && fg_warped(x, y) > 0.5);
    }
  });
  return out;
}

// Forward differences; the last column of gx and last row of gy are zero.
template <std::floating_point T>
std::pair<Image<T>, Image<T>> spatial_gradients(const Image<T>& img) {
  if (img.empty()) throw ParameterError("spatial_gradients: empty image");
  const int w = img.width(), h = img.height(), nc = img.channels();
  Image<T> gx(w, h, nc), gy(w, h, nc);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < nc; ++c) {
        if (x + 1 < w) gx(x, y, c) = img(x + 1, y, c) - img(x, y, c);
        if (y + 1 < h) gy(x, y, c) = img(x, y + 1, c) - img(x, y, c);
      }
  });
  return {std::move(gx), std::move(gy)};
}

// Adjoint of the forward-difference operators: returns Dx^T qx + Dy^T qy.
// Entries of qx in the last column and qy in the last row are ignored.
inline ImagePlane forward_difference_adjoint(const ImagePlane& qx, const ImagePlane& qy) {
  require_same_shape(qx, qy, "forward_difference_adjoint");
  const int w = qx.width(), h = qx.height(), nc = qx.channels();
  ImagePlane out(w, h, nc);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < nc; ++c) {
        double g = 0.0;
        if (x + 1 < w) g -= qx(x, y, c);
        if (x >= 1) g += qx(x - 1, y, c);
        if (y + 1 < h) g -= qy(x, y, c);
        if (y >= 1) g += qy(x, y - 1, c);
        out(x, y, c) = g;
      }
  });
  return out;
}

// 4-neighbour Laplacian with the neighbour set truncated at the border. The
// operator is symmetric, so it is also its own adjoint.
template <std::floating_point T>
Image<T> laplacian(const Image<T>& img) {
  if (img.empty()) throw ParameterError("laplacian: empty image");
  const int w = img.width(), h = img.height(), nc = img.channels();
  Image<T> out(w, h, nc);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < nc; ++c) {
        T sum = 0;
        int n = 0;
        if (x > 0) sum += img(x - 1, y, c), ++n;
        if (x + 1 < w) sum += img(x + 1, y, c), ++n;
        if (y > 0) sum += img(x, y - 1, c), ++n;
        if (y + 1 < h) sum += img(x, y + 1, c), ++n;
        out(x, y, c) = sum - static_cast<T>(n) * img(x, y, c);
      }
  });
  return out;
}

}  // namespace relit
