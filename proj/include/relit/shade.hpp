#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "relit/image.hpp"
#include "relit/parallel.hpp"
#include "relit/raster.hpp"
#include "relit/vec.hpp"

namespace relit::shade {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kDenomFloor = 1e-7;

// Pinhole camera at the origin of view space looking down +z with +y pointing
// down the image. Pixel (x, y) is centred at integer coordinates.
struct Camera {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  Mat3 rotation;  // camera-to-world

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw ParameterError("camera focal lengths must be positive");
    const double err = rotation.orthonormality_error();
    if (!(err <= 1e-4))
      throw ParameterError("camera rotation not orthonormal (error " + std::to_string(err) + ")");
  }

  Vec3 unproject(double px, double py, double z) const {
    return {z * (px - cx) / fx, z * (py - cy) / fy, z};
  }

  std::pair<double, double> project(const Vec3& p) const {
    return {fx * p.x / p.z + cx, fy * p.y / p.z + cy};
  }

  Vec3 view_ray(double px, double py) const {
    return normalize(Vec3{(px - cx) / fx, (py - cy) / fy, 1.0});
  }

  Vec3 to_world(const Vec3& v) const { return rotation * v; }
  Vec3 to_view(const Vec3& w) const { return rotation.transposed() * w; }
};

struct GBuffer {
  ImagePlane albedo;     // linear RGB
  ImagePlane depth;      // view-space z in metres
  ImagePlane normal;     // unit camera-space vectors
  ImagePlane roughness;  // [0, 1]
  ImagePlane metallic;   // [0, 1]
  ImagePlane alpha;      // [0, 1]

  int width() const noexcept { return alpha.width(); }
  int height() const noexcept { return alpha.height(); }

  void validate() const {
    std::vector<std::string> bad;
    auto shape = [&](const ImagePlane& img, const char* name, int channels) {
      if (img.width() != width() || img.height() != height() || img.channels() != channels)
        bad.push_back(std::string(name) + " must be " + std::to_string(width()) + "x" +
                      std::to_string(height()) + "x" + std::to_string(channels));
    };
    if (alpha.empty()) throw DataError("G-buffer has no alpha plane");
    shape(albedo, "albedo", 3);
    shape(depth, "depth", 1);
    shape(normal, "normal", 3);
    shape(roughness, "roughness", 1);
    shape(metallic, "metallic", 1);
    shape(alpha, "alpha", 1);
    if (!bad.empty()) throw ValidationError(bad);
    auto unit_range = [&](const ImagePlane& img, const char* name) {
      for (double v : img.samples())
        if (!(v >= 0.0 && v <= 1.0)) {
          bad.push_back(std::string(name) + " value " + std::to_string(v) + " outside [0, 1]");
          return;
        }
    };
    unit_range(roughness, "roughness");
    unit_range(metallic, "metallic");
    unit_range(alpha, "alpha");
    for (int y = 0; y < height() && bad.empty(); ++y)
      for (int x = 0; x < width(); ++x) {
        if (alpha(x, y) <= 0.5) continue;
        const double len = length({normal(x, y, 0), normal(x, y, 1), normal(x, y, 2)});
        if (std::abs(len - 1.0) > 1e-3) {
          bad.push_back("normal at (" + std::to_string(x) + ", " + std::to_string(y) +
                        ") has length " + std::to_string(len));
          break;
        }
        if (!(depth(x, y) > 0)) {
          bad.push_back("depth at (" + std::to_string(x) + ", " + std::to_string(y) +
                        ") must be positive on foreground");
          break;
        }
      }
    if (!bad.empty()) throw ValidationError(bad);
  }
};

// Equirectangular radiance map: u = phi / 2pi, v = theta / pi, world
// direction (sin t cos p, cos t, sin t sin p). Texel (i, j) covers the cell
// centred at u = (i + 0.5) / W, v = (j + 0.5) / H.
class EnvironmentMap {
 public:
  EnvironmentMap() = default;
  explicit EnvironmentMap(ImagePlane radiance) : radiance_(std::move(radiance)) {
    if (radiance_.empty() || radiance_.channels() != 3)
      throw DataError("environment map must be a 3-channel image");
    for (double v : radiance_.samples())
      if (!(v >= 0.0) || !std::isfinite(v))
        throw DataError("environment radiance must be finite and non-negative");
  }

  const ImagePlane& image() const noexcept { return radiance_; }

  static Vec3 direction(double theta, double phi) {
    return {std::sin(theta) * std::cos(phi), std::cos(theta), std::sin(theta) * std::sin(phi)};
  }

  static std::pair<double, double> angles(const Vec3& d) {
    const double theta = std::acos(std::clamp(d.y, -1.0, 1.0));
    double phi = std::atan2(d.z, d.x);
    if (phi < 0) phi += 2 * kPi;
    return {theta, phi};
  }

  // Bilinear lookup; wraps in phi and clamps in theta.
  Rgb radiance(double theta, double phi) const {
    const int w = radiance_.width(), h = radiance_.height();
    const double fx = phi / (2 * kPi) * w - 0.5;
    const double fy = std::clamp(theta / kPi * h - 0.5, 0.0, double(h - 1));
    const double x0f = std::floor(fx);
    const double tx = fx - x0f;
    const int x0 = ((static_cast<int>(x0f) % w) + w) % w;
    const int x1 = (x0 + 1) % w;
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    Rgb out;
    double* dst[3] = {&out.x, &out.y, &out.z};
    for (int c = 0; c < 3; ++c) {
      const double top = radiance_(x0, y0, c) + tx * (radiance_(x1, y0, c) - radiance_(x0, y0, c));
      const double bot = radiance_(x0, y1, c) + tx * (radiance_(x1, y1, c) - radiance_(x0, y1, c));
      *dst[c] = top + ty * (bot - top);
    }
    return out;
  }

  Rgb radiance(const Vec3& world_dir) const {
    const auto [theta, phi] = angles(world_dir);
    return radiance(theta, phi);
  }

 private:
  ImagePlane radiance_;
};

struct LightSample {
  Vec3 direction;  // world space, unit length
  Rgb radiance;
  double solid_angle = 0;
};

using LightSampleSet = std::vector<LightSample>;

// One sample per (theta, phi) grid cell centre, weighted by the cell's solid
// angle (2pi / n_phi) (pi / n_theta) sin(theta).
inline LightSampleSet env_sample_set(const EnvironmentMap& env, int n_theta, int n_phi) {
  if (n_theta < 1 || n_phi < 1)
    throw ParameterError("env_sample_set: n_theta and n_phi must be >= 1");
  LightSampleSet set;
  set.reserve(static_cast<std::size_t>(n_theta) * n_phi);
  const double dtheta = kPi / n_theta, dphi = 2 * kPi / n_phi;
  for (int i = 0; i < n_theta; ++i) {
    const double theta = (i + 0.5) * dtheta;
    for (int j = 0; j < n_phi; ++j) {
      const double phi = (j + 0.5) * dphi;
      set.push_back({EnvironmentMap::direction(theta, phi), env.radiance(theta, phi),
                     dphi * dtheta * std::sin(theta)});
    }
  }
  return set;
}

inline ImagePlane unproject(const ImagePlane& depth, const Camera& cam) {
  ImagePlane pos(depth.width(), depth.height(), 3);
  parallel_for(0, depth.height(), [&](int y) {
    for (int x = 0; x < depth.width(); ++x) {
      const Vec3 p = cam.unproject(x, y, depth(x, y));
      pos(x, y, 0) = p.x, pos(x, y, 1) = p.y, pos(x, y, 2) = p.z;
    }
  });
  return pos;
}

struct Material {
  Rgb albedo{1, 1, 1};
  double roughness = 0.5;
  double metallic = 0.0;
};

// GGX / Trowbridge-Reitz NDF with alpha = roughness^2.
inline double ggx_distribution(double n_dot_h, double alpha) {
  const double a2 = alpha * alpha;
  const double d = n_dot_h * n_dot_h * (a2 - 1) + 1;
  return a2 / std::max(kPi * d * d, kDenomFloor);
}

// Separable Smith masking term for GGX.
inline double smith_g1(double n_dot_s, double alpha) {
  const double a2 = alpha * alpha;
  const double denom = n_dot_s + std::sqrt(a2 + (1 - a2) * n_dot_s * n_dot_s);
  return 2 * n_dot_s / std::max(denom, kDenomFloor);
}

inline Rgb schlick_fresnel(const Rgb& f0, double h_dot_v) {
  const double k = std::pow(std::clamp(1 - h_dot_v, 0.0, 1.0), 5);
  return f0 + (Rgb{1, 1, 1} - f0) * k;
}

struct BrdfLobes {
  Rgb diffuse, specular;
  Rgb total() const { return diffuse + specular; }
};

// Cook-Torrance GGX/Smith/Schlick with a metalness workflow. The cosine
// factor is not included.
inline BrdfLobes brdf_lobes(const Vec3& n, const Vec3& v, const Vec3& l, const Material& m) {
  const double nv = dot(n, v), nl = dot(n, l);
  if (nv <= 0 || nl <= 0) return {};
  const double alpha = m.roughness * m.roughness;
  const Vec3 h = normalize(v + l);
  const double nh = std::max(dot(n, h), 0.0);
  const double hv = std::max(dot(h, v), 0.0);
  const Rgb f0 = mix(Rgb{0.04, 0.04, 0.04}, m.albedo, m.metallic);
  const Rgb f = schlick_fresnel(f0, hv);
  const double dg = ggx_distribution(nh, alpha) * smith_g1(nv, alpha) * smith_g1(nl, alpha);
  BrdfLobes out;
  out.specular = f * (dg / std::max(4 * nv * nl, kDenomFloor));
  out.diffuse = (Rgb{1, 1, 1} - f) * m.albedo * ((1 - m.metallic) / kPi);
  return out;
}

inline Rgb brdf_eval(const Vec3& n, const Vec3& v, const Vec3& l, const Material& m) {
  return brdf_lobes(n, v, l, m).total();
}

struct ShadowConfig {
  bool enabled = true;
  int steps = 32;
  double max_dist = 0.5;   // metres
  double bias = 0.01;      // metres
  double thickness = 0.2;  // metres
  double norm_count = 0;   // <= 0 means `steps`

  double normalizer() const { return norm_count > 0 ? norm_count : steps; }

  void validate() const {
    if (steps < 1) throw ParameterError("shadow steps must be >= 1");
    if (!(max_dist > 0)) throw ParameterError("shadow max_dist must be > 0");
    if (!(bias >= 0) || !(thickness > 0))
      throw ParameterError("shadow bias must be >= 0 and thickness > 0");
  }
};

// Screen-space occlusion along a view-space light direction from one surface
// point: 1 = unoccluded, 0 = fully occluded.
inline double shadow_at(const Vec3& p, const ImagePlane& depth, const ImagePlane& alpha,
                        const Camera& cam, const Vec3& l_view, const ShadowConfig& cfg) {
  const int w = depth.width(), h = depth.height();
  int occluded = 0;
  for (int k = 1; k <= cfg.steps; ++k) {
    const Vec3 q = p + l_view * (cfg.max_dist * k / cfg.steps);
    if (q.z <= 0) continue;
    const auto [u, v] = cam.project(q);
    const long px = std::lround(u), py = std::lround(v);
    if (px < 0 || py < 0 || px >= w || py >= h) continue;
    if (alpha(px, py) <= 0.5) continue;
    const double zb = depth(px, py);
    if (zb < q.z - cfg.bias && q.z - zb < cfg.thickness) ++occluded;
  }
  return 1.0 - std::min(1.0, occluded / cfg.normalizer());
}

// Soft shadow map for one light direction; background pixels are 1.
inline ImagePlane shadow_raymarch(const ImagePlane& positions, const ImagePlane& depth,
                                  const ImagePlane& alpha, const Camera& cam, const Vec3& l_view,
                                  const ShadowConfig& cfg) {
  cfg.validate();
  require_same_extent(positions, depth, "shadow_raymarch");
  require_same_extent(positions, alpha, "shadow_raymarch");
  ImagePlane out(depth.width(), depth.height(), 1, 1.0);
  parallel_for(0, depth.height(), [&](int y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (alpha(x, y) <= 0.5) continue;
      const Vec3 p{positions(x, y, 0), positions(x, y, 1), positions(x, y, 2)};
      out(x, y) = shadow_at(p, depth, alpha, cam, l_view, cfg);
    }
  });
  return out;
}

// Direct environment lighting of a G-buffer: for every light sample, BRDF x
// cosine x screen-space shadow x radiance x solid angle, accumulated in light
// order. Background pixels (alpha <= 0.5) are 0.
inline ImagePlane relight(const GBuffer& g, const Camera& cam, const LightSampleSet& lights,
                          const ShadowConfig& shadow) {
  g.validate();
  cam.validate();
  if (shadow.enabled) shadow.validate();
  const ImagePlane positions = unproject(g.depth, cam);
  std::vector<Vec3> l_view(lights.size());
  for (std::size_t j = 0; j < lights.size(); ++j) l_view[j] = cam.to_view(lights[j].direction);

  ImagePlane out(g.width(), g.height(), 3);
  parallel_for(0, g.height(), [&](int y) {
    for (int x = 0; x < g.width(); ++x) {
      if (g.alpha(x, y) <= 0.5) continue;
      const Vec3 p{positions(x, y, 0), positions(x, y, 1), positions(x, y, 2)};
      const Vec3 n{g.normal(x, y, 0), g.normal(x, y, 1), g.normal(x, y, 2)};
      const Vec3 v = -normalize(p);
      const Material m{{g.albedo(x, y, 0), g.albedo(x, y, 1), g.albedo(x, y, 2)},
                       g.roughness(x, y),
                       g.metallic(x, y)};
      Rgb acc;
      for (std::size_t j = 0; j < lights.size(); ++j) {
        const Rgb& le = lights[j].radiance;
        const double nl = dot(n, l_view[j]);
        if (nl <= 0 || (le.x == 0 && le.y == 0 && le.z == 0)) continue;
        const Rgb f = brdf_eval(n, v, l_view[j], m);
        const double vis =
            shadow.enabled ? shadow_at(p, g.depth, g.alpha, cam, l_view[j], shadow) : 1.0;
        acc += f * le * (nl * vis * lights[j].solid_angle);
      }
      out(x, y, 0) = acc.x, out(x, y, 1) = acc.y, out(x, y, 2) = acc.z;
    }
  });
  return out;
}

inline ImagePlane tonemap_gamma(const ImagePlane& hdr, double exposure = 1.0, double gamma = 2.2) {
  if (!(gamma > 0)) throw ParameterError("tonemap_gamma: gamma must be > 0");
  ImagePlane out = hdr;
  for (double& v : out.samples()) v = std::pow(std::clamp(exposure * v, 0.0, 1.0), 1.0 / gamma);
  return out;
}

// alpha * fg + (1 - alpha) * bg, per pixel and channel.
inline ImagePlane composite(const ImagePlane& fg, const ImagePlane& alpha, const ImagePlane& bg) {
  require_same_shape(fg, bg, "composite");
  require_same_extent(fg, alpha, "composite alpha");
  ImagePlane out(fg.width(), fg.height(), fg.channels());
  for (int y = 0; y < fg.height(); ++y)
    for (int x = 0; x < fg.width(); ++x) {
      const double a = alpha(x, y);
      for (int c = 0; c < fg.channels(); ++c)
        out(x, y, c) = a * fg(x, y, c) + (1 - a) * bg(x, y, c);
    }
  return out;
}

// The environment as seen through the camera (linear HDR).
inline ImagePlane render_environment(const EnvironmentMap& env, const Camera& cam, int width,
                                     int height) {
  ImagePlane out(width, height, 3);
  parallel_for(0, height, [&](int y) {
    for (int x = 0; x < width; ++x) {
      const Rgb l = env.radiance(cam.to_world(cam.view_ray(x, y)));
      out(x, y, 0) = l.x, out(x, y, 1) = l.y, out(x, y, 2) = l.z;
    }
  });
  return out;
}

}  // namespace relit::shade
