#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "relit/image.hpp"
#include "relit/mapio.hpp"
#include "relit/parallel.hpp"
#include "relit/shade.hpp"

namespace relit::synth {

using shade::Camera;
using shade::EnvironmentMap;
using shade::GBuffer;
using shade::Material;

struct Sphere {
  Vec3 center;
  double radius = 1;
};

struct Plane {
  Vec3 point;
  Vec3 normal{0, 1, 0};
};

struct SceneObject {
  std::variant<Sphere, Plane> shape;
  Material material;
};

// Analytic scene in world space; the camera sits at the world origin and its
// rotation maps view to world directions.
struct SceneSpec {
  int width = 64, height = 48;
  Camera camera;
  std::vector<SceneObject> objects;
  EnvironmentMap environment;
  double translate_x = 0, translate_y = 0;  // image-space pixels per frame
  int frames = 1;
  int samples = 1;   // K noisy material samples per frame
  double noise = 0;  // std of the additive Gaussian sample noise
  std::uint64_t seed = 1;
  int mc_spp = 0;  // > 0: also write a Monte Carlo reference per frame

  void validate() const {
    std::vector<std::string> bad;
    if (width < 1 || height < 1) bad.push_back("image size must be positive");
    for (const auto& o : objects) {
      if (const auto* s = std::get_if<Sphere>(&o.shape); s && !(s->radius > 0))
        bad.push_back("sphere radius must be > 0");
      if (const auto* p = std::get_if<Plane>(&o.shape); p && std::abs(length(p->normal) - 1) > 1e-6)
        bad.push_back("plane normal must be unit length");
    }
    if (!(noise >= 0)) bad.push_back("noise must be >= 0");
    if (samples < 1) bad.push_back("samples (K) must be >= 1");
    if (frames < 1) bad.push_back("frames must be >= 1");
    if (mc_spp < 0) bad.push_back("mc_spp must be >= 0");
    if (environment.image().empty()) bad.push_back("scene needs an environment");
    if (!bad.empty()) throw ValidationError(bad);
    camera.validate();
  }

  // Camera for frame t: the principal point moves with the image translation,
  // so frame t+1 is frame t shifted by exactly (translate_x, translate_y).
  Camera camera_for(int frame) const {
    Camera c = camera;
    c.cx += translate_x * frame;
    c.cy += translate_y * frame;
    return c;
  }
};

// Counter-based generator: one independent stream per (seed, stream key).
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t key = 0)
      : state_(mix(seed ^ mix(key + 0x9e3779b97f4a7c15ULL))) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double gaussian() {
    const double u1 = 1.0 - uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
  }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t stream_key(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
                                std::uint64_t d = 0) {
  return Rng::mix(Rng::mix(Rng::mix(a) ^ b) ^ Rng::mix(c + 0x632be59bd9b4e019ULL) ^ (d << 1));
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal;
  int object = -1;
  explicit operator bool() const { return object >= 0; }
};

// Nearest intersection with t in (t_min, t_max) against view-space objects.
inline Hit intersect(const std::vector<SceneObject>& objects, const Vec3& origin, const Vec3& dir,
                     double t_min = 1e-9, double t_max = std::numeric_limits<double>::infinity()) {
  Hit best;
  best.t = t_max;
  for (int i = 0; i < static_cast<int>(objects.size()); ++i) {
    if (const auto* s = std::get_if<Sphere>(&objects[i].shape)) {
      const Vec3 oc = origin - s->center;
      const double b = dot(oc, dir);
      const double c = dot(oc, oc) - s->radius * s->radius;
      const double disc = b * b - c;
      if (disc < 0) continue;
      const double sq = std::sqrt(disc);
      for (double t : {-b - sq, -b + sq})
        if (t > t_min && t < best.t) {
          best = {t, (origin + dir * t - s->center) / s->radius, i};
          break;
        }
    } else {
      const auto& p = std::get<Plane>(objects[i].shape);
      const double denom = dot(dir, p.normal);
      if (std::abs(denom) < 1e-12) continue;
      const double t = dot(p.point - origin, p.normal) / denom;
      if (t > t_min && t < best.t) best = {t, p.normal, i};
    }
  }
  return best;
}

inline std::vector<SceneObject> objects_in_view(const SceneSpec& spec) {
  std::vector<SceneObject> out = spec.objects;
  for (auto& o : out) {
    if (auto* s = std::get_if<Sphere>(&o.shape))
      s->center = spec.camera.to_view(s->center);
    else {
      auto& p = std::get<Plane>(o.shape);
      p.point = spec.camera.to_view(p.point);
      p.normal = spec.camera.to_view(p.normal);
    }
  }
  return out;
}

struct FrameRender {
  GBuffer gbuffer;
  Camera camera;
};

// Ray casts every pixel centre against the analytic scene.
inline FrameRender rasterize_gbuffer(const SceneSpec& spec, int frame) {
  const Camera cam = spec.camera_for(frame);
  const auto objects = objects_in_view(spec);
  const int w = spec.width, h = spec.height;
  GBuffer g{ImagePlane(w, h, 3), ImagePlane(w, h, 1), ImagePlane(w, h, 3),
            ImagePlane(w, h, 1), ImagePlane(w, h, 1), ImagePlane(w, h, 1)};
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 dir = cam.view_ray(x, y);
      const Hit hit = intersect(objects, {}, dir);
      if (!hit) continue;
      Vec3 n = hit.normal;
      if (dot(n, dir) > 0) n = -n;
      const Vec3 p = dir * hit.t;
      const Material& m = objects[hit.object].material;
      g.albedo(x, y, 0) = m.albedo.x, g.albedo(x, y, 1) = m.albedo.y,
                     g.albedo(x, y, 2) = m.albedo.z;
      g.depth(x, y) = p.z;
      g.normal(x, y, 0) = n.x, g.normal(x, y, 1) = n.y, g.normal(x, y, 2) = n.z;
      g.roughness(x, y) = m.roughness;
      g.metallic(x, y) = m.metallic;
      g.alpha(x, y) = 1.0;
    }
  });
  return {std::move(g), cam};
}

namespace detail {

inline void orthonormal_basis(const Vec3& n, Vec3& t, Vec3& b) {
  const double sign = std::copysign(1.0, n.z);
  const double a = -1.0 / (sign + n.z);
  const double c = n.x * n.y * a;
  t = {1 + sign * n.x * n.x * a, sign * c, -sign * n.x};
  b = {c, sign + n.y * n.y * a, -n.y};
}

}  // namespace detail

// Brute-force single-bounce reference: per hit point, a one-sample mixture of
// cosine-hemisphere and uniform-sphere directions, true 3D visibility against
// the analytic objects and the same BRDF as shade::relight.
inline ImagePlane mc_reference(const SceneSpec& spec, int frame, int spp, std::uint64_t seed) {
  if (spp < 1) throw ParameterError("mc_reference: spp must be >= 1");
  const auto render = rasterize_gbuffer(spec, frame);
  const auto& g = render.gbuffer;
  const Camera& cam = render.camera;
  const auto objects = objects_in_view(spec);
  const int w = spec.width, h = spec.height;
  constexpr double kPi = std::numbers::pi;
  ImagePlane out(w, h, 3);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (g.alpha(x, y) <= 0.5) continue;
      const Vec3 p = cam.unproject(x, y, g.depth(x, y));
      const Vec3 n{g.normal(x, y, 0), g.normal(x, y, 1), g.normal(x, y, 2)};
      const Vec3 v = -normalize(p);
      const Material m{{g.albedo(x, y, 0), g.albedo(x, y, 1), g.albedo(x, y, 2)},
                       g.roughness(x, y),
                       g.metallic(x, y)};
      Vec3 tangent, bitangent;
      detail::orthonormal_basis(n, tangent, bitangent);
      const Vec3 origin = p + n * 1e-6;
      Rng rng(seed, stream_key(static_cast<std::uint64_t>(frame), static_cast<std::uint64_t>(y),
                               static_cast<std::uint64_t>(x)));
      Rgb sum;
      for (int s = 0; s < spp; ++s) {
        const double u0 = rng.uniform(), u1 = rng.uniform(), u2 = rng.uniform();
        Vec3 l;
        if (u0 < 0.5) {
          const double r = std::sqrt(u1), phi = 2 * kPi * u2;
          const double lz = std::sqrt(std::max(0.0, 1 - u1));
          l = tangent * (r * std::cos(phi)) + bitangent * (r * std::sin(phi)) + n * lz;
        } else {
          const double z = 1 - 2 * u1, r = std::sqrt(std::max(0.0, 1 - z * z));
          const double phi = 2 * kPi * u2;
          l = {r * std::cos(phi), r * std::sin(phi), z};
        }
        const double nl = dot(n, l);
        if (nl <= 0) continue;
        const double pdf = 0.5 * nl / kPi + 0.5 / (4 * kPi);
        if (intersect(objects, origin, l)) continue;
        const Rgb f = shade::brdf_eval(n, v, l, m);
        sum += f * spec.environment.radiance(cam.to_world(l)) * (nl / pdf);
      }
      const Rgb est = sum / spp;
      out(x, y, 0) = est.x, out(x, y, 1) = est.y, out(x, y, 2) = est.z;
    }
  });
  return out;
}

// Binary 3D visibility along a world-space light direction for every
// foreground pixel (background pixels are 1).
inline ImagePlane analytic_visibility(const SceneSpec& spec, int frame, const Vec3& l_world) {
  const auto render = rasterize_gbuffer(spec, frame);
  const auto objects = objects_in_view(spec);
  const Vec3 l = normalize(spec.camera.to_view(l_world));
  ImagePlane out(spec.width, spec.height, 1, 1.0);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      if (render.gbuffer.alpha(x, y) <= 0.5) continue;
      const Vec3 p = render.camera.unproject(x, y, render.gbuffer.depth(x, y));
      const Vec3 n{render.gbuffer.normal(x, y, 0), render.gbuffer.normal(x, y, 1),
                   render.gbuffer.normal(x, y, 2)};
      out(x, y) = intersect(objects, p + n * 1e-6, l) ? 0.0 : 1.0;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Environments

inline EnvironmentMap constant_environment(const Rgb& radiance, int width = 16, int height = 8) {
  ImagePlane img(width, height, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      img(x, y, 0) = radiance.x, img(x, y, 1) = radiance.y, img(x, y, 2) = radiance.z;
  return EnvironmentMap(std::move(img));
}

// Single bright texel at (tx, ty) on an otherwise black map.
inline EnvironmentMap point_environment(int width, int height, int tx, int ty, const Rgb& value) {
  ImagePlane img(width, height, 3);
  img(tx, ty, 0) = value.x, img(tx, ty, 1) = value.y, img(tx, ty, 2) = value.z;
  return EnvironmentMap(std::move(img));
}

// Smooth outdoor-like map: zenith-to-horizon sky gradient, a broad sun lobe
// and a dim ground below the horizon.
inline EnvironmentMap sky_environment(int width, int height, const Vec3& sun_dir,
                                      double sun_strength = 2.0, double sun_width = 0.1) {
  const Vec3 sun = normalize(sun_dir);
  ImagePlane img(width, height, 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double theta = (y + 0.5) / height * std::numbers::pi;
      const double phi = (x + 0.5) / width * 2 * std::numbers::pi;
      const Vec3 d = EnvironmentMap::direction(theta, phi);
      Rgb l;
      if (d.y < 0) {
        l = Rgb{0.12, 0.10, 0.08};
      } else {
        l = mix(Rgb{0.85, 0.85, 0.9}, Rgb{0.35, 0.5, 0.85}, d.y);
        l += Rgb{1.0, 0.95, 0.85} * (sun_strength * std::exp((dot(d, sun) - 1) / sun_width));
      }
      img(x, y, 0) = l.x, img(x, y, 1) = l.y, img(x, y, 2) = l.z;
    }
  return EnvironmentMap(std::move(img));
}

// Camera rotation for a camera pitched down by `pitch` radians (world +y up,
// camera looking toward world -z).
inline Mat3 pitched_rotation(double pitch) {
  const double s = std::sin(pitch), c = std::cos(pitch);
  // Columns: view x, view y (image down), view z (forward) in world space.
  return Mat3{{1, 0, 0, 0, -c, -s, 0, s, -c}};
}

// A sphere resting on a ground plane under a sky.
inline SceneSpec sphere_on_plane_scene() {
  SceneSpec s;
  s.width = 96, s.height = 72;
  // Camera 2 m above the ground, pitched 50 degrees down; the sphere sits
  // where the optical axis meets the ground.
  s.camera = Camera{100, 100, 47.5, 35.5, pitched_rotation(50.0 * std::numbers::pi / 180)};
  s.objects.push_back({Plane{{0, -2, 0}, {0, 1, 0}}, Material{{0.7, 0.65, 0.6}, 0.8, 0.0}});
  s.objects.push_back({Sphere{{0, -1.65, -1.68}, 0.35}, Material{{0.8, 0.3, 0.2}, 0.5, 0.0}});
  s.environment = sky_environment(128, 64, {-0.5, 0.8, 0.3});
  return s;
}

// Translating sphere-on-plane used for temporal stabilization tests.
inline SceneSpec flicker_scene(int frames = 20, double noise = 0.1, int samples = 4) {
  SceneSpec s = sphere_on_plane_scene();
  s.width = 64, s.height = 48;
  s.camera.fx = s.camera.fy = 66;
  s.camera.cx = 23.5, s.camera.cy = 23.5;
  s.objects[0].material = Material{{0.7, 0.65, 0.6}, 0.7, 0.1};
  s.objects[1].material = Material{{0.8, 0.3, 0.2}, 0.35, 0.6};
  s.translate_x = 1.0;
  s.frames = frames;
  s.noise = noise;
  s.samples = samples;
  s.environment = sky_environment(64, 32, {-0.5, 0.8, 0.3});
  return s;
}

// ---------------------------------------------------------------------------
// Scene files (JSON)

namespace detail {

inline Vec3 vec3(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw ParameterError(std::string(what) + " must be [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Material material(const nlohmann::json& j) {
  Material m;
  if (j.contains("albedo")) m.albedo = vec3(j["albedo"], "albedo");
  m.roughness = j.value("roughness", m.roughness);
  m.metallic = j.value("metallic", m.metallic);
  return m;
}

}  // namespace detail

// Builds a scene from JSON. Unspecified fields keep the flicker_scene()
// defaults; "environment" may be {"type": "constant"|"sky"|"file", ...}.
inline SceneSpec parse_scene(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  SceneSpec s = flicker_scene();
  try {
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    if (j.contains("camera")) {
      const auto& c = j["camera"];
      s.camera.fx = c.value("fx", s.camera.fx);
      s.camera.fy = c.value("fy", s.camera.fy);
      s.camera.cx = c.value("cx", s.camera.cx);
      s.camera.cy = c.value("cy", s.camera.cy);
      if (c.contains("pitch_deg"))
        s.camera.rotation = pitched_rotation(c["pitch_deg"].get<double>() * std::numbers::pi / 180);
      if (c.contains("rotation")) {
        const auto r = c["rotation"].get<std::vector<double>>();
        if (r.size() != 9) throw ParameterError("camera.rotation must have 9 entries");
        std::copy(r.begin(), r.end(), s.camera.rotation.m.begin());
      }
    }
    if (j.contains("objects")) {
      s.objects.clear();
      for (const auto& o : j["objects"]) {
        const auto type = o.at("type").get<std::string>();
        if (type == "sphere")
          s.objects.push_back(
              {Sphere{detail::vec3(o.at("center"), "center"), o.at("radius").get<double>()},
               detail::material(o)});
        else if (type == "plane")
          s.objects.push_back({Plane{detail::vec3(o.at("point"), "point"),
                                     normalize(detail::vec3(o.at("normal"), "normal"))},
                               detail::material(o)});
        else
          throw ParameterError("unknown object type '" + type + "'");
      }
    }
    if (j.contains("environment")) {
      const auto& e = j["environment"];
      const auto type = e.value("type", std::string("sky"));
      if (type == "constant")
        s.environment = constant_environment(detail::vec3(e.at("radiance"), "radiance"));
      else if (type == "sky")
        s.environment = sky_environment(
            e.value("width", 128), e.value("height", 64),
            e.contains("sun") ? detail::vec3(e["sun"], "sun") : Vec3{-0.5, 0.8, 0.3},
            e.value("sun_strength", 2.0), e.value("sun_width", 0.1));
      else if (type == "file") {
        std::filesystem::path p = e.at("path").get<std::string>();
        if (p.is_relative()) p = base / p;
        s.environment = EnvironmentMap(mapio::load_map(p));
      } else
        throw ParameterError("unknown environment type '" + type + "'");
    }
    if (j.contains("translation")) {
      const auto t = j["translation"].get<std::vector<double>>();
      if (t.size() != 2) throw ParameterError("translation must be [dx, dy]");
      s.translate_x = t[0], s.translate_y = t[1];
    }
    s.frames = j.value("frames", s.frames);
    s.samples = j.value("samples", s.samples);
    s.noise = j.value("noise", s.noise);
    s.seed = j.value("seed", s.seed);
    s.mc_spp = j.value("mc_spp", s.mc_spp);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("invalid scene description: ") + e.what());
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Sequence fixtures

// Writes a complete sequence (G-buffers, ground-truth and K noisy material
// samples per frame, exact flows, environment, optional Monte Carlo
// references) under `dir` and returns its validated manifest.
inline mapio::SequenceManifest make_flicker_sequence(const SceneSpec& spec,
                                                     const std::filesystem::path& dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "flows");

  mapio::SequenceManifest m;
  m.directory = fs::absolute(dir);
  m.frame_count = spec.frames;
  m.sample_count = spec.samples;
  m.intrinsics = {spec.camera.fx, spec.camera.fy, spec.camera.cx, spec.camera.cy};
  m.rotation = spec.camera.rotation.m;
  m.environment = m.directory / "environment.pfm";
  mapio::write_pfm(spec.environment.image(), m.environment);

  auto name = [](const char* stem, int i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04d", stem, i);
    return std::string(buf);
  };

  for (int t = 0; t < spec.frames; ++t) {
    const auto render = rasterize_gbuffer(spec, t);
    const auto& g = render.gbuffer;
    const fs::path fdir = m.directory / "frames" / name("frame", t);
    fs::create_directories(fdir);
    mapio::FrameRecord r;
    r.albedo = fdir / "albedo.pfm";
    r.depth = fdir / "depth.pfm";
    r.normal = fdir / "normal.pfm";
    r.alpha = fdir / "alpha.pfm";
    r.roughness_truth = fdir / "roughness_truth.pfm";
    r.metallic_truth = fdir / "metallic_truth.pfm";
    mapio::write_pfm(g.albedo, r.albedo);
    mapio::write_pfm(g.depth, r.depth);
    mapio::write_pfm(g.normal, r.normal);
    mapio::write_pfm(g.alpha, r.alpha);
    mapio::write_pfm(g.roughness, *r.roughness_truth);
    mapio::write_pfm(g.metallic, *r.metallic_truth);
    r.intrinsics =
        mapio::Intrinsics{render.camera.fx, render.camera.fy, render.camera.cx, render.camera.cy};

    for (int map = 0; map < 2; ++map) {
      const ImagePlane& truth = map == 0 ? g.roughness : g.metallic;
      for (int k = 0; k < spec.samples; ++k) {
        ImagePlane sample = truth;
        if (spec.noise > 0) {
          for (int y = 0; y < sample.height(); ++y) {
            Rng rng(spec.seed, stream_key(0x5eed + t, map, k, y));
            for (int x = 0; x < sample.width(); ++x)
              sample(x, y) = std::clamp(truth(x, y) + spec.noise * rng.gaussian(), 0.0, 1.0);
          }
        }
        const fs::path p = fdir / (name(map == 0 ? "roughness_s" : "metallic_s", k) + ".pfm");
        mapio::write_pfm(sample, p);
        (map == 0 ? r.roughness_samples : r.metallic_samples).push_back(p);
      }
    }
    if (spec.mc_spp > 0) {
      r.reference = fdir / "reference.pfm";
      mapio::write_pfm(mc_reference(spec, t, spec.mc_spp, spec.seed), *r.reference);
    }
    m.frames.push_back(std::move(r));
  }

  FlowField fwd(spec.width, spec.height), bwd(spec.width, spec.height);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      fwd(x, y, 0) = spec.translate_x, fwd(x, y, 1) = spec.translate_y;
      bwd(x, y, 0) = -spec.translate_x, bwd(x, y, 1) = -spec.translate_y;
    }
  for (int t = 0; t + 1 < spec.frames; ++t) {
    m.forward_flows.push_back(m.directory / "flows" / (name("forward", t) + ".flo"));
    m.backward_flows.push_back(m.directory / "flows" / (name("backward", t) + ".flo"));
    mapio::write_flo(fwd, m.forward_flows.back());
    mapio::write_flo(bwd, m.backward_flows.back());
  }

  mapio::write_manifest(m, m.directory / "manifest.json");
  return mapio::load_manifest(m.directory / "manifest.json");
}

}  // namespace relit::synth
