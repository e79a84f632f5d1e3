#include <gtest/gtest.h>

#include <random>

#include "relit/mapio.hpp"
#include "relit/raster.hpp"
#include "relit/synth.hpp"
#include "test_util.hpp"

using namespace relit;
using namespace relit::synth;
using shade::Camera;

namespace {

SceneSpec empty_scene(int w, int h) {
  SceneSpec s;
  s.width = w, s.height = h;
  s.camera = Camera{60, 60, (w - 1) / 2.0, (h - 1) / 2.0, Mat3{}};
  s.environment = constant_environment({1, 1, 1});
  return s;
}

// Plane z = d facing the camera (identity rotation, view = world).
SceneSpec facing_plane_scene(int w, int h, double d, Material m) {
  auto s = empty_scene(w, h);
  s.objects.push_back({Plane{{0, 0, d}, {0, 0, -1}}, m});
  return s;
}

double luminance(const ImagePlane& img, int x, int y) {
  return 0.2126 * img(x, y, 0) + 0.7152 * img(x, y, 1) + 0.0722 * img(x, y, 2);
}

}  // namespace

TEST(Rasterize, SphereOnOpticalAxis) {
  auto s = empty_scene(31, 31);
  s.objects.push_back({Sphere{{0, 0, 4}, 1}, Material{}});
  const auto r = rasterize_gbuffer(s, 0);
  const auto& g = r.gbuffer;
  EXPECT_NEAR(g.depth(15, 15), 3.0, 1e-12);
  EXPECT_NEAR(g.normal(15, 15, 2), -1.0, 1e-12);
  for (int y = 0; y < 31; ++y)
    for (int x = 0; x < 31; ++x)
      if (g.alpha(x, y) > 0.5) {
        EXPECT_GE(g.depth(x, y), g.depth(15, 15));
        const double len = std::sqrt(g.normal(x, y, 0) * g.normal(x, y, 0) +
                                     g.normal(x, y, 1) * g.normal(x, y, 1) +
                                     g.normal(x, y, 2) * g.normal(x, y, 2));
        EXPECT_NEAR(len, 1.0, 1e-12);
      }
  EXPECT_EQ(g.alpha(0, 0), 0.0);
}

TEST(Rasterize, EmptySceneHasNoForeground) {
  const auto r = rasterize_gbuffer(empty_scene(8, 6), 0);
  for (double v : r.gbuffer.alpha.samples()) EXPECT_EQ(v, 0.0);
}

TEST(Rasterize, FacingPlaneHasConstantDepth) {
  const auto r = rasterize_gbuffer(facing_plane_scene(12, 9, 2.5, Material{}), 0);
  for (double v : r.gbuffer.depth.samples()) EXPECT_NEAR(v, 2.5, 1e-12);
  for (double v : r.gbuffer.alpha.samples()) EXPECT_EQ(v, 1.0);
  EXPECT_NO_THROW(r.gbuffer.validate());
}

TEST(Rasterize, NormalsOfDefaultScenesAreUnit) {
  for (const auto& s : {sphere_on_plane_scene(), flicker_scene(2)}) {
    const auto g = rasterize_gbuffer(s, 1 % s.frames).gbuffer;
    EXPECT_NO_THROW(g.validate());
    std::size_t fg = 0;
    for (double a : g.alpha.samples()) fg += a > 0.5;
    EXPECT_GT(fg, g.alpha.pixel_count() / 2);
  }
}

TEST(SceneSpec, ValidationCollectsViolations) {
  auto s = empty_scene(4, 4);
  s.objects.push_back({Sphere{{0, 0, 1}, -1}, Material{}});
  s.noise = -1;
  s.samples = 0;
  try {
    s.validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.violations().size(), 3u);
  }
}

TEST(Rng, DeterministicAndRoughlyUniform) {
  Rng a(7, stream_key(1, 2, 3)), b(7, stream_key(1, 2, 3)), c(7, stream_key(1, 2, 4));
  double mean = 0, sq = 0;
  bool differs = false;
  for (int i = 0; i < 20000; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    differs |= u != c.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    mean += u;
    const double g = a.gaussian();
    b.gaussian();
    c.gaussian();
    sq += g * g;
  }
  EXPECT_TRUE(differs);
  EXPECT_NEAR(mean / 20000, 0.5, 0.01);
  EXPECT_NEAR(sq / 20000, 1.0, 0.05);
}

TEST(McReference, LambertianPlaneUnderUnitRadianceGivesAlbedo) {
  const Rgb albedo{0.5, 0.55, 0.6};
  const auto s = facing_plane_scene(6, 5, 2.0, Material{albedo, 0.8, 0.0});
  const auto img = mc_reference(s, 0, 4096, 3);
  for (int c = 0; c < 3; ++c) {
    double mean = 0;
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) mean += img(x, y, c) / 30;
    EXPECT_NEAR(mean, albedo[c], 0.02 * albedo[c]);
  }
}

TEST(McReference, BlackEnvironmentGivesZero) {
  auto s = sphere_on_plane_scene();
  s.width = 24, s.height = 18;
  s.camera.fx = s.camera.fy = 25;
  s.camera.cx = 11.5, s.camera.cy = 8.5;
  s.environment = constant_environment({0, 0, 0});
  for (const auto out = mc_reference(s, 0, 16, 1); double v : out.samples()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(mc_reference(s, 0, 0, 1), ParameterError);
}

TEST(McReference, DeterministicGivenSeed) {
  const auto s = facing_plane_scene(5, 4, 1.0, Material{{0.5, 0.5, 0.5}, 0.3, 0.2});
  EXPECT_EQ(mc_reference(s, 0, 32, 9), mc_reference(s, 0, 32, 9));
  EXPECT_NE(mc_reference(s, 0, 32, 9), mc_reference(s, 0, 32, 10));
}

TEST(McReference, GlossyHighlightSitsAtReflectionPixel) {
  // Bright texel behind and above-left of the camera.
  const int ew = 32, eh = 16, tx = 22, ty = 6;
  const double theta = (ty + 0.5) / eh * shade::kPi, phi = (tx + 0.5) / ew * 2 * shade::kPi;
  const Vec3 light = shade::EnvironmentMap::direction(theta, phi);
  auto s = empty_scene(48, 48);
  s.objects.push_back({Sphere{{0, 0, 3}, 1}, Material{{1, 1, 1}, 0.3, 1.0}});
  s.environment = point_environment(ew, eh, tx, ty, {200, 200, 200});

  // Closed-form prediction: the pixel whose mirror direction is closest to
  // the light.
  const auto r = rasterize_gbuffer(s, 0);
  double best = -2;
  int px = -1, py = -1;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      if (r.gbuffer.alpha(x, y) <= 0.5) continue;
      const Vec3 d = r.camera.view_ray(x, y);
      const Vec3 n{r.gbuffer.normal(x, y, 0), r.gbuffer.normal(x, y, 1), r.gbuffer.normal(x, y, 2)};
      const Vec3 refl = d - n * (2 * dot(d, n));
      if (dot(refl, light) > best) best = dot(refl, light), px = x, py = y;
    }
  ASSERT_GT(best, 0.99);

  const auto img = mc_reference(s, 0, 2048, 5);
  double peak = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) peak = std::max(peak, luminance(img, x, y));
  double wx = 0, wy = 0, wsum = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      const double l = luminance(img, x, y);
      if (l < 0.5 * peak) continue;
      wx += l * x, wy += l * y, wsum += l;
    }
  EXPECT_NEAR(wx / wsum, px, 2.0);
  EXPECT_NEAR(wy / wsum, py, 2.0);
}

TEST(McReference, StandardErrorHalvesWhenSamplesQuadruple) {
  const auto s = facing_plane_scene(8, 6, 2.0, Material{{0.6, 0.6, 0.6}, 0.5, 0.0});
  auto spread = [&](int spp) {
    const int seeds = 24;
    std::vector<ImagePlane> runs;
    for (int k = 0; k < seeds; ++k) runs.push_back(mc_reference(s, 0, spp, 100 + k));
    double total = 0;
    for (std::size_t i = 0; i < runs[0].samples().size(); ++i) {
      double m = 0, v = 0;
      for (const auto& r : runs) m += r.samples()[i] / seeds;
      for (const auto& r : runs) v += (r.samples()[i] - m) * (r.samples()[i] - m) / (seeds - 1);
      total += std::sqrt(v);
    }
    return total / runs[0].samples().size();
  };
  const double ratio = spread(64) / spread(256);
  EXPECT_GT(ratio, 2.0 * 0.7);
  EXPECT_LT(ratio, 2.0 * 1.3);
}

TEST(AnalyticVisibility, SphereShadowsGroundBelowIt) {
  const auto s = sphere_on_plane_scene();
  const auto vis = analytic_visibility(s, 0, {0, 1, 0});
  std::size_t dark = 0;
  for (double v : vis.samples()) {
    EXPECT_TRUE(v == 0.0 || v == 1.0);
    dark += v == 0.0;
  }
  EXPECT_GT(dark, 0u);
}

TEST(FlickerSequence, NoiselessSamplesAreIdenticalAndFlowsExact) {
  testutil::TempDir dir("flicker");
  auto spec = flicker_scene(3, 0.0, 3);
  const auto m = make_flicker_sequence(spec, dir.path());
  EXPECT_EQ(m.frame_count, 3);
  EXPECT_EQ(m.sample_count, 3);
  for (const auto& f : m.frames) {
    const auto first = mapio::read_pfm(f.roughness_samples[0]);
    for (const auto& p : f.roughness_samples) EXPECT_EQ(mapio::read_pfm(p), first);
    EXPECT_EQ(first, mapio::read_pfm(*f.roughness_truth));
  }
  for (int t = 0; t < 2; ++t) {
    const auto fwd = mapio::read_flo(m.forward_flows[t]);
    const auto bwd = mapio::read_flo(m.backward_flows[t]);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        EXPECT_EQ(fwd(x, y, 0), 1.0);
        EXPECT_EQ(fwd(x, y, 1), 0.0);
      }
    const auto fg = BinaryMask::threshold(mapio::read_pfm(m.frames[t + 1].alpha), 0.5);
    const auto mask = fb_consistency_mask(fwd, bwd, fg);
    // Persistent foreground: foreground in frame t+1 at the forward target.
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x + 1 < spec.width; ++x)
        if (fg.test(x + 1, y)) {
          EXPECT_TRUE(mask.test(x, y));
        }
  }
}

TEST(FlickerSequence, ContentMovesWithTheFlow) {
  testutil::TempDir dir("flicker_move");
  const auto m = make_flicker_sequence(flicker_scene(2, 0.0, 1), dir.path());
  const auto d0 = mapio::read_pfm(m.frames[0].depth);
  const auto d1 = mapio::read_pfm(m.frames[1].depth);
  const auto warped = backward_warp(d1, mapio::read_flo(m.forward_flows[0]));
  for (int y = 0; y < d0.height(); ++y)
    for (int x = 0; x + 1 < d0.width(); ++x) EXPECT_NEAR(warped(x, y), d0(x, y), 1e-5);
}

TEST(FlickerSequence, NoisySamplesDifferAndStayInRange) {
  testutil::TempDir dir("flicker_noise");
  const auto m = make_flicker_sequence(flicker_scene(1, 0.2, 2), dir.path());
  const auto a = mapio::read_pfm(m.frames[0].metallic_samples[0]);
  const auto b = mapio::read_pfm(m.frames[0].metallic_samples[1]);
  EXPECT_NE(a, b);
  for (double v : a.samples()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_NO_THROW(mapio::load_manifest(dir / "manifest.json"));
}

TEST(ParseScene, OverridesAndErrors) {
  const auto s = parse_scene(nlohmann::json::parse(R"({
    "width": 20, "height": 10, "frames": 2, "noise": 0.05, "translation": [0.5, 0],
    "camera": {"fx": 30, "fy": 30, "cx": 9.5, "cy": 4.5, "pitch_deg": 30},
    "objects": [{"type": "sphere", "center": [0, 0, 0], "radius": 0.5, "roughness": 0.2}],
    "environment": {"type": "constant", "radiance": [1, 1, 1]}
  })"));
  EXPECT_EQ(s.width, 20);
  EXPECT_EQ(s.frames, 2);
  EXPECT_EQ(s.translate_x, 0.5);
  ASSERT_EQ(s.objects.size(), 1u);
  EXPECT_EQ(s.objects[0].material.roughness, 0.2);
  EXPECT_NO_THROW(s.validate());
  EXPECT_THROW(parse_scene(nlohmann::json::parse(R"({"objects": [{"type": "cube"}]})")),
               ParameterError);
  EXPECT_THROW(parse_scene(nlohmann::json::parse(R"({"translation": [1]})")), ParameterError);
}

TEST(ScreenSpaceShadow, AgreesWithAnalyticSphereOcclusion) {
  const auto s = sphere_on_plane_scene();
  const auto r = rasterize_gbuffer(s, 0);
  const auto& g = r.gbuffer;
  const Vec3 l = normalize(Vec3{-0.6, 0.75, 0.3});
  const auto truth = analytic_visibility(s, 0, l);
  // March length and thickness matched to the 0.35 m sphere.
  shade::ShadowConfig cfg;
  cfg.thickness = 0.8;
  cfg.norm_count = 8;
  cfg.max_dist = 1.0;
  const auto sh = shade::shadow_raymarch(shade::unproject(g.depth, r.camera), g.depth, g.alpha,
                                         r.camera, r.camera.to_view(l), cfg);
  double mad = 0, umbra = 0;
  int n = 0, un = 0;
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      if (g.alpha(x, y) <= 0.5) continue;
      mad += std::abs(sh(x, y) - truth(x, y));
      ++n;
      if (truth(x, y) == 0) umbra += sh(x, y), ++un;
    }
  ASSERT_GT(un, 50);
  EXPECT_LE(mad / n, 0.15);
  EXPECT_LT(umbra / un, 0.5);
}
