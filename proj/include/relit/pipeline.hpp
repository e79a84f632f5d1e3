#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "json.hpp"
#include "relit/config.hpp"
#include "relit/ensemble.hpp"
#include "relit/mapio.hpp"
#include "relit/metrics.hpp"
#include "relit/shade.hpp"
#include "relit/stabilize.hpp"
#include "relit/synth.hpp"
#include "relit/version.hpp"

namespace relit::pipeline {

namespace fs = std::filesystem;

struct RunOptions {
  fs::path out;
  std::uint64_t seed = 1;
  bool dump_intermediates = false;
};

inline const char* kMaterialMaps[] = {"roughness", "metallic"};

inline std::string frame_dir(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d", t);
  return buf;
}

inline void write_run_record(const fs::path& dir, const std::string& stage, const Config& cfg,
                             const RunOptions& opt, const fs::path& manifest) {
  fs::create_directories(dir);
  const nlohmann::json rec{
      {"stage", stage},
      {"seed", opt.seed},
      {"config_hash", config_hash(cfg)},
      {"config", config_to_json(cfg)},
      {"manifest",
       manifest.empty() ? std::string() : fs::absolute(manifest).lexically_normal().string()},
      {"versions",
       {{"relit", kVersion},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
        {"libpng", PNG_LIBPNG_VER_STRING},
        {"compiler", __VERSION__}}},
  };
  std::ofstream f(dir / "run_record.json");
  f << rec.dump(2) << '\n';
  if (!f) throw DataError("cannot write " + (dir / "run_record.json").string());
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw DataError("cannot write " + path.string());
}

inline fs::path require_input(const fs::path& p, const char* stage) {
  if (!fs::exists(p))
    throw DataError("missing input " + p.string() + " (run the '" + stage + "' stage first)");
  return p;
}

inline BinaryMask foreground(const mapio::SequenceManifest& m, int t) {
  const ImagePlane alpha = mapio::load_map(m.frames[t].alpha);
  return BinaryMask::threshold(alpha, 0.5, 0);
}

inline shade::Camera camera_for(const mapio::SequenceManifest& m, int t) {
  const auto k = m.intrinsics_for(t);
  return shade::Camera{k.fx, k.fy, k.cx, k.cy, Mat3{m.rotation}};
}

// Validity of the temporal comparison t <-> t+1: forward/backward flow
// consistent, landing on foreground of t+1, and foreground in t itself.
inline std::vector<BinaryMask> validity_masks(const mapio::SequenceManifest& m,
                                              const MetricsConfig& mc,
                                              std::vector<FlowField>* flows_out = nullptr) {
  std::vector<BinaryMask> valid;
  std::optional<BinaryMask> fg_next;
  for (int t = 0; t + 1 < m.frame_count; ++t) {
    const BinaryMask fg_t = fg_next ? *fg_next : foreground(m, t);
    fg_next = foreground(m, t + 1);
    const FlowField fwd = mapio::read_flo(m.forward_flows[t]);
    const FlowField bwd = mapio::read_flo(m.backward_flows[t]);
    require_same_extent(fg_t, fwd, "forward flow");
    BinaryMask v = fb_consistency_mask(fwd, bwd, *fg_next, mc.flow_abs, mc.flow_rel);
    for (int y = 0; y < v.height(); ++y)
      for (int x = 0; x < v.width(); ++x)
        if (!fg_t.test(x, y)) v.set(x, y, false);
    valid.push_back(std::move(v));
    if (flows_out) flows_out->push_back(fwd);
  }
  return valid;
}

// ---------------------------------------------------------------------------
// Stages. Each reads the manifest plus earlier stage outputs under opt.out and
// materializes its own outputs under opt.out/<stage>.

inline fs::path run_synth(const synth::SceneSpec& scene, const Config& cfg, const RunOptions& opt) {
  const fs::path dir = opt.out / "synth";
  synth::SceneSpec s = scene;
  s.seed = opt.seed;
  const auto m = synth::make_flicker_sequence(s, dir);
  write_run_record(dir, "synth", cfg, opt, {});
  return dir / "manifest.json";
}

inline void run_aggregate(const mapio::SequenceManifest& m, const fs::path& manifest_path,
                          const Config& cfg, const RunOptions& opt) {
  const fs::path dir = opt.out / "aggregate";
  for (int t = 0; t < m.frame_count; ++t) {
    const BinaryMask fg = foreground(m, t);
    const fs::path fdir = dir / frame_dir(t);
    fs::create_directories(fdir);
    for (int map = 0; map < 2; ++map) {
      const auto& paths = map == 0 ? m.frames[t].roughness_samples : m.frames[t].metallic_samples;
      std::vector<ImagePlane> samples;
      for (const auto& p : paths) samples.push_back(mapio::load_map(p));
      for (auto& s : samples)
        if (s.channels() != 1)
          throw DataError(std::string(kMaterialMaps[map]) + " samples must be single-channel");
      const auto st = ensemble::ensemble_stats(samples, &fg);
      mapio::write_pfm(st.mean, fdir / (std::string(kMaterialMaps[map]) + "_mean.pfm"));
      mapio::write_pfm(st.sigma_norm, fdir / (std::string(kMaterialMaps[map]) + "_sigma.pfm"));
    }
  }
  write_run_record(dir, "aggregate", cfg, opt, manifest_path);
}

inline void run_stabilize(const mapio::SequenceManifest& m, const fs::path& manifest_path,
                          const Config& cfg, const RunOptions& opt) {
  const fs::path in = opt.out / "aggregate", dir = opt.out / "stabilize";
  std::vector<FlowField> flows;
  const auto valid = validity_masks(m, cfg.metrics, &flows);
  std::ostringstream trace;
  trace << "map,window,iteration,objective\n";
  for (int map = 0; map < 2; ++map) {
    const std::string name = kMaterialMaps[map];
    stabilize::SequenceState s;
    s.valid = valid;
    s.flow = flows;
    for (int t = 0; t < m.frame_count; ++t) {
      s.observed.push_back(
          mapio::read_pfm(require_input(in / frame_dir(t) / (name + "_mean.pfm"), "aggregate")));
      ImagePlane conf =
          mapio::read_pfm(require_input(in / frame_dir(t) / (name + "_sigma.pfm"), "aggregate"));
      for (double& v : conf.samples()) v = 1.0 - v;
      s.confidence.push_back(std::move(conf));
    }
    const auto result = stabilize::solve(s, cfg.stabilize);
    for (int t = 0; t < m.frame_count; ++t) {
      fs::create_directories(dir / frame_dir(t));
      mapio::write_pfm(result.frames[t], dir / frame_dir(t) / (name + ".pfm"));
    }
    char buf[64];
    for (const auto& p : result.trace) {
      std::snprintf(buf, sizeof buf, "%.17g", p.objective);
      trace << name << ',' << p.window << ',' << p.iteration << ',' << buf << '\n';
    }
  }
  fs::create_directories(dir);
  write_text(dir / "trace.csv", trace.str());
  write_run_record(dir, "stabilize", cfg, opt, manifest_path);
}

inline shade::GBuffer load_gbuffer(const mapio::SequenceManifest& m, int t,
                                   const fs::path& material_dir) {
  const auto& f = m.frames[t];
  shade::GBuffer g{
      mapio::load_color_map(f.albedo),
      mapio::load_map(f.depth),
      mapio::load_map(f.normal),
      mapio::read_pfm(require_input(material_dir / frame_dir(t) / "roughness.pfm", "stabilize")),
      mapio::read_pfm(require_input(material_dir / frame_dir(t) / "metallic.pfm", "stabilize")),
      mapio::load_map(f.alpha)};
  if (g.albedo.channels() == 4) {
    ImagePlane rgb(g.albedo.width(), g.albedo.height(), 3);
    for (int y = 0; y < rgb.height(); ++y)
      for (int x = 0; x < rgb.width(); ++x)
        for (int c = 0; c < 3; ++c) rgb(x, y, c) = g.albedo(x, y, c);
    g.albedo = std::move(rgb);
  }
  // Solver output may overshoot [0, 1] slightly.
  for (double& v : g.roughness.samples()) v = std::clamp(v, 0.0, 1.0);
  for (double& v : g.metallic.samples()) v = std::clamp(v, 0.0, 1.0);
  return g;
}

inline void run_relight(const mapio::SequenceManifest& m, const fs::path& manifest_path,
                        const Config& cfg, const RunOptions& opt) {
  const fs::path dir = opt.out / "relight";
  const shade::EnvironmentMap env(mapio::load_map(m.environment));
  const auto lights = shade::env_sample_set(env, cfg.shading.n_theta, cfg.shading.n_phi);
  for (int t = 0; t < m.frame_count; ++t) {
    const shade::GBuffer g = load_gbuffer(m, t, opt.out / "stabilize");
    const shade::Camera cam = camera_for(m, t);
    const ImagePlane hdr = shade::relight(g, cam, lights, cfg.shadow);
    const fs::path fdir = dir / frame_dir(t);
    fs::create_directories(fdir);
    mapio::write_pfm(hdr, fdir / "hdr.pfm");
    mapio::write_png(shade::tonemap_gamma(hdr, cfg.shading.exposure, cfg.shading.gamma),
                     fdir / "ldr.png");
    if (opt.dump_intermediates && cfg.shadow.enabled && cfg.shading.dump_lights > 0) {
      std::vector<std::size_t> order(lights.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      auto power = [&](std::size_t i) {
        const auto& l = lights[i];
        return (l.radiance.x + l.radiance.y + l.radiance.z) * l.solid_angle;
      };
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return power(a) > power(b); });
      const ImagePlane positions = shade::unproject(g.depth, cam);
      const int n = std::min<int>(cfg.shading.dump_lights, static_cast<int>(order.size()));
      for (int i = 0; i < n; ++i) {
        const Vec3 l = cam.to_view(lights[order[i]].direction);
        char name[48];
        std::snprintf(name, sizeof name, "shadow_light%02d.pfm", i);
        mapio::write_pfm(shade::shadow_raymarch(positions, g.depth, g.alpha, cam, l, cfg.shadow),
                         fdir / name);
      }
    }
  }
  write_run_record(dir, "relight", cfg, opt, manifest_path);
}

inline void run_composite(const mapio::SequenceManifest& m, const fs::path& manifest_path,
                          const Config& cfg, const RunOptions& opt) {
  const fs::path in = opt.out / "relight", dir = opt.out / "composite";
  fs::create_directories(dir);
  std::optional<ImagePlane> background;
  if (m.background) {
    ImagePlane bg = mapio::load_map(*m.background);
    if (bg.channels() < 3) throw DataError("background must have at least 3 channels");
    if (bg.channels() == 4) {
      ImagePlane rgb(bg.width(), bg.height(), 3);
      for (int y = 0; y < bg.height(); ++y)
        for (int x = 0; x < bg.width(); ++x)
          for (int c = 0; c < 3; ++c) rgb(x, y, c) = bg(x, y, c);
      bg = std::move(rgb);
    }
    // Float backgrounds are linear radiance; PNG backgrounds are display-ready.
    if (m.background->extension() != ".png")
      bg = shade::tonemap_gamma(bg, cfg.shading.exposure, cfg.shading.gamma);
    background = std::move(bg);
  }
  const shade::EnvironmentMap env =
      background ? shade::EnvironmentMap() : shade::EnvironmentMap(mapio::load_map(m.environment));
  for (int t = 0; t < m.frame_count; ++t) {
    const ImagePlane hdr = mapio::read_pfm(require_input(in / frame_dir(t) / "hdr.pfm", "relight"));
    const ImagePlane alpha = mapio::load_map(m.frames[t].alpha);
    const ImagePlane fg = shade::tonemap_gamma(hdr, cfg.shading.exposure, cfg.shading.gamma);
    const ImagePlane bg =
        background ? *background
                   : shade::tonemap_gamma(shade::render_environment(env, camera_for(m, t),
                                                                    hdr.width(), hdr.height()),
                                          cfg.shading.exposure, cfg.shading.gamma);
    mapio::write_png(shade::composite(fg, alpha, bg), dir / (frame_dir(t) + ".png"));
  }
  write_run_record(dir, "composite", cfg, opt, manifest_path);
}

inline std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// CSV rows "frame,metric,value"; sequence-level metrics use frame "all".
inline void run_metrics(const mapio::SequenceManifest& m, const fs::path& manifest_path,
                        const Config& cfg, const RunOptions& opt) {
  const fs::path dir = opt.out / "metrics";
  fs::create_directories(dir);
  std::ostringstream csv;
  csv << "frame,metric,value\n";
  auto row = [&](const std::string& frame, const std::string& metric, double v) {
    csv << frame << ',' << metric << ',' << format_value(v) << '\n';
  };
  const double peak = cfg.metrics.peak;

  if (m.frame_count >= 2) {
    std::vector<FlowField> flows;
    const auto valid = validity_masks(m, cfg.metrics, &flows);
    struct Source {
      const char* label;
      fs::path dir;
      const char* suffix;
      const char* stage;
    };
    const Source sources[] = {{"aggregate", opt.out / "aggregate", "_mean.pfm", "aggregate"},
                              {"stabilized", opt.out / "stabilize", ".pfm", "stabilize"}};
    for (const auto& src : sources)
      for (const char* map : kMaterialMaps) {
        std::vector<ImagePlane> frames;
        for (int t = 0; t < m.frame_count; ++t)
          frames.push_back(mapio::read_pfm(
              require_input(src.dir / frame_dir(t) / (std::string(map) + src.suffix), src.stage)));
        const std::string base = std::string(src.label) + "_" + map;
        for (int t = 0; t + 1 < m.frame_count; ++t) {
          if (valid[t].count() == 0) continue;
          const ImagePlane warped = backward_warp<double>(frames[t + 1], flows[t]);
          row(std::to_string(t), "tpsnr_" + base, metrics::psnr(frames[t], warped, valid[t], peak));
        }
        row("all", "tpsnr_" + base, metrics::tpsnr(frames, flows, valid, peak));
        row("all", "ppl_" + base, metrics::ppl_proxy(frames, cfg.metrics.ssim));
      }
  }

  for (int t = 0; t < m.frame_count; ++t) {
    if (!m.frames[t].reference) continue;
    const ImagePlane hdr =
        mapio::read_pfm(require_input(opt.out / "relight" / frame_dir(t) / "hdr.pfm", "relight"));
    const ImagePlane ref = mapio::load_map(*m.frames[t].reference);
    const BinaryMask fg = foreground(m, t);
    row(std::to_string(t), "psnr_relight_fg", metrics::psnr(hdr, ref, fg, peak));
    row(std::to_string(t), "ssim_relight", metrics::ssim(hdr, ref, cfg.metrics.ssim));
  }
  write_text(dir / "metrics.csv", csv.str());
  write_run_record(dir, "metrics", cfg, opt, manifest_path);
}

inline void run_pipeline(const mapio::SequenceManifest& m, const fs::path& manifest_path,
                         const Config& cfg, const RunOptions& opt) {
  run_aggregate(m, manifest_path, cfg, opt);
  run_stabilize(m, manifest_path, cfg, opt);
  run_relight(m, manifest_path, cfg, opt);
  run_composite(m, manifest_path, cfg, opt);
  run_metrics(m, manifest_path, cfg, opt);
}

}  // namespace relit::pipeline
