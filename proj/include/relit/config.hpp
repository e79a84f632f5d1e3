#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>

#include "json.hpp"
#include "relit/ensemble.hpp"
#include "relit/error.hpp"
#include "relit/losses.hpp"
#include "relit/mapio/bytes.hpp"
#include "relit/metrics.hpp"
#include "relit/raster.hpp"
#include "relit/shade.hpp"
#include "relit/stabilize.hpp"

namespace relit {

struct ShadingConfig {
  int n_theta = 32;
  int n_phi = 64;
  double exposure = 1.0;
  double gamma = 2.2;
  int dump_lights = 1;  // shadow maps of the N brightest light samples with --dump-intermediates
};

struct EnsembleConfig {
  int patch = ensemble::kDefaultPatch;
  int overlap = ensemble::kDefaultOverlap;
};

struct MetricsConfig {
  double peak = 1.0;
  metrics::SsimParams ssim;
  double flow_abs = kFlowAbsThreshold;
  double flow_rel = kFlowRelThreshold;
};

struct LossesConfig {
  double edge_sigma = losses::kDefaultEdgeSigma;
  double depth_delta = losses::kDefaultDepthDelta;
};

struct Config {
  stabilize::StabilizeConfig stabilize;
  ShadingConfig shading;
  shade::ShadowConfig shadow;
  EnsembleConfig ensemble;
  MetricsConfig metrics;
  LossesConfig losses;
  nlohmann::json synth = nlohmann::json::object();  // scene description, see synth::parse_scene

  void validate() const {
    stabilize.validate();
    shadow.validate();
    if (shading.n_theta < 1 || shading.n_phi < 1)
      throw ParameterError("shading.n_theta and shading.n_phi must be >= 1");
    if (!(shading.exposure > 0) || !(shading.gamma > 0))
      throw ParameterError("shading.exposure and shading.gamma must be > 0");
    if (shading.dump_lights < 0) throw ParameterError("shading.dump_lights must be >= 0");
    if (ensemble.patch < 1 || ensemble.overlap < 0 || ensemble.overlap >= ensemble.patch)
      throw ParameterError("ensemble needs patch >= 1 and 0 <= overlap < patch");
    if (!(metrics.peak > 0)) throw ParameterError("metrics.peak must be > 0");
    if (metrics.ssim.window < 1 || metrics.ssim.window % 2 == 0 || !(metrics.ssim.sigma > 0))
      throw ParameterError("metrics.ssim_window must be odd and ssim_sigma > 0");
    if (!(metrics.flow_abs >= 0) || !(metrics.flow_rel >= 0))
      throw ParameterError("metrics flow thresholds must be >= 0");
    if (!(losses.edge_sigma > 0) || !(losses.depth_delta > 0))
      throw ParameterError("losses.edge_sigma and losses.depth_delta must be > 0");
    if (!synth.is_object()) throw ParameterError("synth section must be an object");
  }
};

namespace detail {

class SectionReader {
 public:
  SectionReader(const nlohmann::json& root, const char* name) : name_(name) {
    if (!root.contains(name)) return;
    section_ = &root[name];
    if (!section_->is_object())
      throw ParameterError(std::string("config: '") + name + "' must be an object");
    for (const auto& [k, v] : section_->items()) unknown_.insert(k);
  }

  template <class T>
  void read(const char* key, T& out) {
    if (!section_ || !section_->contains(key)) return;
    unknown_.erase(key);
    try {
      out = (*section_)[key].get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ParameterError(std::string("config: ") + name_ + "." + key + " has the wrong type");
    }
  }

  void finish() const {
    if (!unknown_.empty())
      throw ParameterError(std::string("config: unknown key ") + name_ + "." + *unknown_.begin());
  }

 private:
  const char* name_;
  const nlohmann::json* section_ = nullptr;
  std::set<std::string> unknown_;
};

}  // namespace detail

inline Config parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("config root must be a JSON object");
  static const std::set<std::string> sections{"stabilize", "shading", "shadow", "ensemble",
                                              "metrics",   "losses",  "synth"};
  for (const auto& [k, v] : j.items())
    if (!sections.count(k)) throw ParameterError("config: unknown section '" + k + "'");

  Config c;
  {
    detail::SectionReader r(j, "stabilize");
    auto& s = c.stabilize;
    r.read("lambda1", s.lambda1);
    r.read("lambda2", s.lambda2);
    r.read("delta", s.delta);
    r.read("epsilon", s.epsilon);
    r.read("iterations", s.iterations);
    r.read("learning_rate", s.learning_rate);
    r.read("beta1", s.beta1);
    r.read("beta2", s.beta2);
    r.read("adam_epsilon", s.adam_epsilon);
    r.read("window", s.window);
    r.read("window_overlap", s.window_overlap);
    r.read("monotone", s.monotone);
    r.read("max_backtracks", s.max_backtracks);
    r.finish();
  }
  {
    detail::SectionReader r(j, "shading");
    r.read("n_theta", c.shading.n_theta);
    r.read("n_phi", c.shading.n_phi);
    r.read("exposure", c.shading.exposure);
    r.read("gamma", c.shading.gamma);
    r.read("dump_lights", c.shading.dump_lights);
    r.finish();
  }
  {
    detail::SectionReader r(j, "shadow");
    r.read("enabled", c.shadow.enabled);
    r.read("steps", c.shadow.steps);
    r.read("max_dist", c.shadow.max_dist);
    r.read("bias", c.shadow.bias);
    r.read("thickness", c.shadow.thickness);
    r.read("norm_count", c.shadow.norm_count);
    r.finish();
  }
  {
    detail::SectionReader r(j, "ensemble");
    r.read("patch", c.ensemble.patch);
    r.read("overlap", c.ensemble.overlap);
    r.finish();
  }
  {
    detail::SectionReader r(j, "metrics");
    r.read("peak", c.metrics.peak);
    r.read("ssim_window", c.metrics.ssim.window);
    r.read("ssim_sigma", c.metrics.ssim.sigma);
    r.read("flow_abs", c.metrics.flow_abs);
    r.read("flow_rel", c.metrics.flow_rel);
    r.finish();
  }
  {
    detail::SectionReader r(j, "losses");
    r.read("edge_sigma", c.losses.edge_sigma);
    r.read("depth_delta", c.losses.depth_delta);
    r.finish();
  }
  if (j.contains("synth")) c.synth = j["synth"];
  c.validate();
  return c;
}

inline Config load_config(const std::filesystem::path& path) {
  const auto bytes = mapio::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError("config " + path.string() + " is not valid JSON (byte " +
                         std::to_string(e.byte) + ")");
  }
  return parse_config(j);
}

// Fully resolved configuration, defaults included.
inline nlohmann::json config_to_json(const Config& c) {
  const auto& s = c.stabilize;
  return {
      {"stabilize",
       {{"lambda1", s.lambda1},
        {"lambda2", s.lambda2},
        {"delta", s.delta},
        {"epsilon", s.epsilon},
        {"iterations", s.iterations},
        {"learning_rate", s.learning_rate},
        {"beta1", s.beta1},
        {"beta2", s.beta2},
        {"adam_epsilon", s.adam_epsilon},
        {"window", s.window},
        {"window_overlap", s.window_overlap},
        {"monotone", s.monotone},
        {"max_backtracks", s.max_backtracks}}},
      {"shading",
       {{"n_theta", c.shading.n_theta},
        {"n_phi", c.shading.n_phi},
        {"exposure", c.shading.exposure},
        {"gamma", c.shading.gamma},
        {"dump_lights", c.shading.dump_lights}}},
      {"shadow",
       {{"enabled", c.shadow.enabled},
        {"steps", c.shadow.steps},
        {"max_dist", c.shadow.max_dist},
        {"bias", c.shadow.bias},
        {"thickness", c.shadow.thickness},
        {"norm_count", c.shadow.norm_count}}},
      {"ensemble", {{"patch", c.ensemble.patch}, {"overlap", c.ensemble.overlap}}},
      {"metrics",
       {{"peak", c.metrics.peak},
        {"ssim_window", c.metrics.ssim.window},
        {"ssim_sigma", c.metrics.ssim.sigma},
        {"flow_abs", c.metrics.flow_abs},
        {"flow_rel", c.metrics.flow_rel}}},
      {"losses", {{"edge_sigma", c.losses.edge_sigma}, {"depth_delta", c.losses.depth_delta}}},
      {"synth", c.synth},
  };
}

// 64-bit FNV-1a of the canonical (sorted-key) dump of the resolved config.
inline std::string config_hash(const Config& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace relit
