#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "relit/error.hpp"

namespace relit::mapio {

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
};

struct FrameRecord {
  std::filesystem::path albedo, depth, normal, alpha;
  std::vector<std::filesystem::path> roughness_samples, metallic_samples;
  // Optional per-frame intrinsics; falls back to the sequence camera.
  std::optional<Intrinsics> intrinsics;
  // Optional ground truth and reference renders (synthetic fixtures only).
  std::optional<std::filesystem::path> roughness_truth, metallic_truth, reference;
};

// A captured sequence: per-frame G-buffer inputs, material sample stacks and
// the optical flow between consecutive frames. All paths are absolute after
// loading; relative paths in the file resolve against the manifest directory.
struct SequenceManifest {
  std::filesystem::path directory;
  int frame_count = 0;
  int sample_count = 0;
  Intrinsics intrinsics;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // camera-to-world, row-major
  std::filesystem::path environment;
  std::optional<std::filesystem::path> background;
  std::vector<FrameRecord> frames;
  std::vector<std::filesystem::path> forward_flows;   // t -> t+1, on frame t's grid
  std::vector<std::filesystem::path> backward_flows;  // t+1 -> t, on frame t+1's grid

  Intrinsics intrinsics_for(int frame) const {
    return frames.at(frame).intrinsics.value_or(intrinsics);
  }
};

namespace detail {

class ManifestParser {
 public:
  ManifestParser(const nlohmann::json& doc, std::filesystem::path dir)
      : doc_(doc), dir_(std::move(dir)) {}

  SequenceManifest parse() {
    SequenceManifest m;
    m.directory = dir_;
    if (!doc_.is_object()) fail("manifest root must be an object");
    if (!violations_.empty()) throw ValidationError(violations_);

    m.frame_count = integer(doc_, "frame_count", "frame_count");
    m.sample_count = integer(doc_, "sample_count", "sample_count");
    if (m.frame_count < 1) fail("frame_count must be >= 1");
    if (m.sample_count < 1) fail("sample_count must be >= 1");

    if (auto* cam = member(doc_, "camera", "camera")) {
      m.intrinsics = intrinsics(*cam, "camera");
      if (cam->contains("rotation")) {
        const auto& r = (*cam)["rotation"];
        if (!r.is_array() || r.size() != 9 ||
            !std::all_of(r.begin(), r.end(), [](auto& v) { return v.is_number(); }))
          fail("camera.rotation must be 9 numbers (row-major 3x3)");
        else
          for (int i = 0; i < 9; ++i) m.rotation[i] = r[i].template get<double>();
      }
      check_rotation(m.rotation);
    }
    if (auto p = path(doc_, "environment", "environment")) m.environment = *p;
    if (doc_.contains("background")) m.background = path(doc_, "background", "background");

    if (auto* frames = member(doc_, "frames", "frames")) {
      if (!frames->is_array()) {
        fail("frames must be an array");
      } else {
        if (static_cast<int>(frames->size()) != m.frame_count)
          fail("expected " + std::to_string(m.frame_count) + " frames, found " +
               std::to_string(frames->size()));
        for (std::size_t t = 0; t < frames->size(); ++t)
          m.frames.push_back(
              frame((*frames)[t], "frames[" + std::to_string(t) + "]", m.sample_count));
      }
    }

    const int expect = std::max(0, m.frame_count - 1);
    m.forward_flows = flow_list("forward", expect);
    m.backward_flows = flow_list("backward", expect);

    if (!violations_.empty()) throw ValidationError(violations_);
    return m;
  }

 private:
  void fail(std::string msg) { violations_.push_back(std::move(msg)); }

  const nlohmann::json* member(const nlohmann::json& obj, const char* key,
                               const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
      fail("missing " + where);
      return nullptr;
    }
    return &obj[key];
  }

  int integer(const nlohmann::json& obj, const char* key, const std::string& where) {
    const auto* v = member(obj, key, where);
    if (!v) return 0;
    if (!v->is_number_integer()) {
      fail(where + " must be an integer");
      return 0;
    }
    return v->get<int>();
  }

  double number(const nlohmann::json& obj, const char* key, const std::string& where) {
    const auto* v = member(obj, key, where);
    if (!v) return 0;
    if (!v->is_number()) {
      fail(where + " must be a number");
      return 0;
    }
    return v->get<double>();
  }

  std::optional<std::filesystem::path> path(const nlohmann::json& obj, const char* key,
                                            const std::string& where) {
    const auto* v = member(obj, key, where);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      fail(where + " must be a path string");
      return std::nullopt;
    }
    std::filesystem::path p = v->get<std::string>();
    if (p.is_relative()) p = dir_ / p;
    if (!std::filesystem::is_regular_file(p)) fail(where + ": missing file " + p.string());
    return p;
  }

  std::vector<std::filesystem::path> path_list(const nlohmann::json& obj, const char* key,
                                               const std::string& where) {
    std::vector<std::filesystem::path> out;
    const auto* v = member(obj, key, where);
    if (!v) return out;
    if (!v->is_array()) {
      fail(where + " must be an array of paths");
      return out;
    }
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string w = where + "[" + std::to_string(i) + "]";
      nlohmann::json wrap = {{"p", (*v)[i]}};
      if (auto p = path(wrap, "p", w)) out.push_back(*p);
    }
    return out;
  }

  Intrinsics intrinsics(const nlohmann::json& obj, const std::string& where) {
    Intrinsics k{number(obj, "fx", where + ".fx"), number(obj, "fy", where + ".fy"),
                 number(obj, "cx", where + ".cx"), number(obj, "cy", where + ".cy")};
    if (!(k.fx > 0) || !(k.fy > 0)) fail(where + ": focal lengths must be positive");
    return k;
  }

  void check_rotation(const std::array<double, 9>& r) {
    double worst = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double dot = 0;
        for (int k = 0; k < 3; ++k) dot += r[3 * i + k] * r[3 * j + k];
        worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
      }
    if (!(worst <= 1e-4))
      fail("camera.rotation is not orthonormal (max |R R^T - I| = " + std::to_string(worst) + ")");
  }

  FrameRecord frame(const nlohmann::json& f, const std::string& where, int k) {
    FrameRecord r;
    if (!f.is_object()) {
      fail(where + " must be an object");
      return r;
    }
    r.albedo = path(f, "albedo", where + ".albedo").value_or("");
    r.depth = path(f, "depth", where + ".depth").value_or("");
    r.normal = path(f, "normal", where + ".normal").value_or("");
    r.alpha = path(f, "alpha", where + ".alpha").value_or("");
    r.roughness_samples = path_list(f, "roughness_samples", where + ".roughness_samples");
    r.metallic_samples = path_list(f, "metallic_samples", where + ".metallic_samples");
    for (const char* key : {"roughness_samples", "metallic_samples"}) {
      if (f.contains(key) && f[key].is_array() && static_cast<int>(f[key].size()) != k)
        fail(where + "." + key + ": expected " + std::to_string(k) + " samples, found " +
             std::to_string(f[key].size()));
    }
    if (f.contains("intrinsics")) r.intrinsics = intrinsics(f["intrinsics"], where + ".intrinsics");
    if (f.contains("roughness_truth"))
      r.roughness_truth = path(f, "roughness_truth", where + ".roughness_truth");
    if (f.contains("metallic_truth"))
      r.metallic_truth = path(f, "metallic_truth", where + ".metallic_truth");
    if (f.contains("reference")) r.reference = path(f, "reference", where + ".reference");
    return r;
  }

  std::vector<std::filesystem::path> flow_list(const char* dir, int expect) {
    std::vector<std::filesystem::path> out;
    const auto* flows = member(doc_, "flows", "flows");
    if (!flows) return out;
    out = path_list(*flows, dir, std::string("flows.") + dir);
    if (flows->contains(dir) && (*flows)[dir].is_array() &&
        static_cast<int>((*flows)[dir].size()) != expect)
      fail("expected " + std::to_string(expect) + " " + dir + " flows, found " +
           std::to_string((*flows)[dir].size()));
    return out;
  }

  const nlohmann::json& doc_;
  std::filesystem::path dir_;
  std::vector<std::string> violations_;
};

inline nlohmann::json intrinsics_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

// Path relative to base when it lies underneath it, otherwise unchanged.
inline std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (base.empty()) return p.generic_string();
  auto rel = std::filesystem::relative(p, base);
  if (rel.empty() || *rel.begin() == "..") return p.generic_string();
  return rel.generic_string();
}

}  // namespace detail

// Parses and validates a sequence manifest. Every violation found is reported
// in a single ValidationError.
inline SequenceManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError({"missing manifest file " + path.string()});
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
  const auto dir = std::filesystem::absolute(path).parent_path();
  return detail::ManifestParser(doc, dir).parse();
}

inline nlohmann::json manifest_to_json(const SequenceManifest& m,
                                       const std::filesystem::path& base) {
  using detail::relative_to;
  nlohmann::json cam = detail::intrinsics_json(m.intrinsics);
  cam["rotation"] = m.rotation;
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : m.frames) {
    nlohmann::json j = {{"albedo", relative_to(f.albedo, base)},
                        {"depth", relative_to(f.depth, base)},
                        {"normal", relative_to(f.normal, base)},
                        {"alpha", relative_to(f.alpha, base)}};
    auto list = [&](const std::vector<std::filesystem::path>& v) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& p : v) a.push_back(relative_to(p, base));
      return a;
    };
    j["roughness_samples"] = list(f.roughness_samples);
    j["metallic_samples"] = list(f.metallic_samples);
    if (f.intrinsics) j["intrinsics"] = detail::intrinsics_json(*f.intrinsics);
    if (f.roughness_truth) j["roughness_truth"] = relative_to(*f.roughness_truth, base);
    if (f.metallic_truth) j["metallic_truth"] = relative_to(*f.metallic_truth, base);
    if (f.reference) j["reference"] = relative_to(*f.reference, base);
    frames.push_back(std::move(j));
  }
  nlohmann::json fwd = nlohmann::json::array(), bwd = nlohmann::json::array();
  for (const auto& p : m.forward_flows) fwd.push_back(relative_to(p, base));
  for (const auto& p : m.backward_flows) bwd.push_back(relative_to(p, base));
  nlohmann::json doc = {{"frame_count", m.frame_count},
                        {"sample_count", m.sample_count},
                        {"camera", cam},
                        {"environment", relative_to(m.environment, base)},
                        {"frames", frames},
                        {"flows", {{"forward", fwd}, {"backward", bwd}}}};
  if (m.background) doc["background"] = relative_to(*m.background, base);
  return doc;
}

inline void write_manifest(const SequenceManifest& m, const std::filesystem::path& path) {
  const auto base = std::filesystem::absolute(path).parent_path();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << manifest_to_json(m, base).dump(2) << "\n";
}

}  // namespace relit::mapio
