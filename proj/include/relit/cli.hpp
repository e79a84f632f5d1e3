#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relit/config.hpp"
#include "relit/losses.hpp"
#include "relit/mapio.hpp"
#include "relit/parallel.hpp"
#include "relit/pipeline.hpp"
#include "relit/synth.hpp"
#include "relit/version.hpp"

namespace relit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

struct Flags {
  std::string config, manifest, out, scene;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool dump = false;
  std::string depth, normal, image;  // `losses` inputs
};

inline void report(std::ostream& err, const char* kind, int code, const std::string& msg,
                   const std::vector<std::string>& detail = {}) {
  std::string line = msg;
  for (char& c : line)
    if (c == '\n') c = ' ';
  err << "relit-error kind=" << kind << " exit=" << code << ": " << line << '\n';
  for (const auto& d : detail) err << "  " << d << '\n';
}

inline int run_losses(const Flags& f, const Config& cfg, std::ostream& out) {
  if (f.depth.empty() && f.normal.empty())
    throw ParameterError("losses needs --depth and/or --normal (with --image)");
  out << "loss,value\n";
  out.precision(17);
  if (!f.depth.empty()) {
    const auto v = losses::depth_tv_huber(mapio::load_map(f.depth), cfg.losses.depth_delta);
    out << "depth_tv_huber," << v.value << '\n';
  }
  if (!f.normal.empty()) {
    if (f.image.empty()) throw ParameterError("--normal needs --image for the edge weights");
    const auto w = losses::edge_weights(mapio::load_color_map(f.image), cfg.losses.edge_sigma);
    const auto v = losses::normal_laplacian_loss(mapio::load_map(f.normal), w);
    out << "normal_laplacian," << v.value << '\n';
  }
  return kExitOk;
}

inline int dispatch(const std::string& cmd, const Flags& f, std::ostream& out) {
  set_thread_count(f.threads);
  const Config cfg =
      f.config.empty() ? parse_config(nlohmann::json::object()) : load_config(f.config);
  if (cmd == "losses") return run_losses(f, cfg, out);

  if (f.out.empty()) throw ParameterError("--out is required");
  pipeline::RunOptions opt{f.out, f.seed.value_or(1), f.dump};

  if (cmd == "synth") {
    synth::SceneSpec scene;
    if (!f.scene.empty()) {
      const auto bytes = mapio::read_file(f.scene);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
      } catch (const nlohmann::json::parse_error& e) {
        throw ParameterError("scene " + f.scene + " is not valid JSON (byte " +
                             std::to_string(e.byte) + ")");
      }
      scene = synth::parse_scene(j, std::filesystem::path(f.scene).parent_path());
    } else {
      scene = synth::parse_scene(cfg.synth);
    }
    if (!f.seed) opt.seed = scene.seed;
    out << pipeline::run_synth(scene, cfg, opt).string() << '\n';
    return kExitOk;
  }

  if (f.manifest.empty()) throw ParameterError("--manifest is required for '" + cmd + "'");
  const auto m = mapio::load_manifest(f.manifest);
  if (cmd == "aggregate")
    pipeline::run_aggregate(m, f.manifest, cfg, opt);
  else if (cmd == "stabilize")
    pipeline::run_stabilize(m, f.manifest, cfg, opt);
  else if (cmd == "relight")
    pipeline::run_relight(m, f.manifest, cfg, opt);
  else if (cmd == "composite")
    pipeline::run_composite(m, f.manifest, cfg, opt);
  else if (cmd == "metrics")
    pipeline::run_metrics(m, f.manifest, cfg, opt);
  else if (cmd == "pipeline")
    pipeline::run_pipeline(m, f.manifest, cfg, opt);
  else
    throw ParameterError("unknown subcommand '" + cmd + "'");
  return kExitOk;
}

// Entry point of the `relit` tool; returns the process exit status.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Relighting toolkit for volumetric-capture frame sequences", "relit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Flags f;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "Generate a synthetic sequence with ground truth and flows"},
      {"aggregate", "Per-frame ensemble mean and normalized deviation of material samples"},
      {"stabilize", "Temporally stabilize the aggregated material maps"},
      {"relight", "Shade the G-buffers under the environment map and tonemap"},
      {"composite", "Alpha-composite the relit foreground over the background"},
      {"metrics", "Temporal and reference metrics as CSV"},
      {"pipeline", "aggregate, stabilize, relight, composite and metrics in order"},
      {"losses", "Evaluate the depth and normal regularizers on PFM maps"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", f.config, "Config JSON")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Random seed recorded with every output");
    sub->add_option("--threads", f.threads, "Worker threads")->check(CLI::Range(1, 1024));
    if (name == "losses") {
      sub->add_option("--depth", f.depth, "Depth map")->check(CLI::ExistingFile);
      sub->add_option("--normal", f.normal, "Normal map")->check(CLI::ExistingFile);
      sub->add_option("--image", f.image, "Image providing the edge weights")
          ->check(CLI::ExistingFile);
      continue;
    }
    sub->add_option("--out", f.out, "Output directory")->required();
    sub->add_flag("--dump-intermediates", f.dump, "Also write debugging intermediates");
    if (name == "synth")
      sub->add_option("--scene", f.scene, "Scene description JSON")->check(CLI::ExistingFile);
    else
      sub->add_option("--manifest", f.manifest, "Sequence manifest JSON")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report(err, "usage", kExitUsage, e.what(), {"run 'relit --help' for usage"});
    return kExitUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return dispatch(cmd, f, out);
  } catch (const ParameterError& e) {
    report(err, "usage", kExitUsage, e.what());
    return kExitUsage;
  } catch (const ValidationError& e) {
    report(err, "data", kExitData,
           "validation failed with " + std::to_string(e.violations().size()) + " violation(s)",
           e.violations());
    return kExitData;
  } catch (const DataError& e) {
    report(err, "data", kExitData, e.what());
    return kExitData;
  } catch (const NumericalError& e) {
    report(err, "numerical", kExitNumerical, e.what());
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    report(err, "data", kExitData, e.what());
    return kExitData;
  }
}

}  // namespace relit::cli
