#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "relit/cli.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace relit;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "relit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Small scene and a cheap configuration shared by the end-to-end tests.
const char* kScene = R"({
  "width": 24, "height": 18, "frames": 3, "samples": 2, "noise": 0.0,
  "translation": [0, 0],
  "camera": {"fx": 25, "fy": 25, "cx": 11.5, "cy": 8.5, "pitch_deg": 50},
  "environment": {"type": "sky", "width": 32, "height": 16}
})";

const char* kConfig = R"({
  "stabilize": {"iterations": 15},
  "shading": {"n_theta": 6, "n_phi": 12},
  "metrics": {"ssim_window": 7}
})";

struct Fixture {
  testutil::TempDir dir{"cli"};
  fs::path config, scene, manifest;

  explicit Fixture(const std::string& scene_json = kScene,
                   const std::string& config_json = kConfig) {
    config = dir / "config.json";
    scene = dir / "scene.json";
    write(config, config_json);
    write(scene, scene_json);
    const auto r = run_cli({"synth", "--scene", scene.string(), "--config", config.string(),
                            "--out", (dir / "run").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    manifest = dir / "run" / "synth" / "manifest.json";
  }
};

std::map<std::string, std::string> metrics_of(const fs::path& csv) {
  std::map<std::string, std::string> m;
  std::istringstream in(slurp(csv));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    m[line.substr(0, a) + "/" + line.substr(a + 1, b - a - 1)] = line.substr(b + 1);
  }
  return m;
}

}  // namespace

TEST(Cli, UnknownFlagIsUsageError) {
  const auto r = run_cli({"aggregate", "--bogus"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_EQ(r.err.rfind("relit-error kind=usage exit=2: ", 0), 0u) << r.err;
}

TEST(Cli, MissingSubcommandIsUsageError) {
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"explode"}).code, cli::kExitUsage);
}

TEST(Cli, VersionAndHelpSucceed) {
  const auto v = run_cli({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find(kVersion), std::string::npos);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, InvalidConfigValueIsUsageError) {
  testutil::TempDir dir("cli_cfg");
  write(dir / "bad.json", R"({"stabilize": {"lambda1": -1}})");
  write(dir / "typo.json", R"({"stabilise": {}})");
  write(dir / "broken.json", "{ not json");
  for (const char* name : {"bad.json", "typo.json", "broken.json"}) {
    const auto r = run_cli({"aggregate", "--config", (dir / name).string(), "--manifest",
                            (dir / "m.json").string(), "--out", (dir / "o").string()});
    EXPECT_EQ(r.code, cli::kExitUsage) << name << r.err;
    EXPECT_NE(r.err.find("kind=usage"), std::string::npos);
  }
}

TEST(Cli, MissingManifestIsDataError) {
  testutil::TempDir dir("cli_missing");
  const auto r = run_cli(
      {"aggregate", "--manifest", (dir / "nope.json").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_EQ(r.err.rfind("relit-error kind=data exit=3: ", 0), 0u) << r.err;
}

TEST(Cli, InvalidManifestListsViolations) {
  testutil::TempDir dir("cli_invalid");
  write(dir / "m.json", R"({"frame_count": 2, "sample_count": 1})");
  const auto r = run_cli(
      {"aggregate", "--manifest", (dir / "m.json").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  // One machine-parsable line followed by indented detail lines.
  std::istringstream lines(r.err);
  std::string first, next;
  std::getline(lines, first);
  EXPECT_EQ(first.rfind("relit-error kind=data exit=3: ", 0), 0u);
  ASSERT_TRUE(std::getline(lines, next));
  EXPECT_EQ(next.rfind("  ", 0), 0u);
}

TEST(Cli, StageWithoutItsInputNamesThePrerequisite) {
  Fixture fx;
  const auto r = run_cli({"stabilize", "--manifest", fx.manifest.string(), "--config",
                          fx.config.string(), "--out", (fx.dir / "fresh").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("aggregate"), std::string::npos) << r.err;
}

TEST(Cli, StaticPipelineProducesCompositeAndInfiniteTemporalPsnr) {
  Fixture fx;
  const fs::path out = fx.dir / "run";
  const auto r = run_cli({"pipeline", "--manifest", fx.manifest.string(), "--config",
                          fx.config.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int t = 0; t < 3; ++t) {
    const auto png = out / "composite" / pipeline::frame_dir(t);
    EXPECT_TRUE(fs::exists(png.string() + ".png"));
  }
  const auto m = metrics_of(out / "metrics" / "metrics.csv");
  for (const char* key : {"all/tpsnr_aggregate_roughness", "all/tpsnr_aggregate_metallic",
                          "all/tpsnr_stabilized_roughness", "all/tpsnr_stabilized_metallic"}) {
    ASSERT_TRUE(m.count(key)) << key;
    EXPECT_EQ(m.at(key), "inf") << key;
  }
  for (const char* stage : {"synth", "aggregate", "stabilize", "relight", "composite", "metrics"}) {
    const auto rec = nlohmann::json::parse(slurp(out / stage / "run_record.json"));
    EXPECT_EQ(rec["stage"], stage);
    EXPECT_EQ(rec["config_hash"].get<std::string>().size(), 16u);
    EXPECT_TRUE(rec["versions"].contains("relit"));
  }
}

TEST(Cli, StabilizeWithoutRegularizersReturnsTheMeans) {
  Fixture fx(R"({"width": 20, "height": 16, "frames": 3, "samples": 3, "noise": 0.1,
                 "translation": [1, 0],
                 "camera": {"fx": 22, "fy": 22, "cx": 9.5, "cy": 7.5, "pitch_deg": 50}})",
             R"({"stabilize": {"lambda1": 0, "lambda2": 0, "iterations": 300}})");
  const fs::path out = fx.dir / "run";
  for (const char* stage : {"aggregate", "stabilize"}) {
    const auto r = run_cli({stage, "--manifest", fx.manifest.string(), "--config",
                            fx.config.string(), "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (int t = 0; t < 3; ++t)
    for (const char* map : {"roughness", "metallic"}) {
      const auto dir = pipeline::frame_dir(t);
      const auto mean = mapio::read_pfm(out / "aggregate" / dir / (std::string(map) + "_mean.pfm"));
      const auto x = mapio::read_pfm(out / "stabilize" / dir / (std::string(map) + ".pfm"));
      for (std::size_t i = 0; i < x.samples().size(); ++i)
        EXPECT_NEAR(x.samples()[i], mean.samples()[i], 1e-3);
    }
}

TEST(Cli, PipelineEqualsChainedStagesAndIsRepeatable) {
  Fixture fx(R"({"width": 20, "height": 16, "frames": 3, "samples": 2, "noise": 0.1,
                 "translation": [1, 0], "mc_spp": 4,
                 "camera": {"fx": 22, "fy": 22, "cx": 9.5, "cy": 7.5, "pitch_deg": 50},
                 "environment": {"type": "sky", "width": 32, "height": 16}})");
  const fs::path a = fx.dir / "chained", b = fx.dir / "whole", c = fx.dir / "again";
  for (const char* stage : {"aggregate", "stabilize", "relight", "composite", "metrics"}) {
    const auto r = run_cli({stage, "--manifest", fx.manifest.string(), "--config",
                            fx.config.string(), "--out", a.string(), "--seed", "7"});
    ASSERT_EQ(r.code, 0) << stage << r.err;
  }
  for (const auto& dir : {b, c}) {
    const auto r =
        run_cli({"pipeline", "--manifest", fx.manifest.string(), "--config", fx.config.string(),
                 "--out", dir.string(), "--seed", "7", "--threads", dir == b ? "1" : "3"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(c / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 20u);
  EXPECT_TRUE(metrics_of(a / "metrics" / "metrics.csv").count("0/psnr_relight_fg"));
}

TEST(Cli, SynthIsDeterministicForAGivenSeed) {
  testutil::TempDir dir("cli_synth");
  write(dir / "scene.json", R"({"width": 16, "height": 12, "frames": 2, "samples": 2,
                                "noise": 0.2})");
  for (const char* o : {"a", "b"}) {
    const auto r = run_cli({"synth", "--scene", (dir / "scene.json").string(), "--seed", "5",
                            "--out", (dir / o).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const auto p = fs::path("synth") / "frames" / "frame_0001" / "roughness_s_0001.pfm";
  EXPECT_EQ(slurp(dir / "a" / p), slurp(dir / "b" / p));
  EXPECT_FALSE(slurp(dir / "a" / p).empty());
}

TEST(Cli, LossesSubcommandPrintsCsv) {
  testutil::TempDir dir("cli_losses");
  ImagePlane depth(6, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 3; x < 6; ++x) depth(x, y) = 1.0;
  mapio::write_pfm(depth, dir / "depth.pfm");
  mapio::write_pfm(ImagePlane(6, 4, 3, 0.5), dir / "normal.pfm");
  mapio::write_pfm(ImagePlane(6, 4, 3, 0.2), dir / "image.pfm");
  write(dir / "cfg.json", R"({"losses": {"depth_delta": 1.0}})");
  const auto r = run_cli({"losses", "--config", (dir / "cfg.json").string(), "--depth",
                          (dir / "depth.pfm").string(), "--normal", (dir / "normal.pfm").string(),
                          "--image", (dir / "image.pfm").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "loss,value\ndepth_tv_huber,2\nnormal_laplacian,0\n");
  EXPECT_EQ(run_cli({"losses"}).code, cli::kExitUsage);
}

TEST(Cli, BinaryExitStatusMatches) {
  const std::string cmd = std::string(RELIT_CLI_PATH) + " aggregate --bogus 2>/dev/null";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), cli::kExitUsage);
}
