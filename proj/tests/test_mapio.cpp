#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "json.hpp"
#include "relit/mapio.hpp"
#include "test_util.hpp"

using namespace relit;
using namespace relit::mapio;

namespace {

ImagePlane random_float_image(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_real_distribution<float> u(-10.f, 10.f);
  ImagePlane img(w, h, c);
  for (double& v : img.samples()) v = u(rng);
  return img;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Pfm, SinglePixelGray) {
  auto b = bytes_of("Pf\n1 1\n-1.0\n");
  store_f32le(b, 0.5f);
  const auto img = decode_pfm(b);
  EXPECT_EQ(img.width(), 1);
  EXPECT_EQ(img.channels(), 1);
  EXPECT_EQ(img(0, 0), 0.5);
}

TEST(Pfm, BigEndianAndRowOrder) {
  auto b = bytes_of("Pf\n1 2\n1.0\n");
  for (float f : {1.0f, 2.0f}) {  // bottom row first
    const auto u = std::bit_cast<std::uint32_t>(f);
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(u >> s));
  }
  const auto img = decode_pfm(b);
  EXPECT_EQ(img(0, 1), 1.0);
  EXPECT_EQ(img(0, 0), 2.0);
}

TEST(Pfm, RoundTripIsBitExact) {
  testutil::TempDir dir("pfm");
  std::mt19937_64 rng(1);
  for (int c : {1, 3}) {
    const auto img = random_float_image(rng, 16, 16, c);
    write_pfm(img, dir / "x.pfm");
    EXPECT_EQ(read_pfm(dir / "x.pfm"), img);
  }
}

TEST(Pfm, BadMagicFailsAtOffsetZero) {
  try {
    decode_pfm(bytes_of("PG\n1 1\n-1.0\n\0\0\0\0"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Pfm, TruncatedAndNonFiniteScaleFail) {
  auto b = bytes_of("PF\n2 2\n-1.0\n");
  store_f32le(b, 1.0f);
  EXPECT_THROW(decode_pfm(b), ParseError);
  EXPECT_THROW(decode_pfm(bytes_of("Pf\n1 1\nnan\n\0\0\0\0")), ParseError);
  EXPECT_THROW(decode_pfm(bytes_of("Pf\n1 1\ninf\n\0\0\0\0")), ParseError);
  EXPECT_THROW(decode_pfm(bytes_of("Pf\n0 1\n-1.0\n")), ParseError);
}

TEST(Pfm, RejectsUnsupportedChannelCount) {
  EXPECT_THROW(encode_pfm(ImagePlane(2, 2, 2)), ParameterError);
}

TEST(Flo, TwoPixelFixture) {
  std::vector<std::uint8_t> b;
  store_f32le(b, kFloMagic);
  store_u32le(b, 2);
  store_u32le(b, 1);
  for (float f : {1.f, 0.f, 0.f, -1.f}) store_f32le(b, f);
  const auto flow = decode_flo(b);
  EXPECT_EQ(flow.u(0, 0), 1.0);
  EXPECT_EQ(flow.v(0, 0), 0.0);
  EXPECT_EQ(flow.u(1, 0), 0.0);
  EXPECT_EQ(flow.v(1, 0), -1.0);
}

TEST(Flo, RoundTripIsBitExact) {
  testutil::TempDir dir("flo");
  std::mt19937_64 rng(2);
  const FlowField flow(random_float_image(rng, 8, 8, 2));
  write_flo(flow, dir / "x.flo");
  EXPECT_EQ(read_flo(dir / "x.flo"), flow);
}

TEST(Flo, MagicAndSizeErrors) {
  std::vector<std::uint8_t> b;
  store_f32le(b, 1.0f);
  store_u32le(b, 1);
  store_u32le(b, 1);
  store_f32le(b, 0.f);
  store_f32le(b, 0.f);
  EXPECT_THROW(decode_flo(b), ParseError);
  auto good = encode_flo(FlowField(3, 2));
  good.pop_back();
  EXPECT_THROW(decode_flo(good), ParseError);
  good.push_back(0);
  good.push_back(0);
  EXPECT_THROW(decode_flo(good), ParseError);
}

TEST(Radiance, RgbeConventions) {
  const auto one = rgbe_to_linear({128, 128, 128, 129});
  for (double v : one) EXPECT_EQ(v, 1.0);
  for (double v : rgbe_to_linear({0, 0, 0, 0})) EXPECT_EQ(v, 0.0);
  for (double v : rgbe_to_linear({200, 10, 3, 0})) EXPECT_EQ(v, 0.0);
}

TEST(Radiance, EncodeDecodeWithinQuantizationStep) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-3, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double r = u(rng), g = u(rng), b = u(rng);
    const auto back = rgbe_to_linear(linear_to_rgbe(r, g, b));
    const double m = std::max({r, g, b});
    for (int c = 0; c < 3; ++c)
      EXPECT_LE(std::abs(back[c] - std::array{r, g, b}[c]), m * std::ldexp(1.0, -7));
  }
}

TEST(Radiance, RleFixtureMatchesUncompressedTwin) {
  const int w = 64, h = 32;
  std::mt19937_64 rng(4);
  std::vector<Rgbe> px(w * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // Long constant spans mixed with noise exercise both run kinds.
      const bool flat = (x / 8 + y) % 3 == 0;
      const double v = flat ? 0.25 * (1 + y % 4) : std::uniform_real_distribution<>(0, 4)(rng);
      px[y * w + x] = linear_to_rgbe(v, 0.5 * v, flat ? 0.0 : 1.0);
    }
  const auto rle = testutil::encode_hdr(px, w, h, true);
  const auto flat = testutil::encode_hdr(px, w, h, false);
  ASSERT_LT(rle.size(), flat.size());
  const auto a = decode_radiance_hdr(rle), b = decode_radiance_hdr(flat);
  EXPECT_EQ(a.width(), w);
  EXPECT_EQ(a.height(), h);
  EXPECT_EQ(a, b);
  const auto p = rgbe_to_linear(px[5 * w + 7]);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(a(7, 5, c), p[c]);
}

TEST(Radiance, OldStyleRunsDecode) {
  std::string head = "#?RGBE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 4\n";
  std::vector<std::uint8_t> b(head.begin(), head.end());
  for (int v : {128, 64, 32, 130, 1, 1, 1, 3}) b.push_back(static_cast<std::uint8_t>(v));
  const auto img = decode_radiance_hdr(b);
  for (int x = 0; x < 4; ++x) EXPECT_EQ(img(x, 0, 0), 2.0);
}

TEST(Radiance, CorruptInputsFailWithoutPartialOutput) {
  const int w = 16, h = 2;
  std::vector<Rgbe> px(w * h, Rgbe{10, 20, 30, 130});
  const auto good = testutil::encode_hdr(px, w, h, true);
  EXPECT_NO_THROW(decode_radiance_hdr(good));

  auto bad_format = good;
  const std::string key = "32-bit_rle_rgbe";
  auto it = std::search(bad_format.begin(), bad_format.end(), key.begin(), key.end());
  *(it + 7) = 'x';
  EXPECT_THROW(decode_radiance_hdr(bad_format), ParseError);

  auto bad_sig = good;
  bad_sig[1] = '!';
  EXPECT_THROW(decode_radiance_hdr(bad_sig), ParseError);

  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(decode_radiance_hdr(truncated), ParseError);

  // Scanline header announcing the wrong width.
  auto mismatch = good;
  const std::string res = "+X 16\n";
  auto r = std::search(mismatch.begin(), mismatch.end(), res.begin(), res.end());
  const std::size_t scan = (r - mismatch.begin()) + res.size();
  mismatch[scan + 3] = 15;
  EXPECT_THROW(decode_radiance_hdr(mismatch), ParseError);

  // A run longer than the remaining scanline.
  auto overflow = good;
  overflow[scan + 4] = 128 + 100;
  EXPECT_THROW(decode_radiance_hdr(overflow), ParseError);

  std::string odd = "#?RADIANCE\n\n+Y 2 +X 2\n";
  EXPECT_THROW(decode_radiance_hdr({odd.begin(), odd.end()}), ParseError);
}

TEST(Png, QuantizationAndRoundTrip) {
  testutil::TempDir dir("png");
  ImagePlane img(2, 1, 1);
  img(0, 0) = 0.5, img(1, 0) = 2.0;
  write_png(img, dir / "a.png");
  const auto back = read_png(dir / "a.png");
  EXPECT_EQ(back(0, 0), 128 / 255.0);
  EXPECT_EQ(back(1, 0), 1.0);

  std::mt19937_64 rng(5);
  for (int c = 1; c <= 4; ++c) {
    ImagePlane q(7, 5, c);
    for (double& v : q.samples()) v = std::uniform_int_distribution<int>(0, 65535)(rng) / 65535.0;
    write_png(q, dir / "b.png", 16);
    EXPECT_EQ(read_png(dir / "b.png"), q) << c;
  }
}

TEST(Png, RejectsGarbage) {
  testutil::TempDir dir("png_bad");
  write_file(dir / "x.png", bytes_of("not a png at all"));
  EXPECT_THROW(read_png(dir / "x.png"), DataError);
  EXPECT_THROW(write_png(ImagePlane(1, 1, 1), dir / "y.png", 12), ParameterError);
}

TEST(ColorMaps, PngIsLinearizedPfmIsNot) {
  testutil::TempDir dir("color");
  ImagePlane img(1, 1, 3, 1.0);
  img(0, 0, 1) = 0.0;
  img(0, 0, 2) = 128 / 255.0;
  write_png(img, dir / "c.png");
  const auto lin = load_color_map(dir / "c.png");
  EXPECT_EQ(lin(0, 0, 0), 1.0);
  EXPECT_EQ(lin(0, 0, 1), 0.0);
  EXPECT_NEAR(lin(0, 0, 2), 0.2158605, 1e-6);
  write_pfm(img, dir / "c.pfm");
  EXPECT_NEAR(load_color_map(dir / "c.pfm")(0, 0, 2), 128 / 255.0, 1e-7);
  EXPECT_THROW(load_map(dir / "c.exr"), DataError);
}

namespace {

// Minimal on-disk sequence with T frames and K samples; returns the manifest JSON.
nlohmann::json make_sequence(const std::filesystem::path& dir, int t, int k) {
  ImagePlane one(4, 3, 1, 1.0), rgb(4, 3, 3, 0.5);
  write_pfm(rgb, dir / "env.pfm");
  nlohmann::json frames = nlohmann::json::array();
  for (int i = 0; i < t; ++i) {
    const std::string p = "f" + std::to_string(i) + "_";
    for (const char* n : {"albedo", "normal"}) write_pfm(rgb, dir / (p + n + ".pfm"));
    for (const char* n : {"depth", "alpha"}) write_pfm(one, dir / (p + n + ".pfm"));
    nlohmann::json f = {{"albedo", p + "albedo.pfm"},
                        {"depth", p + "depth.pfm"},
                        {"normal", p + "normal.pfm"},
                        {"alpha", p + "alpha.pfm"}};
    for (const char* m : {"roughness", "metallic"}) {
      nlohmann::json list = nlohmann::json::array();
      for (int s = 0; s < k; ++s) {
        const std::string name = p + m + std::to_string(s) + ".pfm";
        write_pfm(one, dir / name);
        list.push_back(name);
      }
      f[std::string(m) + "_samples"] = list;
    }
    frames.push_back(f);
  }
  nlohmann::json fwd = nlohmann::json::array(), bwd = nlohmann::json::array();
  for (int i = 0; i + 1 < t; ++i) {
    write_flo(FlowField(4, 3), dir / ("fwd" + std::to_string(i) + ".flo"));
    write_flo(FlowField(4, 3), dir / ("bwd" + std::to_string(i) + ".flo"));
    fwd.push_back("fwd" + std::to_string(i) + ".flo");
    bwd.push_back("bwd" + std::to_string(i) + ".flo");
  }
  return {{"frame_count", t},
          {"sample_count", k},
          {"camera",
           {{"fx", 10.0},
            {"fy", 10.0},
            {"cx", 1.5},
            {"cy", 1.0},
            {"rotation", {1, 0, 0, 0, 1, 0, 0, 0, 1}}}},
          {"environment", "env.pfm"},
          {"frames", frames},
          {"flows", {{"forward", fwd}, {"backward", bwd}}}};
}

void save(const nlohmann::json& j, const std::filesystem::path& p) {
  std::ofstream(p) << j.dump(2);
}

std::vector<std::string> violations_of(const std::filesystem::path& p) {
  try {
    load_manifest(p);
  } catch (const ValidationError& e) {
    return e.violations();
  }
  return {};
}

bool any_contains(const std::vector<std::string>& v, const std::string& s) {
  return std::any_of(v.begin(), v.end(),
                     [&](const auto& x) { return x.find(s) != std::string::npos; });
}

}  // namespace

TEST(Manifest, MinimalSingleFrameLoads) {
  testutil::TempDir dir("manifest1");
  save(make_sequence(dir.path(), 1, 1), dir / "m.json");
  const auto m = load_manifest(dir / "m.json");
  EXPECT_EQ(m.frame_count, 1);
  EXPECT_EQ(m.sample_count, 1);
  EXPECT_TRUE(m.forward_flows.empty());
  EXPECT_TRUE(m.backward_flows.empty());
  EXPECT_TRUE(m.frames[0].albedo.is_absolute());
  EXPECT_EQ(m.intrinsics_for(0).cx, 1.5);
}

TEST(Manifest, FlowCountMismatchIsReported) {
  testutil::TempDir dir("manifest2");
  auto j = make_sequence(dir.path(), 3, 2);
  j["flows"]["forward"].erase(1);
  save(j, dir / "m.json");
  const auto v = violations_of(dir / "m.json");
  EXPECT_TRUE(any_contains(v, "expected 2 forward flows")) << testing::PrintToString(v);
}

TEST(Manifest, ReportsEveryViolation) {
  testutil::TempDir dir("manifest3");
  auto j = make_sequence(dir.path(), 2, 2);
  std::filesystem::remove(dir / "f1_albedo.pfm");
  j["camera"]["rotation"] = {1, 0, 0, 0, 2, 0, 0, 0, 1};
  j["sample_count"] = 3;
  save(j, dir / "m.json");
  const auto v = violations_of(dir / "m.json");
  EXPECT_TRUE(any_contains(v, "f1_albedo.pfm"));
  EXPECT_TRUE(any_contains(v, "orthonormal"));
  EXPECT_TRUE(any_contains(v, "expected 3 samples"));
  EXPECT_GE(v.size(), 3u);
}

TEST(Manifest, MissingFileAndBadJson) {
  testutil::TempDir dir("manifest4");
  EXPECT_THROW(load_manifest(dir / "nope.json"), ValidationError);
  std::ofstream(dir / "bad.json") << "{\"frame_count\": 1,";
  EXPECT_THROW(load_manifest(dir / "bad.json"), ParseError);
}

TEST(Manifest, WriteThenLoadRoundTrips) {
  testutil::TempDir dir("manifest5");
  save(make_sequence(dir.path(), 3, 2), dir / "m.json");
  const auto m = load_manifest(dir / "m.json");
  write_manifest(m, dir / "copy.json");
  const auto m2 = load_manifest(dir / "copy.json");
  EXPECT_EQ(m2.frames[2].metallic_samples, m.frames[2].metallic_samples);
  EXPECT_EQ(m2.backward_flows, m.backward_flows);
  EXPECT_EQ(m2.rotation, m.rotation);
}
