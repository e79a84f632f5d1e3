#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>

#include "relit/image.hpp"
#include "relit/mapio/bytes.hpp"

namespace relit::mapio {

using Rgbe = std::array<std::uint8_t, 4>;

inline std::array<double, 3> rgbe_to_linear(const Rgbe& p) {
  if (p[3] == 0) return {0.0, 0.0, 0.0};
  const int e = int(p[3]) - 136;
  return {std::ldexp(double(p[0]), e), std::ldexp(double(p[1]), e), std::ldexp(double(p[2]), e)};
}

// Shared-exponent encoding; the largest channel keeps 8 significant bits.
inline Rgbe linear_to_rgbe(double r, double g, double b) {
  const double m = std::max({r, g, b});
  if (!(m >= 1e-32)) return {0, 0, 0, 0};
  int e = 0;
  const double mant = std::frexp(m, &e);
  const double scale = mant * 256.0 / m;
  auto q = [&](double v) { return static_cast<std::uint8_t>(std::clamp(v * scale, 0.0, 255.0)); };
  return {q(r), q(g), q(b), static_cast<std::uint8_t>(e + 128)};
}

namespace detail {

class HdrReader {
 public:
  explicit HdrReader(const std::vector<std::uint8_t>& bytes) : b_(bytes) {}

  ImagePlane decode() {
    const std::string first = line();
    if (first != "#?RADIANCE" && first != "#?RGBE")
      throw ParseError("missing #?RADIANCE signature", 0);
    for (;;) {
      const std::size_t at = pos_;
      const std::string l = line();
      if (l.empty()) break;
      if (l.rfind("FORMAT=", 0) == 0 && l != "FORMAT=32-bit_rle_rgbe")
        throw ParseError("unsupported " + l, at);
    }
    const std::size_t res_at = pos_;
    std::istringstream res(line());
    std::string ya, xa;
    int height = 0, width = 0;
    if (!(res >> ya >> height >> xa >> width) || ya != "-Y" || xa != "+X" || width <= 0 ||
        height <= 0)
      throw ParseError("unsupported resolution line (expected '-Y H +X W')", res_at);

    ImagePlane img(width, height, 3);
    std::vector<Rgbe> scan(width);
    for (int y = 0; y < height; ++y) {
      read_scanline(scan);
      for (int x = 0; x < width; ++x) {
        const auto v = rgbe_to_linear(scan[x]);
        for (int c = 0; c < 3; ++c) img(x, y, c) = v[c];
      }
    }
    return img;
  }

 private:
  std::string line() {
    const std::size_t start = pos_;
    while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
    if (pos_ >= b_.size()) throw ParseError("unterminated header line", start);
    std::string s(b_.begin() + start, b_.begin() + pos_);
    ++pos_;
    return s;
  }

  std::uint8_t byte() {
    if (pos_ >= b_.size()) throw ParseError("truncated scanline data", pos_);
    return b_[pos_++];
  }

  void read_scanline(std::vector<Rgbe>& scan) {
    const int width = static_cast<int>(scan.size());
    if (width < 8 || width > 0x7fff) return read_flat(scan, 0);
    const std::size_t at = pos_;
    Rgbe head{byte(), byte(), byte(), byte()};
    if (head[0] != 2 || head[1] != 2 || (head[2] & 0x80)) {
      scan[0] = head;
      return read_flat(scan, 1);
    }
    if ((int(head[2]) << 8 | head[3]) != width) throw ParseError("scanline width mismatch", at);
    for (int c = 0; c < 4; ++c) {
      int x = 0;
      while (x < width) {
        const std::size_t run_at = pos_;
        int count = byte();
        if (count > 128) {
          count -= 128;
          if (x + count > width) throw ParseError("corrupt RLE run overflows scanline", run_at);
          const std::uint8_t v = byte();
          for (int i = 0; i < count; ++i) scan[x++][c] = v;
        } else {
          if (count == 0 || x + count > width) throw ParseError("corrupt RLE literal run", run_at);
          for (int i = 0; i < count; ++i) scan[x++][c] = byte();
        }
      }
    }
  }

  // Uncompressed pixels with optional old-style (1,1,1,n) repeat runs.
  void read_flat(std::vector<Rgbe>& scan, int start) {
    const int width = static_cast<int>(scan.size());
    int shift = 0;
    for (int x = start; x < width;) {
      const std::size_t at = pos_;
      Rgbe p{byte(), byte(), byte(), byte()};
      if (p[0] == 1 && p[1] == 1 && p[2] == 1) {
        if (x == 0) throw ParseError("old-style run with no preceding pixel", at);
        const long count = long(p[3]) << shift;
        if (x + count > width) throw ParseError("corrupt old-style run", at);
        for (long i = 0; i < count; ++i, ++x) scan[x] = scan[x - 1];
        shift += 8;
      } else {
        scan[x++] = p;
        shift = 0;
      }
    }
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Radiance RGBE (.hdr). Handles flat, old-style RLE and adaptive ("new") RLE
// scanlines. Only the standard -Y H +X W orientation is accepted.
inline ImagePlane decode_radiance_hdr(const std::vector<std::uint8_t>& bytes) {
  return detail::HdrReader(bytes).decode();
}

inline ImagePlane read_radiance_hdr(const std::filesystem::path& path) {
  try {
    return decode_radiance_hdr(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

}  // namespace relit::mapio
