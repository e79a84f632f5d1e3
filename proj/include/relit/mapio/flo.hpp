#pragma once

#include <cmath>
#include <filesystem>

#include "relit/image.hpp"
#include "relit/mapio/bytes.hpp"

namespace relit::mapio {

// Middlebury optical flow: float 202021.25 ("PIEH"), int32 width, int32
// height, then row-major interleaved (u, v) float32 pairs, little-endian.
inline constexpr float kFloMagic = 202021.25f;

inline FlowField decode_flo(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw ParseError("truncated .flo header", bytes.size());
  if (load_f32(bytes.data(), true) != kFloMagic) throw ParseError(".flo magic mismatch", 0);
  const auto width = static_cast<std::int32_t>(load_u32le(bytes.data() + 4));
  const auto height = static_cast<std::int32_t>(load_u32le(bytes.data() + 8));
  if (width <= 0 || height <= 0 || width > (1 << 20) || height > (1 << 20))
    throw ParseError(
        ".flo has invalid size " + std::to_string(width) + "x" + std::to_string(height), 4);
  const std::size_t expect = static_cast<std::size_t>(width) * height * 8;
  if (bytes.size() - 12 != expect)
    throw ParseError(".flo payload is " + std::to_string(bytes.size() - 12) + " bytes, expected " +
                         std::to_string(expect),
                     std::min(bytes.size(), 12 + expect));
  FlowField flow(width, height);
  const std::uint8_t* p = bytes.data() + 12;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 2; ++c, p += 4) {
        const float f = load_f32(p, true);
        if (!std::isfinite(f))
          throw ParseError("non-finite flow sample", static_cast<std::size_t>(p - bytes.data()));
        flow(x, y, c) = f;
      }
  return flow;
}

inline std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + flow.size() * 4);
  store_f32le(out, kFloMagic);
  store_u32le(out, static_cast<std::uint32_t>(flow.width()));
  store_u32le(out, static_cast<std::uint32_t>(flow.height()));
  for (double s : flow.samples()) store_f32le(out, static_cast<float>(s));
  return out;
}

inline FlowField read_flo(const std::filesystem::path& path) {
  try {
    return decode_flo(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

inline void write_flo(const FlowField& flow, const std::filesystem::path& path) {
  write_file(path, encode_flo(flow));
}

}  // namespace relit::mapio
