#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <string_view>

#include "relit/image.hpp"
#include "relit/mapio/bytes.hpp"

namespace relit::mapio {

namespace detail {

// Whitespace-delimited ASCII token reader over a byte buffer.
class TokenCursor {
 public:
  TokenCursor(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return pos_; }

  std::string_view next(const char* what) {
    while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) ++pos_;
    if (start == pos_) throw ParseError(std::string("missing ") + what, start);
    return {reinterpret_cast<const char*>(bytes_.data()) + start, pos_ - start};
  }

  // Consumes exactly one whitespace byte terminating the header.
  void end_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw ParseError("header not terminated by whitespace", pos_);
    ++pos_;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

inline int parse_dimension(std::string_view tok, std::size_t offset, const char* what) {
  int v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size() || v <= 0)
    throw ParseError(std::string("invalid ") + what + " '" + std::string(tok) + "'", offset);
  return v;
}

}  // namespace detail

// Portable Float Map. "PF" = 3 channels, "Pf" = 1 channel; the scale sign
// encodes endianness (negative = little); rows are stored bottom to top.
inline ImagePlane decode_pfm(const std::vector<std::uint8_t>& bytes) {
  detail::TokenCursor cur(bytes);
  const auto magic = cur.next("magic");
  int channels = 0;
  if (magic == "PF")
    channels = 3;
  else if (magic == "Pf")
    channels = 1;
  else
    throw ParseError("bad PFM magic '" + std::string(magic) + "'", 0);

  std::size_t off = cur.offset();
  const int width = detail::parse_dimension(cur.next("width"), off, "width");
  off = cur.offset();
  const int height = detail::parse_dimension(cur.next("height"), off, "height");
  off = cur.offset();
  const std::string scale_tok(cur.next("scale"));
  char* end = nullptr;
  const double scale = std::strtod(scale_tok.c_str(), &end);
  if (end != scale_tok.c_str() + scale_tok.size() || !std::isfinite(scale) || scale == 0.0)
    throw ParseError("invalid PFM scale '" + scale_tok + "'", off);
  cur.end_header();

  const bool little = scale < 0;
  const std::size_t payload = cur.offset();
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() - payload < count * 4)
    throw ParseError("truncated PFM payload: need " + std::to_string(count * 4) + " bytes, have " +
                         std::to_string(bytes.size() - payload),
                     bytes.size());

  ImagePlane img(width, height, channels);
  const std::uint8_t* p = bytes.data() + payload;
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c, p += 4) {
        const float f = load_f32(p, little);
        if (!std::isfinite(f))
          throw ParseError("non-finite PFM sample", static_cast<std::size_t>(p - bytes.data()));
        img(x, y, c) = f;
      }
  }
  return img;
}

inline std::vector<std::uint8_t> encode_pfm(const ImagePlane& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw ParameterError("PFM stores 1 or 3 channels, got " + std::to_string(img.channels()));
  const std::string header = std::string(img.channels() == 3 ? "PF" : "Pf") + "\n" +
                             std::to_string(img.width()) + " " + std::to_string(img.height()) +
                             "\n-1.0\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.size() * 4);
  for (int row = 0; row < img.height(); ++row) {
    const int y = img.height() - 1 - row;
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) store_f32le(out, static_cast<float>(img(x, y, c)));
  }
  return out;
}

inline ImagePlane read_pfm(const std::filesystem::path& path) {
  try {
    return decode_pfm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

inline void write_pfm(const ImagePlane& img, const std::filesystem::path& path) {
  write_file(path, encode_pfm(img));
}

}  // namespace relit::mapio
