#pragma once

#include <filesystem>
#include <string>

#include "relit/mapio/flo.hpp"
#include "relit/mapio/manifest.hpp"
#include "relit/mapio/pfm.hpp"
#include "relit/mapio/png.hpp"
#include "relit/mapio/radiance.hpp"

namespace relit::mapio {

// Reads a raster by extension: .pfm, .hdr/.pic (Radiance) or .png. PNG
// samples are returned as stored; see load_color_map for color data.
inline ImagePlane load_map(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".pfm") return read_pfm(path);
  if (ext == ".hdr" || ext == ".pic") return read_radiance_hdr(path);
  if (ext == ".png") return read_png(path);
  throw DataError("unsupported map format '" + ext + "' for " + path.string());
}

// Color maps stored as PNG are taken to be sRGB-encoded and are linearized;
// float formats are already linear.
inline ImagePlane load_color_map(const std::filesystem::path& path) {
  ImagePlane img = load_map(path);
  if (path.extension() == ".png")
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        for (int c = 0; c < std::min(3, img.channels()); ++c)
          img(x, y, c) = srgb_to_linear(img(x, y, c));
  return img;
}

}  // namespace relit::mapio
