#pragma once

#include <string>

#include "formnet/common.hpp"

namespace formnet {

// Grayscale page raster, row-major floats in [0, 1].
struct Raster {
  i64 width = 0;
  i64 height = 0;
  std::vector<double> pixels;

  double at(i64 y, i64 x) const { return pixels[static_cast<size_t>(y * width + x)]; }
  double& at(i64 y, i64 x) { return pixels[static_cast<size_t>(y * width + x)]; }

  static Raster zeros(i64 width, i64 height) {
    Raster r;
    r.width = width;
    r.height = height;
    r.pixels.assign(static_cast<size_t>(width * height), 0.0);
    return r;
  }
};

// Binary PGM (P5) or PPM (P6), 8-bit. PPM converts to gray via
// 0.299 R + 0.587 G + 0.114 B. Values map to v / 255.
Raster load_pnm(const std::string& path);

// Writes P5 with maxval 255; round-trips bytes exactly for images that were
// loaded from 8-bit files.
void save_pgm(const Raster& raster, const std::string& path);

}  // namespace formnet
