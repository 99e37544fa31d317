#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfkd/core/tensor.hpp"

namespace dfkd {

// Float images stored contiguously as [count, channels, height, width] with
// integer labels.
struct LabeledImages {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_numel() const { return channels * height * width; }
  std::span<const double> image(std::size_t i) const;
  void append(std::span<const double> image, int label);
  // [indices.size(), C, H, W]
  Tensor batch(std::span<const std::size_t> indices) const;
  Tensor all() const;
  LabeledImages subset(std::span<const std::size_t> indices) const;
};

// 8-bit raster, interleaved channels (1 = gray, 3 = RGB).
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> bytes;

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) { return bytes[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return bytes[(y * width + x) * channels + c];
  }
};

// Binary PGM (P5) for one channel, PPM (P6) for three.
void write_pnm(const std::string& path, const Raster& raster);
Raster read_pnm(const std::string& path);
std::string encode_pnm(const Raster& raster);
Raster decode_pnm(const std::string& bytes);

// Planar [C,H,W] values in [lo,hi] to an 8-bit raster (clamped, rounded).
Raster to_raster(std::span<const double> chw, std::size_t channels, std::size_t height, std::size_t width,
                 double lo = -1.0, double hi = 1.0);
// Tiles images row-major into a grid with one-pixel gaps.
Raster tile_rasters(const std::vector<Raster>& tiles, std::size_t columns);

// IDX (MNIST-style) files supplied locally by the user.
LabeledImages read_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace dfkd
