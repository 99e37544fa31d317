#pragma once

#include <array>
#include <string>
#include <vector>

#include "dfkd/core/tensor.hpp"
#include "dfkd/data/datasets.hpp"
#include "dfkd/data/images.hpp"

namespace dfkd {

struct PreprocessConfig {
  std::size_t shortest = 64;  // full scale: 800
  std::size_t longest = 96;   // full scale: 1333
  double rescale = 0.00392156862745098;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  static PreprocessConfig full_scale();
  void validate() const;
};

// Scale so the shortest edge becomes `shortest` unless that pushes the
// longest edge past `longest`, in which case the longest edge is capped.
// Sizes are rounded to the nearest pixel. Returns {height, width}.
std::array<std::size_t, 2> resized_size(std::size_t height, std::size_t width, const PreprocessConfig& config);

// Bilinear resampling with half-pixel centres; an unchanged size copies.
Raster resize_bilinear(const Raster& image, std::size_t height, std::size_t width);

double normalize_pixel(std::uint8_t value, std::size_t channel, const PreprocessConfig& config);

struct DetectionTarget {
  std::vector<int> labels;
  std::vector<BoxCXCYWH> boxes;  // normalized to [0, 1]
};

struct PreprocessedSample {
  Tensor input;  // [3, H', W']
  DetectionTarget target;
  std::size_t original_height = 0;
  std::size_t original_width = 0;
  std::vector<std::string> warnings;  // one entry per rejected box
};

PreprocessedSample preprocess_detection(const Raster& image, const std::vector<int>& labels,
                                        const std::vector<BoxXYWH>& boxes, const PreprocessConfig& config);
PreprocessedSample preprocess_detection(const DetectionSample& sample, const PreprocessConfig& config);

// Normalized target boxes back to pixel (x, y, w, h) in the original image.
std::vector<BoxXYWH> unnormalize_boxes(const DetectionTarget& target, std::size_t original_height,
                                       std::size_t original_width);

}  // namespace dfkd
