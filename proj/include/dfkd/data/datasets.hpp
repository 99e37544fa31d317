#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dfkd/core/keyvalue.hpp"
#include "dfkd/core/rng.hpp"
#include "dfkd/data/images.hpp"

namespace dfkd {

// Shape families for procedural classification images.
const std::vector<std::string>& classification_families();

struct ClassificationDatasetSpec {
  std::size_t num_classes = 3;
  std::size_t samples_per_class = 200;
  std::size_t image_size = 16;
  std::size_t channels = 1;
  // One family per class; empty means the first num_classes families.
  std::vector<std::string> families;
  double noise = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
  std::vector<std::string> resolved_families() const;
  KeyValues to_kv() const;
  static ClassificationDatasetSpec from_kv(const KeyValues& kv);
};

struct DatasetSplits {
  LabeledImages train;
  LabeledImages val;
  LabeledImages test;
};

// Renders one image in [-1, 1] for the given family.
std::vector<double> render_classification_image(const std::string& family, std::size_t size, std::size_t channels,
                                                double noise, Rng& rng);

// Deterministic for a seed; stratified 70/15/15 split per class.
DatasetSplits gen_classification_dataset(const ClassificationDatasetSpec& spec);

// Per-class index split: floor(0.7 n), floor(0.15 n), remainder.
struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};
SplitIndices stratified_split(const std::vector<int>& labels, std::size_t num_classes, Rng rng);

// Absolute pixel box (x, y, w, h), COCO convention.
using BoxXYWH = std::array<double, 4>;
// Normalized center box (cx, cy, w, h).
using BoxCXCYWH = std::array<double, 4>;

struct DetectionSample {
  Raster image;  // RGB
  std::vector<int> labels;
  std::vector<BoxXYWH> boxes;  // ordered by box center x, then y
};

struct DetectionSceneSpec {
  std::size_t canvas = 64;
  std::size_t num_classes = 3;
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  std::size_t min_size = 12;
  std::size_t max_size = 22;
  std::size_t images = 240;
  double noise = 6.0;  // background pixel jitter, 8-bit units
  std::uint64_t seed = 11;

  void validate() const;
  KeyValues to_kv() const;
  static DetectionSceneSpec from_kv(const KeyValues& kv);
};

const std::vector<std::string>& detection_class_names();

DetectionSample render_detection_scene(const DetectionSceneSpec& spec, Rng& rng);

struct DetectionSplits {
  std::vector<DetectionSample> train, val, test;
};
// Scene i uses the child stream i of the seed; split 70/15/15 by index.
DetectionSplits gen_detection_dataset(const DetectionSceneSpec& spec);

BoxCXCYWH to_normalized_cxcywh(const BoxXYWH& box, double image_width, double image_height);
BoxXYWH from_normalized_cxcywh(const BoxCXCYWH& box, double image_width, double image_height);

}  // namespace dfkd
