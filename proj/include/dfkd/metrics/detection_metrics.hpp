#pragma once

#include <cstddef>
#include <vector>

#include "dfkd/data/datasets.hpp"

namespace dfkd {

struct ScoredBox {
  int label = 0;
  double score = 0.0;
  BoxXYWH box{};
};

struct GroundTruthBox {
  int label = 0;
  BoxXYWH box{};
};

struct ImageDetections {
  std::vector<ScoredBox> predictions;
  std::vector<GroundTruthBox> ground_truth;
};

struct DetectionResultSet {
  std::vector<ImageDetections> images;
  void validate() const;
};

double box_iou(const BoxXYWH& a, const BoxXYWH& b);

struct ApResult {
  std::vector<double> per_class;         // NaN for classes with neither predictions nor ground truth
  std::vector<bool> predicted_without_gt;  // class had predictions but no ground truth (AP 0)
  double mean_ap = 0.0;                  // mean over classes that are not NaN
  std::size_t evaluated_classes = 0;
};

// Greedy score-ordered matching per class, 101-point interpolated AP.
ApResult mean_average_precision(const DetectionResultSet& results, std::size_t num_classes,
                                double iou_threshold = 0.5);

// Interpolated AP from a precision/recall curve ordered by descending score.
double interpolated_ap_101(const std::vector<double>& precision, const std::vector<double>& recall);

}  // namespace dfkd
