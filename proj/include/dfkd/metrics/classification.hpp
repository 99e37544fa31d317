#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dfkd {

struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::size_t> counts;  // [true * K + predicted]
  double accuracy = 0.0;

  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * num_classes + predicted]; }
  std::size_t total() const;
};

ConfusionMatrix accuracy_confusion(std::span<const int> predictions, std::span<const int> labels,
                                   std::size_t num_classes);

// Header "true\predicted,0,1,..." then one row per true class.
std::string confusion_csv(const ConfusionMatrix& m);

}  // namespace dfkd
