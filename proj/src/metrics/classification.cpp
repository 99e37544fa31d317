#include "dfkd/metrics/classification.hpp"

#include <numeric>
#include <sstream>

#include "dfkd/core/error.hpp"

namespace dfkd {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

ConfusionMatrix accuracy_confusion(std::span<const int> predictions, std::span<const int> labels,
                                   std::size_t num_classes) {
  if (predictions.empty()) throw ContractError("accuracy_confusion: empty input");
  if (predictions.size() != labels.size())
    throw ContractError("accuracy_confusion: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
  ConfusionMatrix m;
  m.num_classes = num_classes;
  m.counts.assign(num_classes * num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predictions[i];
    if (t < 0 || p < 0 || std::size_t(t) >= num_classes || std::size_t(p) >= num_classes)
      throw IndexError("accuracy_confusion: class id outside [0, " + std::to_string(num_classes) + ")");
    ++m.counts[std::size_t(t) * num_classes + std::size_t(p)];
    correct += t == p;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  return m;
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::ostringstream out;
  out << "true\\predicted";
  for (std::size_t j = 0; j < m.num_classes; ++j) out << ',' << j;
  out << '\n';
  for (std::size_t i = 0; i < m.num_classes; ++i) {
    out << i;
    for (std::size_t j = 0; j < m.num_classes; ++j) out << ',' << m.at(i, j);
    out << '\n';
  }
  return out.str();
}

}  // namespace dfkd
