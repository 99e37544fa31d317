#include "dfkd/metrics/detection_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dfkd/core/error.hpp"

namespace dfkd {

void DetectionResultSet::validate() const {
  for (const auto& im : images) {
    for (const auto& p : im.predictions) {
      if (!(p.score >= 0.0 && p.score <= 1.0)) throw DomainError("detections: score outside [0, 1]");
      if (!(p.box[2] >= 0.0 && p.box[3] >= 0.0)) throw DomainError("detections: negative box size");
    }
    for (const auto& g : im.ground_truth)
      if (!(g.box[2] >= 0.0 && g.box[3] >= 0.0)) throw DomainError("detections: negative ground-truth size");
  }
}

double box_iou(const BoxXYWH& a, const BoxXYWH& b) {
  const double x0 = std::max(a[0], b[0]), y0 = std::max(a[1], b[1]);
  const double x1 = std::min(a[0] + a[2], b[0] + b[2]), y1 = std::min(a[1] + a[3], b[1] + b[3]);
  const double inter = std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0);
  const double uni = a[2] * a[3] + b[2] * b[3] - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double interpolated_ap_101(const std::vector<double>& precision, const std::vector<double>& recall) {
  std::vector<double> envelope(precision);
  for (std::size_t i = envelope.size(); i-- > 1;) envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
  double total = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r - 1e-12);
    if (it != recall.end()) total += envelope[static_cast<std::size_t>(it - recall.begin())];
  }
  return total / 101.0;
}

ApResult mean_average_precision(const DetectionResultSet& results, std::size_t num_classes,
                                double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ContractError("mAP: iou threshold must be in (0, 1)");
  results.validate();
  ApResult out;
  out.per_class.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
  out.predicted_without_gt.assign(num_classes, false);

  struct Candidate {
    double score;
    std::size_t image;
    std::size_t index;
  };
  for (std::size_t c = 0; c < num_classes; ++c) {
    const int label = static_cast<int>(c);
    std::vector<Candidate> cands;
    std::size_t gt_total = 0;
    std::vector<std::vector<bool>> used(results.images.size());
    for (std::size_t i = 0; i < results.images.size(); ++i) {
      const auto& im = results.images[i];
      used[i].assign(im.ground_truth.size(), false);
      for (const auto& g : im.ground_truth) gt_total += g.label == label;
      for (std::size_t k = 0; k < im.predictions.size(); ++k)
        if (im.predictions[k].label == label) cands.push_back({im.predictions[k].score, i, k});
    }
    if (cands.empty() && gt_total == 0) continue;
    if (gt_total == 0) {
      out.per_class[c] = 0.0;
      out.predicted_without_gt[c] = true;
      continue;
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<double> precision, recall;
    std::size_t tp = 0;
    for (std::size_t n = 0; n < cands.size(); ++n) {
      const auto& im = results.images[cands[n].image];
      const BoxXYWH& box = im.predictions[cands[n].index].box;
      double best = iou_threshold;
      std::ptrdiff_t match = -1;
      for (std::size_t g = 0; g < im.ground_truth.size(); ++g) {
        if (im.ground_truth[g].label != label || used[cands[n].image][g]) continue;
        const double iou = box_iou(box, im.ground_truth[g].box);
        if (iou >= best) {
          best = iou;
          match = static_cast<std::ptrdiff_t>(g);
        }
      }
      if (match >= 0) {
        used[cands[n].image][static_cast<std::size_t>(match)] = true;
        ++tp;
      }
      precision.push_back(static_cast<double>(tp) / static_cast<double>(n + 1));
      recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_total));
    }
    out.per_class[c] = interpolated_ap_101(precision, recall);
  }
  double sum = 0.0;
  for (double ap : out.per_class)
    if (!std::isnan(ap)) {
      sum += ap;
      ++out.evaluated_classes;
    }
  out.mean_ap = out.evaluated_classes ? sum / static_cast<double>(out.evaluated_classes) : 0.0;
  return out;
}

}  // namespace dfkd
