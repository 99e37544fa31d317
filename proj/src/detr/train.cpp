#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "dfkd/core/error.hpp"
#include "dfkd/core/log.hpp"
#include "dfkd/core/ops.hpp"
#include "dfkd/detr/detr.hpp"

namespace dfkd {

namespace o = ops;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Tensor flatten_queries(const Tensor& t) { return o::reshape(t, {t.dim(0) * t.dim(1), t.dim(2)}); }

Tensor stack_inputs(const PreparedDetectionSet& data, const std::vector<std::size_t>& idx) {
  const Shape& first = data.samples[idx.front()].input.shape();
  std::vector<double> out;
  out.reserve(idx.size() * shape_numel(first));
  for (std::size_t i : idx) {
    const Tensor& t = data.samples[i].input;
    if (t.shape() != first)
      throw ShapeError("detr: batch mixes input sizes " + shape_str(first) + " and " + shape_str(t.shape()) +
                       "; use square source images or batch size 1");
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  return Tensor::from({idx.size(), first[0], first[1], first[2]}, std::move(out));
}

std::vector<const DetectionTarget*> batch_targets(const PreparedDetectionSet& data,
                                                  const std::vector<std::size_t>& idx) {
  std::vector<const DetectionTarget*> t;
  for (std::size_t i : idx) t.push_back(&data.samples[i].target);
  return t;
}

void check_set(const PreparedDetectionSet& data, const DetrConfig& c, const char* what) {
  if (data.samples.empty()) throw ContractError(std::string(what) + ": empty detection set");
  if (data.ground_truth.size() != data.samples.size())
    throw ContractError(std::string(what) + ": ground truth count differs from sample count");
  for (const auto& s : data.samples)
    for (int l : s.target.labels)
      if (l < 0 || static_cast<std::size_t>(l) >= c.num_classes)
        throw IndexError(std::string(what) + ": label " + std::to_string(l) + " outside " +
                         std::to_string(c.num_classes) + " classes");
}

struct BatchLosses {
  Tensor cls, bbox, distill, total;
};

std::vector<DetrEpochRecord> run_training(DetrLite& model, const DetrLite* teacher, const PreparedDetectionSet& train,
                                          const DetrTrainConfig& config, const char* what) {
  config.validate();
  check_set(train, model.config(), what);
  const DetrConfig& mc = model.config();
  Adam opt(model.weights().trainable(), config.optimizer);
  Rng root(config.seed);
  const auto& w = config.weights;
  std::vector<DetrEpochRecord> history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng order = root.child(epoch);
    const auto batches = shuffled_batches(train.samples.size(), config.batch_size, order);
    DetrEpochRecord rec;
    rec.epoch = epoch + 1;
    rec.distill = teacher ? 0.0 : kNaN;
    for (const auto& idx : batches) {
      const Tensor images = stack_inputs(train, idx);
      const ExpandedTargets targets = expand_batch(batch_targets(train, idx), mc.num_queries, mc.num_classes);
      opt.zero_grad();
      const DetrOutput out = model.forward(images);
      const Tensor logits = flatten_queries(out.class_logits);
      const Tensor cls = detection_classification_loss(logits, targets.labels);
      const Tensor bbox = bbox_loss(flatten_queries(out.pred_boxes), targets.boxes, targets.mask);
      Tensor total = o::add(o::scale(cls, w.cls), o::scale(bbox, w.bbox));
      if (teacher) {
        Tensor teacher_logits;
        {
          NoGradGuard guard;
          teacher_logits = flatten_queries(teacher->forward(images).class_logits);
        }
        const Tensor kd = detection_distill_loss(logits, teacher_logits, w.temperature);
        total = o::add(total, o::scale(kd, w.distill));
        rec.distill += kd.item();
      }
      if (!std::isfinite(total.item()))
        throw DomainError(std::string(what) + ": non-finite loss at epoch " + std::to_string(epoch + 1));
      total.backward();
      opt.step();
      rec.cls += cls.item();
      rec.bbox += bbox.item();
      rec.total += total.item();
    }
    const double n = static_cast<double>(batches.size());
    rec.cls /= n;
    rec.bbox /= n;
    rec.total /= n;
    if (teacher) rec.distill /= n;
    const bool last = epoch + 1 == config.epochs;
    const bool periodic = config.map_every > 0 && (epoch + 1) % config.map_every == 0;
    rec.map50 = (last || periodic) ? evaluate_detector(model, train).ap.mean_ap : kNaN;
    log_debug(std::string(what) + " epoch " + std::to_string(rec.epoch) + " total " + std::to_string(rec.total));
    history.push_back(rec);
  }
  return history;
}

}  // namespace

ExpandedTargets expand_targets(const DetectionTarget& target, std::size_t num_queries, std::size_t num_classes) {
  if (num_queries == 0) throw ContractError("expand_targets: need at least one query");
  if (target.labels.size() != target.boxes.size())
    throw ContractError("expand_targets: " + std::to_string(target.labels.size()) + " labels for " +
                        std::to_string(target.boxes.size()) + " boxes");
  const std::size_t g = target.labels.size();
  std::vector<double> labels(num_queries * num_classes, 0.0), boxes(num_queries * 4, 0.0);
  ExpandedTargets out;
  out.mask.assign(num_queries, false);
  if (g > 0) {
    for (std::size_t j = 0; j < std::max(g, num_queries); ++j) {
      const std::size_t q = j % num_queries, obj = j % g;
      const int l = target.labels[obj];
      if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
        throw IndexError("expand_targets: label " + std::to_string(l) + " outside " + std::to_string(num_classes) +
                         " classes");
      labels[q * num_classes + static_cast<std::size_t>(l)] = 1.0;
      if (!out.mask[q]) {
        std::copy(target.boxes[obj].begin(), target.boxes[obj].end(), boxes.begin() + q * 4);
        out.mask[q] = true;
      }
    }
  }
  out.labels = Tensor::from({num_queries, num_classes}, std::move(labels));
  out.boxes = Tensor::from({num_queries, 4}, std::move(boxes));
  return out;
}

ExpandedTargets expand_batch(const std::vector<const DetectionTarget*>& targets, std::size_t num_queries,
                             std::size_t num_classes) {
  if (targets.empty()) throw ContractError("expand_batch: empty batch");
  std::vector<double> labels, boxes;
  ExpandedTargets out;
  for (const DetectionTarget* t : targets) {
    const ExpandedTargets e = expand_targets(*t, num_queries, num_classes);
    labels.insert(labels.end(), e.labels.data().begin(), e.labels.data().end());
    boxes.insert(boxes.end(), e.boxes.data().begin(), e.boxes.data().end());
    out.mask.insert(out.mask.end(), e.mask.begin(), e.mask.end());
  }
  out.labels = Tensor::from({targets.size() * num_queries, num_classes}, std::move(labels));
  out.boxes = Tensor::from({targets.size() * num_queries, 4}, std::move(boxes));
  return out;
}

Tensor detection_classification_loss(const Tensor& logits, const Tensor& targets) {
  return o::bce_with_logits(logits, targets);
}

Tensor bbox_loss(const Tensor& pred_boxes, const Tensor& target_boxes, const std::vector<bool>& mask) {
  return o::smooth_l1(pred_boxes, target_boxes, mask);
}

Tensor detection_distill_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("detection distill: temperature must be positive");
  return o::kl_div_softened(student_logits, teacher_logits.detach(), temperature);
}

void DetrTrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("detr training: epochs and batch_size must be positive");
  if (!(optimizer.lr > 0.0)) throw ConfigError("detr training: lr must be positive");
  if (!(weights.temperature > 0.0)) throw ConfigError("detr training: temperature must be positive");
  if (weights.cls < 0.0 || weights.bbox < 0.0 || weights.distill < 0.0)
    throw ConfigError("detr training: loss weights must be non-negative");
}

KeyValues DetrTrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("epochs", epochs);
  kv.set("batch_size", batch_size);
  write_adam(kv, "optimizer.", optimizer);
  kv.set("weight.cls", weights.cls);
  kv.set("weight.bbox", weights.bbox);
  kv.set("weight.distill", weights.distill);
  kv.set("temperature", weights.temperature);
  kv.set("map_every", map_every);
  kv.set("seed", static_cast<std::size_t>(seed));
  return kv;
}

DetrTrainConfig DetrTrainConfig::from_kv(const KeyValues& kv) {
  DetrTrainConfig c;
  c.epochs = kv.get_size("epochs", c.epochs);
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.optimizer = read_adam(kv, "optimizer.", c.optimizer);
  c.weights.cls = kv.get_double("weight.cls", c.weights.cls);
  c.weights.bbox = kv.get_double("weight.bbox", c.weights.bbox);
  c.weights.distill = kv.get_double("weight.distill", c.weights.distill);
  c.weights.temperature = kv.get_double("temperature", c.weights.temperature);
  c.map_every = kv.get_size("map_every", c.map_every);
  c.seed = kv.get_size("seed", c.seed);
  return c;
}

PreparedDetectionSet prepare_detection_set(const std::vector<DetectionSample>& samples,
                                           const PreprocessConfig& config) {
  PreparedDetectionSet set;
  for (const DetectionSample& s : samples) {
    PreprocessedSample p = preprocess_detection(s, config);
    for (const std::string& w : p.warnings) log_warn(w);
    std::vector<GroundTruthBox> gt;
    for (std::size_t i = 0; i < s.labels.size(); ++i) gt.push_back({s.labels[i], s.boxes[i]});
    set.samples.push_back(std::move(p));
    set.ground_truth.push_back(std::move(gt));
  }
  return set;
}

std::vector<DetrEpochRecord> train_detr(DetrLite& model, const PreparedDetectionSet& train,
                                        const DetrTrainConfig& config) {
  DetrTrainConfig supervised = config;
  supervised.weights.distill = 0.0;
  return run_training(model, nullptr, train, supervised, "train-detr-teacher");
}

DetrDistillResult distill_detection(const DetrLite& teacher, const DetrConfig& student_config,
                                    const PreparedDetectionSet& train, const DetrTrainConfig& config) {
  const DetrConfig& tc = teacher.config();
  if (tc.num_classes != student_config.num_classes || tc.num_queries != student_config.num_queries)
    throw ConfigError("distill-detect: teacher has " + std::to_string(tc.num_queries) + " queries and " +
                      std::to_string(tc.num_classes) + " classes, student has " +
                      std::to_string(student_config.num_queries) + " and " +
                      std::to_string(student_config.num_classes));
  Rng init = Rng(config.seed).child(1u << 20);
  DetrLite frozen(tc, teacher.weights().deep_copy());
  frozen.weights().freeze();
  DetrDistillResult result{DetrLite(student_config, init), {}};
  result.history = run_training(result.student, &frozen, train, config, "distill-detect");
  return result;
}

std::vector<ScoredBox> non_max_suppression(std::vector<ScoredBox> boxes, double iou_threshold) {
  std::stable_sort(boxes.begin(), boxes.end(), [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
  std::vector<ScoredBox> kept;
  for (const ScoredBox& b : boxes) {
    bool suppressed = false;
    for (const ScoredBox& k : kept)
      if (k.label == b.label && box_iou(k.box, b.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(b);
  }
  return kept;
}

namespace {

struct QueryDetection {
  std::size_t query = 0;
  ScoredBox box;
};

std::vector<QueryDetection> query_detections(const DetrOutput& output, std::size_t b, std::size_t height,
                                             std::size_t width, double threshold) {
  const std::size_t q_count = output.class_logits.dim(1), c = output.class_logits.dim(2);
  if (b >= output.class_logits.dim(0)) throw IndexError("decode: batch index out of range");
  const auto logits = output.class_logits.data();
  const auto boxes = output.pred_boxes.data();
  std::vector<QueryDetection> out;
  for (std::size_t q = 0; q < q_count; ++q) {
    const double* row = logits.data() + (b * q_count + q) * c;
    const std::size_t best = static_cast<std::size_t>(std::max_element(row, row + c) - row);
    const double score = 1.0 / (1.0 + std::exp(-row[best]));
    if (score < threshold) continue;
    const double* bx = boxes.data() + (b * q_count + q) * 4;
    const BoxXYWH pixel = from_normalized_cxcywh({bx[0], bx[1], bx[2], bx[3]}, static_cast<double>(width),
                                                 static_cast<double>(height));
    out.push_back({q, {static_cast<int>(best), score, pixel}});
  }
  return out;
}

}  // namespace

std::vector<ScoredBox> decode_detections(const DetrOutput& output, std::size_t batch_index,
                                         std::size_t original_height, std::size_t original_width,
                                         const DecodeOptions& options) {
  std::vector<ScoredBox> boxes;
  for (const auto& d : query_detections(output, batch_index, original_height, original_width,
                                        options.score_threshold))
    boxes.push_back(d.box);
  return non_max_suppression(std::move(boxes), options.nms_iou);
}

DetectionEvaluation evaluate_detector(const DetrLite& model, const PreparedDetectionSet& data,
                                      const DecodeOptions& options) {
  check_set(data, model.config(), "eval-detect");
  NoGradGuard guard;
  DetectionEvaluation ev;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const PreprocessedSample& s = data.samples[i];
    const DetrOutput out = model.forward(o::reshape(s.input, {1, s.input.dim(0), s.input.dim(1), s.input.dim(2)}));
    ev.results.images.push_back(
        {decode_detections(out, 0, s.original_height, s.original_width, options), data.ground_truth[i]});
  }
  ev.ap = mean_average_precision(ev.results, model.config().num_classes, 0.5);
  return ev;
}

std::string detection_dump_csv(const DetrLite& model, const PreparedDetectionSet& data,
                               const DecodeOptions& options) {
  NoGradGuard guard;
  std::ostringstream os;
  os << "image_id,query,class,score,x,y,w,h\n";
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const PreprocessedSample& s = data.samples[i];
    const DetrOutput out = model.forward(o::reshape(s.input, {1, s.input.dim(0), s.input.dim(1), s.input.dim(2)}));
    auto dets = query_detections(out, 0, s.original_height, s.original_width, options.score_threshold);
    std::vector<ScoredBox> boxes;
    for (const auto& d : dets) boxes.push_back(d.box);
    const auto kept = non_max_suppression(boxes, options.nms_iou);
    for (const auto& d : dets) {
      const bool survives = std::any_of(kept.begin(), kept.end(), [&](const ScoredBox& k) {
        return k.label == d.box.label && k.score == d.box.score && k.box == d.box.box;
      });
      if (!survives) continue;
      os << i << ',' << d.query << ',' << d.box.label << ',' << csv_double(d.box.score);
      for (double v : d.box.box) os << ',' << csv_double(v);
      os << '\n';
    }
  }
  return os.str();
}

std::string detr_history_csv(const std::vector<DetrEpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,cls,bbox,distill,total,map50\n";
  for (const auto& r : history)
    os << r.epoch << ',' << csv_double(r.cls) << ',' << csv_double(r.bbox) << ',' << csv_double(r.distill) << ','
       << csv_double(r.total) << ',' << csv_double(r.map50) << '\n';
  return os.str();
}

std::vector<double> detr_attention_probe(const DetrOutput& output, std::size_t batch_index) {
  if (output.cross_attention.empty()) throw ContractError("detr probe: no decoder layers");
  const Tensor& attn = output.cross_attention.back();
  const std::size_t heads = attn.dim(1), q_count = attn.dim(2), tokens = attn.dim(3);
  const std::size_t c = output.class_logits.dim(2);
  if (batch_index >= attn.dim(0)) throw IndexError("detr probe: batch index out of range");
  const auto logits = output.class_logits.data();
  std::size_t top = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < q_count; ++q) {
    const double* row = logits.data() + (batch_index * q_count + q) * c;
    const double m = *std::max_element(row, row + c);
    if (m > best) {
      best = m;
      top = q;
    }
  }
  std::vector<double> probe(tokens, 0.0);
  const auto a = attn.data();
  for (std::size_t h = 0; h < heads; ++h) {
    const double* row = a.data() + ((batch_index * heads + h) * q_count + top) * tokens;
    for (std::size_t t = 0; t < tokens; ++t) probe[t] += row[t] / static_cast<double>(heads);
  }
  return probe;
}

}  // namespace dfkd
