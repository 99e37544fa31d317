#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfkd/core/keyvalue.hpp"
#include "dfkd/core/optim.hpp"
#include "dfkd/core/rng.hpp"
#include "dfkd/core/tensor.hpp"
#include "dfkd/core/weights.hpp"
#include "dfkd/detr/preprocess.hpp"
#include "dfkd/metrics/detection_metrics.hpp"
#include "dfkd/models/common.hpp"

namespace dfkd {

struct DetrConfig {
  std::size_t in_channels = 3;
  // Four stride-2 3x3 conv stages; a 64x64 input yields a 4x4 token grid.
  std::array<std::size_t, 4> backbone{16, 32, 48, 64};
  std::size_t embed_dim = 64;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t num_queries = 4;
  std::size_t num_classes = 3;
  PreprocessConfig preprocess;

  void validate() const;
  KeyValues to_kv() const;
  static DetrConfig from_kv(const KeyValues& kv);

  static DetrConfig desk_teacher();
  static DetrConfig desk_student();
  // Layer/head counts of the full-scale teacher (6/6, 8 heads) and student (2/2).
  static DetrConfig full_scale_teacher_layout();
  static DetrConfig full_scale_student_layout();
};

struct DetrOutput {
  Tensor class_logits;                   // [B, Q, C]
  Tensor pred_boxes;                     // [B, Q, 4], sigmoid (cx, cy, w, h)
  std::vector<Tensor> cross_attention;   // per decoder layer [B, heads, Q, tokens]
};

// Conv backbone -> 1x1 projection + sine positions -> pre-norm encoder ->
// decoder over learned queries (self- then cross-attention) -> class head and
// three-layer box MLP.
class DetrLite {
 public:
  DetrLite(const DetrConfig& config, Rng& rng);
  DetrLite(const DetrConfig& config, ModelWeights weights);

  // images [B, 3, H, W] with H and W multiples of 16.
  DetrOutput forward(const Tensor& images) const;

  const DetrConfig& config() const { return config_; }
  const ModelWeights& weights() const { return weights_; }
  ModelWeights& weights() { return weights_; }
  static WeightLayout layout(const DetrConfig& config);

 private:
  DetrConfig config_;
  ModelWeights weights_;
};

std::size_t detr_param_count(const DetrConfig& config);

// Fixed 2-D sine/cosine position code [h*w, dim] (dim divisible by 4).
Tensor sine_position_encoding(std::size_t h, std::size_t w, std::size_t dim);

struct ExpandedTargets {
  Tensor labels;            // [Q, C] multi-hot
  Tensor boxes;             // [Q, 4]
  std::vector<bool> mask;   // query carries a real box
};

// Objects are assigned to queries round-robin in input order.
ExpandedTargets expand_targets(const DetectionTarget& target, std::size_t num_queries, std::size_t num_classes);
// Row-wise concatenation for a batch: [B*Q, C], [B*Q, 4].
ExpandedTargets expand_batch(const std::vector<const DetectionTarget*>& targets, std::size_t num_queries,
                             std::size_t num_classes);

Tensor detection_classification_loss(const Tensor& logits, const Tensor& targets);
Tensor bbox_loss(const Tensor& pred_boxes, const Tensor& target_boxes, const std::vector<bool>& mask);
// Mean over queries of KL(softmax(t/T) || softmax(s/T)); logits [N, C].
Tensor detection_distill_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature);

struct DetectionLossWeights {
  double cls = 1.0;
  double bbox = 5.0;
  double distill = 1.0;
  double temperature = 2.0;
};

struct DetrTrainConfig {
  std::size_t epochs = 80;
  std::size_t batch_size = 8;
  AdamConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 1e-4, WeightDecayMode::decoupled};
  DetectionLossWeights weights;
  std::size_t map_every = 0;  // 0: only after the final epoch
  std::uint64_t seed = 1;

  void validate() const;
  KeyValues to_kv() const;
  static DetrTrainConfig from_kv(const KeyValues& kv);
};

struct DetrEpochRecord {
  std::size_t epoch = 0;
  double cls = 0.0;
  double bbox = 0.0;
  double distill = 0.0;  // NaN for supervised training
  double total = 0.0;
  double map50 = 0.0;    // NaN when not evaluated
};

struct PreparedDetectionSet {
  std::vector<PreprocessedSample> samples;
  std::vector<std::vector<GroundTruthBox>> ground_truth;  // pixel boxes in original coordinates
};

PreparedDetectionSet prepare_detection_set(const std::vector<DetectionSample>& samples,
                                           const PreprocessConfig& config);

std::vector<DetrEpochRecord> train_detr(DetrLite& model, const PreparedDetectionSet& train,
                                        const DetrTrainConfig& config);

struct DetrDistillResult {
  DetrLite student;
  std::vector<DetrEpochRecord> history;
};

DetrDistillResult distill_detection(const DetrLite& teacher, const DetrConfig& student_config,
                                    const PreparedDetectionSet& train, const DetrTrainConfig& config);

struct DecodeOptions {
  double score_threshold = 0.05;
  double nms_iou = 0.5;
};

// Per query: class = argmax sigmoid, score = its sigmoid; boxes mapped to the
// original image's pixels; class-wise NMS.
std::vector<ScoredBox> decode_detections(const DetrOutput& output, std::size_t batch_index,
                                         std::size_t original_height, std::size_t original_width,
                                         const DecodeOptions& options = {});
std::vector<ScoredBox> non_max_suppression(std::vector<ScoredBox> boxes, double iou_threshold);

struct DetectionEvaluation {
  DetectionResultSet results;
  ApResult ap;
};

DetectionEvaluation evaluate_detector(const DetrLite& model, const PreparedDetectionSet& data,
                                      const DecodeOptions& options = {});

// "image_id,query,class,score,x,y,w,h" rows; query is the decoder slot.
std::string detection_dump_csv(const DetrLite& model, const PreparedDetectionSet& data,
                               const DecodeOptions& options = {});
std::string detr_history_csv(const std::vector<DetrEpochRecord>& history);

// Decoder cross-attention row of the top-scoring query in the last layer,
// averaged over heads: a probe analog for detection models.
std::vector<double> detr_attention_probe(const DetrOutput& output, std::size_t batch_index);

inline constexpr const char* kDetrKind = "detr-lite";
void save_detr(const std::string& path, const DetrLite& model);
DetrLite load_detr(const std::string& path);

}  // namespace dfkd
