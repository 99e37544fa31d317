#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfkd/core/keyvalue.hpp"
#include "dfkd/core/optim.hpp"
#include "dfkd/core/tensor.hpp"
#include "dfkd/data/images.hpp"
#include "dfkd/metrics/classification.hpp"
#include "dfkd/models/probes.hpp"
#include "dfkd/models/vit.hpp"

namespace dfkd {

// T^2 * mean_n KL(softmax(t/T) || softmax(s/T)); the teacher is a constant.
Tensor kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature);
// Mean cross-entropy against class ids (DomainError when out of range) or one-hot rows.
Tensor ce_loss(const Tensor& student_logits, std::span<const int> labels);
Tensor ce_loss(const Tensor& student_logits, const Tensor& one_hot);

// Student layer i -> teacher layer ceil((i+1) * L_T / L_S) - 1.
std::vector<std::size_t> default_layer_map(std::size_t student_depth, std::size_t teacher_depth);

// Mean over mapped layer pairs of the batch-mean (1 - cos) between the
// student's and the teacher's head-averaged class-token probes.
Tensor patch_attention_loss(const std::vector<Tensor>& teacher_attention, const std::vector<Tensor>& student_attention,
                            const std::vector<std::size_t>& layer_map);

// Desk student: embed 32, depth 2, 2 heads, MLP ratio 2, same patch grid as
// the default teacher.
ViTConfig default_student_config();

struct DistillConfig {
  double temperature = 4.0;
  double lambda_kd = 1.0;
  double lambda_ce = 1.0;
  double lambda_patch = 1.0;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  AdamConfig optimizer = distill_adamw_defaults();
  std::vector<std::size_t> layer_map;  // empty: default_layer_map
  std::uint64_t seed = 1;

  void validate() const;
  KeyValues to_kv() const;
  static DistillConfig from_kv(const KeyValues& kv);
};

double total_loss(double kd, double ce, double patch, const DistillConfig& config);
Tensor total_loss(const Tensor& kd, const Tensor& ce, const Tensor& patch, const DistillConfig& config);

struct ClassifierTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  AdamConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 0.0, WeightDecayMode::decoupled};
  // Per-epoch cosine decay of the learning rate from lr to 0.
  bool cosine_schedule = true;
  std::uint64_t seed = 1;

  KeyValues to_kv() const;
  static ClassifierTrainConfig from_kv(const KeyValues& kv);
};

struct ClassifierEpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

// Supervised cross-entropy training in place.
std::vector<ClassifierEpochRecord> train_classifier(VisionTransformer& model, const LabeledImages& train,
                                                    const LabeledImages& validation,
                                                    const ClassifierTrainConfig& config);

std::vector<int> predict(const VisionTransformer& model, const LabeledImages& data);
ConfusionMatrix evaluate_classifier(const VisionTransformer& model, const LabeledImages& data);

struct DistillEpochRecord {
  std::size_t epoch = 0;
  double kd = 0.0;
  double ce = 0.0;
  double patch = 0.0;  // NaN when the patch grids differ and lambda_patch == 0
  double total = 0.0;
  double val_acc = 0.0;
};

struct DistillResult {
  VisionTransformer student;
  std::vector<DistillEpochRecord> history;
  ConfusionMatrix confusion;  // validation set, final epoch
};

// Algorithm 1 over a synthetic labelled set. The teacher runs frozen in
// inference mode; validation data is only used for reporting.
DistillResult distill(const VisionTransformer& teacher, const ViTConfig& student_config,
                      const LabeledImages& synthetic, const LabeledImages& validation,
                      const DistillConfig& config);

std::string distill_history_csv(const std::vector<DistillEpochRecord>& history);
std::string classifier_history_csv(const std::vector<ClassifierEpochRecord>& history);

struct AblationVariant {
  std::string name;  // full, no_kd, no_ce, no_patch
  DistillConfig config;
};

// The full objective plus one variant per component with its weight set to 0.
std::vector<AblationVariant> ablation_variants(const DistillConfig& base);

}  // namespace dfkd
