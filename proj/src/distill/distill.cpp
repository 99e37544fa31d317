#include "dfkd/distill/distill.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <numbers>
#include <optional>
#include <sstream>

#include "dfkd/core/error.hpp"
#include "dfkd/core/ops.hpp"
#include "dfkd/models/common.hpp"

namespace dfkd {

namespace o = ops;

Tensor kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature) {
  if (student_logits.shape() != teacher_logits.shape())
    throw ShapeError("kd_loss: student " + shape_str(student_logits.shape()) + " vs teacher " +
                     shape_str(teacher_logits.shape()));
  return o::scale(o::kl_div_softened(student_logits, teacher_logits.detach(), temperature),
                  temperature * temperature);
}

Tensor ce_loss(const Tensor& student_logits, std::span<const int> labels) {
  return o::cross_entropy(student_logits, labels);
}

Tensor ce_loss(const Tensor& student_logits, const Tensor& one_hot) {
  if (student_logits.rank() != 2 || student_logits.shape() != one_hot.shape())
    throw ShapeError("ce_loss: logits " + shape_str(student_logits.shape()) + " vs targets " +
                     shape_str(one_hot.shape()));
  for (double y : one_hot.data())
    if (!(y >= 0.0 && y <= 1.0)) throw DomainError("ce_loss: target entries must lie in [0, 1]");
  const double inv_n = 1.0 / static_cast<double>(student_logits.dim(0));
  return o::scale(o::sum(o::mul(one_hot.detach(), o::log_softmax(student_logits))), -inv_n);
}

std::vector<std::size_t> default_layer_map(std::size_t student_depth, std::size_t teacher_depth) {
  if (student_depth == 0 || teacher_depth == 0) throw ConfigError("layer map: depths must be positive");
  std::vector<std::size_t> map(student_depth);
  for (std::size_t i = 0; i < student_depth; ++i)
    map[i] = ((i + 1) * teacher_depth + student_depth - 1) / student_depth - 1;
  return map;
}

Tensor patch_attention_loss(const std::vector<Tensor>& teacher_attention, const std::vector<Tensor>& student_attention,
                            const std::vector<std::size_t>& layer_map) {
  if (layer_map.size() != student_attention.size())
    throw ConfigError("patch loss: layer map covers " + std::to_string(layer_map.size()) + " of " +
                      std::to_string(student_attention.size()) + " student layers");
  if (teacher_attention.empty()) throw ConfigError("patch loss: teacher has no attention layers");
  const std::size_t nt = teacher_attention.front().dim(3), ns = student_attention.front().dim(3);
  if (nt != ns)
    throw ConfigError("patch loss: teacher attends over " + std::to_string(nt - 1) + " patches but the student over " +
                      std::to_string(ns - 1) + "; use the same image_size/patch_size for both models");
  Tensor total;
  for (std::size_t i = 0; i < layer_map.size(); ++i) {
    if (layer_map[i] >= teacher_attention.size())
      throw ConfigError("patch loss: student layer " + std::to_string(i) + " maps to teacher layer " +
                        std::to_string(layer_map[i]) + " of " + std::to_string(teacher_attention.size()));
    ProbeSelection s, t;
    s.layer = static_cast<long>(i);
    t.layer = static_cast<long>(layer_map[i]);
    const Tensor term = attention_consistency_loss(probe_tensor(student_attention, s),
                                                   probe_tensor(teacher_attention, t).detach());
    total = total.defined() ? o::add(total, term) : term;
  }
  return o::scale(total, 1.0 / static_cast<double>(layer_map.size()));
}

ViTConfig default_student_config() {
  ViTConfig c;
  c.embed_dim = 32;
  c.depth = 2;
  c.num_heads = 2;
  c.mlp_ratio = 2.0;
  return c;
}

void DistillConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("distill: temperature must be positive");
  if (lambda_kd < 0.0 || lambda_ce < 0.0 || lambda_patch < 0.0)
    throw ConfigError("distill: loss weights must be non-negative");
  if (!(lambda_kd > 0.0 || lambda_ce > 0.0 || lambda_patch > 0.0))
    throw ConfigError("distill: at least one loss weight must be positive");
  if (batch_size == 0) throw ConfigError("distill: batch_size must be positive");
  if (!(optimizer.lr > 0.0)) throw ConfigError("distill: lr must be positive");
}

KeyValues DistillConfig::to_kv() const {
  KeyValues kv;
  kv.set("temperature", temperature);
  kv.set("lambda_kd", lambda_kd);
  kv.set("lambda_ce", lambda_ce);
  kv.set("lambda_patch", lambda_patch);
  kv.set("epochs", epochs);
  kv.set("batch_size", batch_size);
  write_adam(kv, "", optimizer);
  if (!layer_map.empty()) kv.set("layer_map", format_sizes(layer_map));
  kv.set("seed", static_cast<std::size_t>(seed));
  return kv;
}

DistillConfig DistillConfig::from_kv(const KeyValues& kv) {
  DistillConfig c;
  c.temperature = kv.get_double("temperature", c.temperature);
  c.lambda_kd = kv.get_double("lambda_kd", c.lambda_kd);
  c.lambda_ce = kv.get_double("lambda_ce", c.lambda_ce);
  c.lambda_patch = kv.get_double("lambda_patch", c.lambda_patch);
  c.epochs = kv.get_size("epochs", c.epochs);
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.optimizer = read_adam(kv, "", c.optimizer);
  if (kv.has("layer_map")) c.layer_map = parse_sizes(kv.get("layer_map"), "layer_map");
  c.seed = kv.get_size("seed", c.seed);
  return c;
}

double total_loss(double kd, double ce, double patch, const DistillConfig& c) {
  return c.lambda_kd * kd + c.lambda_ce * ce + c.lambda_patch * patch;
}

Tensor total_loss(const Tensor& kd, const Tensor& ce, const Tensor& patch, const DistillConfig& c) {
  Tensor t = o::add(o::scale(kd, c.lambda_kd), o::scale(ce, c.lambda_ce));
  return patch.defined() ? o::add(t, o::scale(patch, c.lambda_patch)) : t;
}

KeyValues ClassifierTrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("epochs", epochs);
  kv.set("batch_size", batch_size);
  write_adam(kv, "", optimizer);
  kv.set("cosine_schedule", cosine_schedule);
  kv.set("seed", static_cast<std::size_t>(seed));
  return kv;
}

ClassifierTrainConfig ClassifierTrainConfig::from_kv(const KeyValues& kv) {
  ClassifierTrainConfig c;
  c.epochs = kv.get_size("epochs", c.epochs);
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.optimizer = read_adam(kv, "", c.optimizer);
  c.cosine_schedule = kv.get_bool("cosine_schedule", c.cosine_schedule);
  c.seed = kv.get_size("seed", c.seed);
  return c;
}

std::vector<int> predict(const VisionTransformer& model, const LabeledImages& data) {
  NoGradGuard guard;
  std::vector<int> out;
  out.reserve(data.size());
  for (std::size_t b = 0; b < data.size(); b += 64) {
    std::vector<std::size_t> idx(std::min<std::size_t>(64, data.size() - b));
    std::iota(idx.begin(), idx.end(), b);
    const Tensor logits = model.forward(data.batch(idx)).logits;
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (logits.at(i * k + j) > logits.at(i * k + best)) best = j;
      out.push_back(static_cast<int>(best));
    }
  }
  return out;
}

ConfusionMatrix evaluate_classifier(const VisionTransformer& model, const LabeledImages& data) {
  return accuracy_confusion(predict(model, data), data.labels, model.config().num_classes);
}

namespace {

std::vector<int> batch_labels(const LabeledImages& data, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data.labels[i]);
  return out;
}

void check_images(const ViTConfig& c, const LabeledImages& data, const char* who) {
  if (data.channels != c.in_channels || data.height != c.image_size || data.width != c.image_size)
    throw ShapeError(std::string(who) + ": images are " + std::to_string(data.channels) + "x" +
                     std::to_string(data.height) + "x" + std::to_string(data.width) + " but the model expects " +
                     std::to_string(c.in_channels) + "x" + std::to_string(c.image_size) + "x" +
                     std::to_string(c.image_size));
}

}  // namespace

std::vector<ClassifierEpochRecord> train_classifier(VisionTransformer& model, const LabeledImages& train,
                                                    const LabeledImages& validation,
                                                    const ClassifierTrainConfig& config) {
  if (train.size() == 0) throw ContractError("train-teacher: empty training set");
  check_images(model.config(), train, "train-teacher");
  Adam opt(model.weights().trainable(), config.optimizer);
  Rng root(config.seed);
  std::vector<ClassifierEpochRecord> history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng ep = root.child(epoch);
    Rng order = ep.child(0);
    const auto batches = shuffled_batches(train.size(), config.batch_size, order);
    if (config.cosine_schedule)
      opt.state().config.lr = config.optimizer.lr * 0.5 *
                              (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                              static_cast<double>(config.epochs)));
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      Rng drop = ep.child(1).child(bi);
      opt.zero_grad();
      const Tensor loss = o::cross_entropy(model.forward(train.batch(batches[bi]), {true, &drop}).logits,
                                           batch_labels(train, batches[bi]));
      loss.backward();
      opt.step();
      loss_sum += loss.item();
    }
    ClassifierEpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = loss_sum / static_cast<double>(batches.size());
    rec.train_acc = evaluate_classifier(model, train).accuracy;
    rec.val_acc = validation.size() ? evaluate_classifier(model, validation).accuracy
                                    : std::numeric_limits<double>::quiet_NaN();
    history.push_back(rec);
  }
  return history;
}

DistillResult distill(const VisionTransformer& teacher_in, const ViTConfig& student_config,
                      const LabeledImages& synthetic, const LabeledImages& validation, const DistillConfig& config) {
  config.validate();
  student_config.validate();
  const ViTConfig& tc = teacher_in.config();
  if (tc.num_classes != student_config.num_classes)
    throw ConfigError("distill: teacher has " + std::to_string(tc.num_classes) + " classes, student " +
                      std::to_string(student_config.num_classes));
  if (synthetic.size() == 0) throw ContractError("distill: empty synthetic set");
  check_images(student_config, synthetic, "distill");
  check_images(tc, synthetic, "distill");
  const bool same_grid = tc.num_patches() == student_config.num_patches();
  if (!same_grid && config.lambda_patch > 0.0)
    throw ConfigError("distill: teacher has " + std::to_string(tc.num_patches()) + " patches and the student " +
                      std::to_string(student_config.num_patches()) +
                      "; match image_size/patch_size or set lambda_patch = 0");
  const std::vector<std::size_t> layer_map =
      config.layer_map.empty() ? default_layer_map(student_config.depth, tc.depth) : config.layer_map;
  if (layer_map.size() != student_config.depth)
    throw ConfigError("distill: layer_map must list one teacher layer per student layer (" +
                      std::to_string(student_config.depth) + ")");
  for (std::size_t t : layer_map)
    if (t >= tc.depth) throw ConfigError("distill: layer_map entry " + std::to_string(t) + " exceeds teacher depth");

  VisionTransformer teacher(tc, teacher_in.weights().deep_copy());
  teacher.weights().freeze();
  Rng root(config.seed);
  Rng init = root.child(0);
  VisionTransformer student(student_config, init);
  Adam opt(student.weights().trainable(), config.optimizer);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<DistillEpochRecord> history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng ep = root.child(1).child(epoch);
    Rng order = ep.child(0);
    const auto batches = shuffled_batches(synthetic.size(), config.batch_size, order);
    double kd_sum = 0.0, ce_sum = 0.0, patch_sum = 0.0, total_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Tensor images = synthetic.batch(batches[bi]);
      Rng drop = ep.child(1).child(bi);
      ViTOutput t_out;
      {
        NoGradGuard guard;
        t_out = teacher.forward(images);
      }
      const ViTOutput s_out = student.forward(images, {true, &drop});
      const Tensor kd = kd_loss(s_out.logits, t_out.logits, config.temperature);
      const Tensor ce = ce_loss(s_out.logits, batch_labels(synthetic, batches[bi]));
      const Tensor patch = same_grid ? patch_attention_loss(t_out.attention, s_out.attention, layer_map) : Tensor();
      const Tensor total = total_loss(kd, ce, patch, config);
      opt.zero_grad();
      total.backward();
      opt.step();
      kd_sum += kd.item();
      ce_sum += ce.item();
      patch_sum += patch.defined() ? patch.item() : nan;
      total_sum += total.item();
      if (!std::isfinite(total.item())) throw DomainError("distill: non-finite loss at epoch " + std::to_string(epoch + 1));
    }
    const double nb = static_cast<double>(batches.size());
    DistillEpochRecord rec{epoch + 1, kd_sum / nb, ce_sum / nb, patch_sum / nb, total_sum / nb, nan};
    if (validation.size()) rec.val_acc = evaluate_classifier(student, validation).accuracy;
    history.push_back(rec);
  }
  ConfusionMatrix confusion;
  if (validation.size()) confusion = evaluate_classifier(student, validation);
  return {std::move(student), std::move(history), std::move(confusion)};
}

std::string distill_history_csv(const std::vector<DistillEpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,kd,ce,patch,total,val_acc\n";
  for (const auto& r : history)
    out << r.epoch << ',' << csv_double(r.kd) << ',' << csv_double(r.ce) << ',' << csv_double(r.patch) << ','
        << csv_double(r.total) << ',' << csv_double(r.val_acc) << '\n';
  return out.str();
}

std::string classifier_history_csv(const std::vector<ClassifierEpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,loss,train_acc,val_acc\n";
  for (const auto& r : history)
    out << r.epoch << ',' << csv_double(r.loss) << ',' << csv_double(r.train_acc) << ',' << csv_double(r.val_acc)
        << '\n';
  return out.str();
}

std::vector<AblationVariant> ablation_variants(const DistillConfig& base) {
  std::vector<AblationVariant> out{{"full", base}};
  AblationVariant v{"no_kd", base};
  v.config.lambda_kd = 0.0;
  out.push_back(v);
  v = {"no_ce", base};
  v.config.lambda_ce = 0.0;
  out.push_back(v);
  v = {"no_patch", base};
  v.config.lambda_patch = 0.0;
  out.push_back(v);
  return out;
}

}  // namespace dfkd
