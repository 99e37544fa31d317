#include "dfkd/metrics/fid_extractor.hpp"

#include <cmath>
#include <filesystem>

#include "dfkd/core/error.hpp"
#include "dfkd/core/ops.hpp"
#include "dfkd/core/optim.hpp"
#include "dfkd/data/checkpoint.hpp"

namespace dfkd {

namespace o = ops;

void FidExtractorConfig::validate() const {
  if (image_size == 0 || image_size % 4 != 0)
    throw ConfigError("fid extractor: image_size must be a positive multiple of 4");
  if (channels == 0 || num_classes < 2 || width == 0 || feature_dim == 0)
    throw ConfigError("fid extractor: channels, width and feature_dim must be positive, num_classes >= 2");
  if (batch_size == 0 || !(lr > 0.0)) throw ConfigError("fid extractor: batch_size and lr must be positive");
}

KeyValues FidExtractorConfig::to_kv() const {
  KeyValues kv;
  kv.set("image_size", image_size);
  kv.set("channels", channels);
  kv.set("num_classes", num_classes);
  kv.set("width", width);
  kv.set("feature_dim", feature_dim);
  kv.set("epochs", epochs);
  kv.set("batch_size", batch_size);
  kv.set("lr", lr);
  kv.set("seed", static_cast<std::uint64_t>(seed));
  return kv;
}

FidExtractorConfig FidExtractorConfig::from_kv(const KeyValues& kv) {
  FidExtractorConfig c;
  c.image_size = kv.get_size("image_size", c.image_size);
  c.channels = kv.get_size("channels", c.channels);
  c.num_classes = kv.get_size("num_classes", c.num_classes);
  c.width = kv.get_size("width", c.width);
  c.feature_dim = kv.get_size("feature_dim", c.feature_dim);
  c.epochs = kv.get_size("epochs", c.epochs);
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.lr = kv.get_double("lr", c.lr);
  c.seed = kv.get_size("seed", c.seed);
  return c;
}

WeightLayout FidExtractor::layout(const FidExtractorConfig& c) {
  const std::size_t w = c.width;
  return {
      {"conv1.weight", {w, c.channels, 3, 3}},
      {"conv1.bias", {w}},
      {"conv2.weight", {2 * w, w, 4, 4}},
      {"conv2.bias", {2 * w}},
      {"conv3.weight", {2 * w, 2 * w, 4, 4}},
      {"conv3.bias", {2 * w}},
      {"fc.weight", {c.feature_dim, 2 * w}},
      {"fc.bias", {c.feature_dim}},
      {"head.weight", {c.num_classes, c.feature_dim}},
      {"head.bias", {c.num_classes}},
  };
}

FidExtractor::FidExtractor(const FidExtractorConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  for (const auto& [name, shape] : layout(config_)) {
    if (name.ends_with(".bias")) {
      weights_.add(name, Tensor::zeros(shape));
      continue;
    }
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    weights_.add(name, normal_tensor(shape, rng, std::sqrt(2.0 / static_cast<double>(fan_in))));
  }
}

FidExtractor::FidExtractor(const FidExtractorConfig& config, ModelWeights weights)
    : config_(config), weights_(std::move(weights)) {
  config_.validate();
  check_layout("fid extractor", layout(config_), weights_);
}

Tensor FidExtractor::features(const Tensor& images) const {
  const Shape expect{config_.channels, config_.image_size, config_.image_size};
  if (images.rank() != 4 || Shape(images.shape().begin() + 1, images.shape().end()) != expect)
    throw ShapeError("fid extractor: expected [B," + std::to_string(config_.channels) + "," +
                     std::to_string(config_.image_size) + "," + std::to_string(config_.image_size) + "], got " +
                     shape_str(images.shape()));
  const auto& w = weights_;
  Tensor x = o::relu(o::conv2d(images, w.at("conv1.weight"), w.at("conv1.bias"), 1, 1));
  x = o::relu(o::conv2d(x, w.at("conv2.weight"), w.at("conv2.bias"), 2, 1));
  x = o::relu(o::conv2d(x, w.at("conv3.weight"), w.at("conv3.bias"), 2, 1));
  const std::size_t b = x.dim(0), c = x.dim(1);
  x = o::mean_axis(o::reshape(x, {b, c, x.dim(2) * x.dim(3)}), 2);
  return o::relu(o::linear(x, w.at("fc.weight"), w.at("fc.bias")));
}

Tensor FidExtractor::logits(const Tensor& images) const {
  return o::linear(features(images), weights_.at("head.weight"), weights_.at("head.bias"));
}

namespace {

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits.at(i * k + j) > logits.at(i * k + best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace

FidExtractorTraining train_fid_extractor(const FidExtractorConfig& config, const LabeledImages& train) {
  config.validate();
  if (train.size() == 0) throw ContractError("train_fid_extractor: empty training set");
  if (train.channels != config.channels || train.height != config.image_size || train.width != config.image_size)
    throw ShapeError("train_fid_extractor: dataset images do not match the extractor input size");
  Rng root(config.seed);
  Rng init = root.child(0);
  FidExtractor model(config, init);
  AdamConfig opt_config;
  opt_config.lr = config.lr;
  Adam opt(model.weights().trainable(), opt_config);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng order = root.child(1).child(epoch);
    for (const auto& idx : shuffled_batches(train.size(), config.batch_size, order)) {
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train.labels[i]);
      opt.zero_grad();
      o::cross_entropy(model.logits(train.batch(idx)), labels).backward();
      opt.step();
    }
  }
  std::size_t correct = 0;
  {
    NoGradGuard guard;
    for (std::size_t b = 0; b < train.size(); b += 128) {
      std::vector<std::size_t> idx;
      for (std::size_t i = b; i < std::min(train.size(), b + 128); ++i) idx.push_back(i);
      const auto pred = argmax_rows(model.logits(train.batch(idx)));
      for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == train.labels[idx[i]];
    }
  }
  return {std::move(model), static_cast<double>(correct) / static_cast<double>(train.size())};
}

Tensor extract_features(const FidExtractor& extractor, const Tensor& images, std::size_t batch_size) {
  if (images.rank() != 4) throw ShapeError("extract_features: expected [M,C,H,W] images");
  NoGradGuard guard;
  const std::size_t m = images.dim(0);
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < m; b += batch_size)
    parts.push_back(extractor.features(o::slice(images, 0, b, std::min(m, b + batch_size))));
  return parts.size() == 1 ? parts.front() : o::concat(parts, 0);
}

FeatureStats image_stats(const FidExtractor& extractor, const Tensor& images) {
  return feature_stats(extract_features(extractor, images));
}

void save_fid_extractor(const std::string& path, const FidExtractor& extractor) {
  save_checkpoint(path, kFidExtractorKind, extractor.config().to_kv(), extractor.weights());
}

FidExtractor load_fid_extractor(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw ConfigError("FID extractor checkpoint '" + path +
                      "' not found; create it with `dfkd train-fid-extractor --out " + path + "`");
  Checkpoint ck = load_checkpoint(path, kFidExtractorKind);
  return FidExtractor(FidExtractorConfig::from_kv(ck.config), std::move(ck.weights));
}

}  // namespace dfkd
