#pragma once

#include <string>

#include "dfkd/core/keyvalue.hpp"
#include "dfkd/core/rng.hpp"
#include "dfkd/core/tensor.hpp"
#include "dfkd/core/weights.hpp"
#include "dfkd/data/images.hpp"
#include "dfkd/metrics/fid.hpp"
#include "dfkd/models/common.hpp"

namespace dfkd {

struct FidExtractorConfig {
  std::size_t image_size = 16;
  std::size_t channels = 1;
  std::size_t num_classes = 3;
  std::size_t width = 8;
  std::size_t feature_dim = 64;
  std::size_t epochs = 8;
  std::size_t batch_size = 32;
  double lr = 2e-3;
  std::uint64_t seed = 5;

  void validate() const;
  KeyValues to_kv() const;
  static FidExtractorConfig from_kv(const KeyValues& kv);
};

// conv3x3 -> relu -> conv4x4/2 -> relu -> conv4x4/2 -> relu -> spatial mean
// -> linear(feature_dim) -> relu [features] -> linear(num_classes).
class FidExtractor {
 public:
  FidExtractor(const FidExtractorConfig& config, Rng& rng);
  FidExtractor(const FidExtractorConfig& config, ModelWeights weights);

  Tensor features(const Tensor& images) const;  // [B, feature_dim]
  Tensor logits(const Tensor& images) const;    // [B, num_classes]

  const FidExtractorConfig& config() const { return config_; }
  const ModelWeights& weights() const { return weights_; }
  ModelWeights& weights() { return weights_; }

  static WeightLayout layout(const FidExtractorConfig& config);

 private:
  FidExtractorConfig config_;
  ModelWeights weights_;
};

struct FidExtractorTraining {
  FidExtractor extractor;
  double train_accuracy = 0.0;
};

FidExtractorTraining train_fid_extractor(const FidExtractorConfig& config, const LabeledImages& train);

// Features of every image, computed in batches without recording gradients.
Tensor extract_features(const FidExtractor& extractor, const Tensor& images, std::size_t batch_size = 64);
FeatureStats image_stats(const FidExtractor& extractor, const Tensor& images);

inline constexpr const char* kFidExtractorKind = "fid-extractor";
void save_fid_extractor(const std::string& path, const FidExtractor& extractor);
// Missing file -> ConfigError that names the train-fid-extractor command.
FidExtractor load_fid_extractor(const std::string& path);

}  // namespace dfkd
