#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfkd/core/keyvalue.hpp"
#include "dfkd/core/optim.hpp"
#include "dfkd/core/rng.hpp"
#include "dfkd/core/tensor.hpp"
#include "dfkd/core/weights.hpp"
#include "dfkd/data/images.hpp"
#include "dfkd/metrics/fid.hpp"
#include "dfkd/metrics/fid_extractor.hpp"
#include "dfkd/models/common.hpp"
#include "dfkd/models/probes.hpp"
#include "dfkd/models/vit.hpp"

namespace dfkd {

struct GanConfig {
  std::size_t latent_dim = 100;
  std::size_t num_classes = 3;
  std::size_t g_embed_dim = 5;
  std::size_t d_embed_dim = 1024;
  std::size_t image_size = 16;
  std::size_t channels = 1;
  // Hidden widths of the first three generator layers; the last maps to channels.
  std::array<std::size_t, 3> g_channels{64, 32, 16};
  // Widths of the three stride-2 discriminator layers; the last maps to one logit.
  std::array<std::size_t, 3> d_channels{16, 32, 64};
  double leaky_slope = 0.2;
  double dropout = 0.3;
  double lambda_attn = 1.0;

  void validate() const;
  KeyValues to_kv() const;
  static GanConfig from_kv(const KeyValues& kv);
};

// convT x4 (k4 s2 p1) from a 1x1 input: 1 -> 2 -> 4 -> 8 -> 16. Batchnorm and
// ReLU after the first three, tanh after the last.
class Generator {
 public:
  Generator(const GanConfig& config, Rng& rng);
  Generator(const GanConfig& config, ModelWeights weights);

  // z [B, latent_dim], labels length B -> images [B, C, H, W] in [-1, 1].
  Tensor forward(const Tensor& z, std::span<const int> labels, const ForwardOptions& opts = {}) const;

  const GanConfig& config() const { return config_; }
  const ModelWeights& weights() const { return weights_; }
  ModelWeights& weights() { return weights_; }
  static WeightLayout layout(const GanConfig& config);

 private:
  GanConfig config_;
  ModelWeights weights_;
};

// The label embedding is projected to an image-sized plane and concatenated
// as an extra input channel. conv k4 s2 p1 x3 with LeakyReLU and dropout
// (batchnorm on the second and third), then conv k4 s1 p1 to one logit.
class Discriminator {
 public:
  Discriminator(const GanConfig& config, Rng& rng);
  Discriminator(const GanConfig& config, ModelWeights weights);

  // images [B, C, H, W] -> logits [B].
  Tensor forward(const Tensor& images, std::span<const int> labels, const ForwardOptions& opts = {}) const;

  const ModelWeights& weights() const { return weights_; }
  ModelWeights& weights() { return weights_; }
  static WeightLayout layout(const GanConfig& config);

 private:
  GanConfig config_;
  ModelWeights weights_;
};

// L_G = L_adv + lambda * L_attention
double generator_loss(double adv, double attn, double lambda);
Tensor generator_loss(const Tensor& adv, const Tensor& attn, double lambda);

Tensor sample_latent(std::size_t count, std::size_t latent_dim, Rng& rng);

struct GanTrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  AdamConfig optimizer = desk_gan_adam_defaults();
  std::size_t fid_every = 0;     // 0: only after the final epoch
  std::size_t fid_samples = 300;
  // Exponential moving average of generator weights; the averaged copy is
  // returned and scored. 0 returns the raw generator.
  double ema_decay = 0.99;
  std::uint64_t seed = 1;

  void validate() const;
  KeyValues to_kv() const;
  static GanTrainConfig from_kv(const KeyValues& kv);
};

struct GanEpochRecord {
  std::size_t epoch = 0;
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_attn = 0.0;  // NaN without a teacher
  double fid = 0.0;     // NaN when not evaluated this epoch
};

// Teacher feedback for the augmented generator objective.
struct AttentionGuidance {
  const VisionTransformer* teacher = nullptr;
  std::vector<ClassAttentionProbe> caps;
  ProbeSelection selection;
};

struct GanTrainResult {
  Generator generator;
  Discriminator discriminator;
  std::vector<GanEpochRecord> history;
};

// Alternating D/G updates with BCE-with-logits. With guidance, each G update
// adds lambda_attn * (1 - cos(probe(G(z, y)), CAP_y)).
GanTrainResult train_gan(const GanConfig& config, const GanTrainConfig& train, const LabeledImages& data,
                         const std::optional<AttentionGuidance>& guidance = std::nullopt,
                         const FidExtractor* extractor = nullptr);

// CAPs from a teacher's probes on data labelled by the teacher's own predictions.
std::vector<ClassAttentionProbe> teacher_caps(const VisionTransformer& teacher, const LabeledImages& data,
                                              const ProbeSelection& selection = {});

std::string gan_history_csv(const std::vector<GanEpochRecord>& history);

struct SynthDataset {
  LabeledImages data;
  std::string provenance;
};

// Labels uniform over classes, or drawn from label_weights when non-empty.
// Generator runs in inference mode.
SynthDataset synthesize(const Generator& generator, std::size_t count, Rng rng,
                        std::span<const double> label_weights = {}, const std::string& source = "");

inline constexpr const char* kGeneratorKind = "gan-generator";
inline constexpr const char* kDiscriminatorKind = "gan-discriminator";
void save_generator(const std::string& path, const Generator& g);
Generator load_generator(const std::string& path);

}  // namespace dfkd
