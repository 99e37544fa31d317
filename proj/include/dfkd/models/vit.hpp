#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dfkd/core/keyvalue.hpp"
#include "dfkd/core/rng.hpp"
#include "dfkd/core/tensor.hpp"
#include "dfkd/core/weights.hpp"
#include "dfkd/models/common.hpp"

namespace dfkd {

struct ViTConfig {
  std::size_t image_size = 16;
  std::size_t patch_size = 4;
  std::size_t in_channels = 1;
  std::size_t embed_dim = 64;
  std::size_t depth = 2;
  std::size_t num_heads = 2;
  std::size_t num_classes = 3;
  double mlp_ratio = 4.0;
  double dropout = 0.0;

  // Throws ConfigError naming the violated constraint.
  void validate() const;
  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t tokens() const { return num_patches() + 1; }
  std::size_t head_dim() const { return embed_dim / num_heads; }
  std::size_t mlp_hidden() const;

  KeyValues to_kv() const;
  static ViTConfig from_kv(const KeyValues& kv);
  bool operator==(const ViTConfig&) const = default;
};

// One head's post-softmax attention matrix for one image; token 0 is the
// class token.
struct AttentionMap {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t tokens = 0;
  std::vector<double> values;  // tokens x tokens, row-major

  double at(std::size_t row, std::size_t col) const { return values[row * tokens + col]; }
};

struct ViTOutput {
  Tensor logits;                  // [B, num_classes]
  std::vector<Tensor> attention;  // per layer, [B, heads, T, T], graph-connected
};

// Image [C,H,W] -> [N, C*p*p]; batch [B,C,H,W] -> [B, N, C*p*p]. Patches in
// row-major grid order, each flattened as (channel, row, column).
Tensor patchify(const Tensor& images, std::size_t patch_size);

struct AttentionWeights {
  Tensor qkv_weight;   // [3D, D]
  Tensor qkv_bias;     // [3D]
  Tensor proj_weight;  // [D, D]
  Tensor proj_bias;    // [D]
};

struct MhsaResult {
  Tensor output;     // [B, T, D]
  Tensor attention;  // [B, heads, T, T]
};

// Scaled dot-product self-attention with scale 1/sqrt(D/heads).
MhsaResult mhsa_forward(const Tensor& x, const AttentionWeights& w, std::size_t num_heads);

class VisionTransformer {
 public:
  VisionTransformer() = default;
  // Truncated-normal(0.02) weights, zero biases and positional embeddings,
  // unit layernorm gains.
  VisionTransformer(const ViTConfig& config, Rng& rng);
  // Takes ownership of existing weights; key set must match the config.
  VisionTransformer(const ViTConfig& config, ModelWeights weights);

  const ViTConfig& config() const { return config_; }
  const ModelWeights& weights() const { return weights_; }
  ModelWeights& weights() { return weights_; }

  // images [B,C,H,W] or [C,H,W] (treated as B=1).
  ViTOutput forward(const Tensor& images, const ForwardOptions& opts = {}) const;

  // Expected parameter names and shapes, in allocation order.
  static WeightLayout layout(const ViTConfig& config);

 private:
  ViTConfig config_;
  ModelWeights weights_;
};

// Per-head maps of image b, layer-major then head order.
std::vector<AttentionMap> attention_maps(const ViTOutput& out, std::size_t batch_index = 0);

// Closed form:
//   patch embed      C*p*p*D + D
//   class token      D
//   positions        (N+1)*D
//   per block        2D (norm1) + 3D*D + 3D (qkv) + D*D + D (proj)
//                    + 2D (norm2) + D*h + h (fc1) + h*D + D (fc2)
//   final norm       2D
//   head             D*K + K
// with h = round(D * mlp_ratio) and K = num_classes.
std::size_t param_count(const ViTConfig& config);

struct ParamCountRow {
  std::string model;
  ViTConfig config;
  std::size_t computed = 0;
  std::size_t reference = 0;  // 0 when no reference count is published
  std::string note;
};

// Reference ViT configurations and their published parameter counts.
std::vector<ParamCountRow> param_count_report();
std::string format_param_count_report(const std::vector<ParamCountRow>& rows);

}  // namespace dfkd
