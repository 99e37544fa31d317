#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dfkd/core/rng.hpp"
#include "dfkd/core/tensor.hpp"
#include "dfkd/core/weights.hpp"

namespace dfkd {

// Per-call switches shared by every model forward.
struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

Tensor truncated_normal_tensor(const Shape& shape, Rng& rng, double stddev = 0.02);
// Normal(0, stddev) entries, untruncated.
Tensor normal_tensor(const Shape& shape, Rng& rng, double stddev);

using WeightLayout = std::vector<std::pair<std::string, Shape>>;

// ConfigError for a missing or extra tensor, ShapeError for a wrong shape.
void check_layout(const std::string& model, const WeightLayout& layout, const ModelWeights& weights);

// Index batches of a fresh permutation of [0, n).
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng);

}  // namespace dfkd
