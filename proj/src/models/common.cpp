#include "dfkd/models/common.hpp"

#include <algorithm>
#include <numeric>

#include "dfkd/core/error.hpp"

namespace dfkd {

Tensor truncated_normal_tensor(const Shape& shape, Rng& rng, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.truncated_normal(stddev);
  return Tensor::from(shape, std::move(v));
}

Tensor normal_tensor(const Shape& shape, Rng& rng, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = stddev * rng.normal();
  return Tensor::from(shape, std::move(v));
}

void check_layout(const std::string& model, const WeightLayout& layout, const ModelWeights& weights) {
  if (weights.entries().size() != layout.size())
    throw ConfigError(model + ": expected " + std::to_string(layout.size()) + " tensors, got " +
                      std::to_string(weights.entries().size()));
  for (const auto& [name, shape] : layout) {
    if (!weights.contains(name)) throw ConfigError(model + ": missing weight '" + name + "'");
    if (weights.at(name).shape() != shape)
      throw ShapeError(model + ": weight '" + name + "' has shape " + shape_str(weights.at(name).shape()) +
                       ", expected " + shape_str(shape));
  }
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size)
    out.emplace_back(order.begin() + b, order.begin() + std::min(n, b + batch_size));
  return out;
}

}  // namespace dfkd
