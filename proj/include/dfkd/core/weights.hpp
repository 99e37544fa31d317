#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dfkd/core/tensor.hpp"

namespace dfkd {

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;  // false for buffers such as batchnorm running stats
};

// Parameters keyed by canonical dotted path, kept in insertion order so
// checkpoints and optimizers see a stable layout.
class ModelWeights {
 public:
  Tensor& add(std::string name, Tensor tensor, bool trainable = true);

  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::vector<Tensor> trainable() const;
  std::vector<std::string> names() const;

  // Total scalars in trainable tensors.
  std::size_t trainable_count() const;
  std::size_t total_count() const;

  void zero_grad();
  // Stop recording gradients for every tensor (frozen teacher).
  void freeze();
  void unfreeze();

  ModelWeights deep_copy() const;

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dfkd
