#include "dfkd/core/weights.hpp"

#include "dfkd/core/error.hpp"

namespace dfkd {

Tensor& ModelWeights::add(std::string name, Tensor tensor, bool trainable) {
  if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
  tensor.set_requires_grad(trainable);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(tensor), trainable});
  return entries_.back().tensor;
}

bool ModelWeights::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

const Tensor& ModelWeights::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw IndexError("no parameter named " + std::string(name));
  return entries_[it->second].tensor;
}

Tensor& ModelWeights::at(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ModelWeights&>(*this).at(name));
}

std::vector<Tensor> ModelWeights::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

std::vector<std::string> ModelWeights::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::size_t ModelWeights::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.tensor.numel();
  return n;
}

std::size_t ModelWeights::total_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ModelWeights::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ModelWeights::freeze() {
  for (auto& e : entries_) e.tensor.set_requires_grad(false);
}

void ModelWeights::unfreeze() {
  for (auto& e : entries_) e.tensor.set_requires_grad(e.trainable);
}

ModelWeights ModelWeights::deep_copy() const {
  ModelWeights out;
  for (const auto& e : entries_) {
    out.add(e.name, e.tensor.detach(), e.trainable);
    out.at(e.name).set_requires_grad(e.tensor.requires_grad());
  }
  return out;
}

}  // namespace dfkd
