#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dfkd/core/tensor.hpp"
#include "dfkd/models/vit.hpp"

namespace dfkd {

enum class HeadAggregation { mean, single };

struct ProbeSelection {
  // Negative values count from the last layer (-1 = final layer).
  long layer = -1;
  HeadAggregation aggregation = HeadAggregation::mean;
  std::size_t head = 0;  // used with HeadAggregation::single

  std::size_t resolve_layer(std::size_t depth) const;
};

// Row 0 of a layer's attention map restricted to columns 1..N. Not
// renormalized after the class entry is dropped.
struct AttentionProbe {
  std::size_t layer = 0;
  HeadAggregation aggregation = HeadAggregation::mean;
  std::vector<double> values;
};

struct ClassAttentionProbe {
  int class_id = 0;
  std::vector<double> values;
  std::size_t sample_count = 0;
};

AttentionProbe extract_probe(const std::vector<AttentionMap>& maps, const ProbeSelection& sel = {});

// Elementwise mean of the probes.
ClassAttentionProbe class_attention_probe(const std::vector<AttentionProbe>& probes, int class_id = 0);

// Running per-class sums; finalize() yields the class means.
class CapAccumulator {
 public:
  CapAccumulator(std::size_t num_classes, std::size_t num_patches);
  void add(int class_id, std::span<const double> probe);
  std::size_t count(int class_id) const;
  // Throws ContractError if any class has no contributing probe.
  std::vector<ClassAttentionProbe> finalize() const;

 private:
  std::size_t n_;
  std::vector<std::vector<double>> sums_;
  std::vector<std::size_t> counts_;
};

double cosine_similarity(std::span<const double> u, std::span<const double> v);
double attention_consistency_loss(const AttentionProbe& ap, const ClassAttentionProbe& cap);

// Differentiable probes for a whole batch: [B, N] from per-layer
// [B, heads, T, T] attention tensors.
Tensor probe_tensor(const std::vector<Tensor>& layer_attention, const ProbeSelection& sel = {});
// Mean over rows of 1 - cos(probes[i], targets[i]); targets are constants.
Tensor attention_consistency_loss(const Tensor& probes, const Tensor& targets);

// Stack CAP rows for the given labels into a [B, N] tensor.
Tensor cap_targets(const std::vector<ClassAttentionProbe>& caps, std::span<const int> labels);

std::string aggregation_name(HeadAggregation a);

}  // namespace dfkd
