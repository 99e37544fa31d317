#include "dfkd/models/probes.hpp"

#include <cmath>

#include "dfkd/core/error.hpp"
#include "dfkd/core/ops.hpp"

namespace dfkd {

namespace o = ops;

std::size_t ProbeSelection::resolve_layer(std::size_t depth) const {
  const long l = layer < 0 ? static_cast<long>(depth) + layer : layer;
  if (l < 0 || static_cast<std::size_t>(l) >= depth)
    throw IndexError("probe layer " + std::to_string(layer) + " out of range for " + std::to_string(depth) +
                     " layers");
  return static_cast<std::size_t>(l);
}

std::string aggregation_name(HeadAggregation a) { return a == HeadAggregation::mean ? "mean" : "single"; }

AttentionProbe extract_probe(const std::vector<AttentionMap>& maps, const ProbeSelection& sel) {
  if (maps.empty()) throw ContractError("extract_probe: no attention maps");
  std::size_t depth = 0;
  for (const auto& m : maps) depth = std::max(depth, m.layer + 1);
  const std::size_t layer = sel.resolve_layer(depth);
  AttentionProbe probe{layer, sel.aggregation, {}};
  std::size_t used = 0;
  for (const auto& m : maps) {
    if (m.layer != layer) continue;
    if (sel.aggregation == HeadAggregation::single && m.head != sel.head) continue;
    if (m.tokens < 2) throw ShapeError("extract_probe: map needs at least one patch token");
    if (probe.values.empty()) probe.values.assign(m.tokens - 1, 0.0);
    if (probe.values.size() != m.tokens - 1) throw ShapeError("extract_probe: heads disagree on token count");
    for (std::size_t j = 1; j < m.tokens; ++j) probe.values[j - 1] += m.at(0, j);
    ++used;
  }
  if (used == 0) throw IndexError("extract_probe: no map for layer " + std::to_string(layer) + " head " +
                                  std::to_string(sel.head));
  for (double& v : probe.values) v /= static_cast<double>(used);
  return probe;
}

ClassAttentionProbe class_attention_probe(const std::vector<AttentionProbe>& probes, int class_id) {
  if (probes.empty()) throw ContractError("class_attention_probe: empty probe list");
  const std::size_t n = probes.front().values.size();
  ClassAttentionProbe cap{class_id, std::vector<double>(n, 0.0), probes.size()};
  for (const auto& p : probes) {
    if (p.values.size() != n) throw ShapeError("class_attention_probe: probe lengths differ");
    for (std::size_t i = 0; i < n; ++i) cap.values[i] += p.values[i];
  }
  for (double& v : cap.values) v /= static_cast<double>(probes.size());
  return cap;
}

CapAccumulator::CapAccumulator(std::size_t num_classes, std::size_t num_patches)
    : n_(num_patches), sums_(num_classes, std::vector<double>(num_patches, 0.0)), counts_(num_classes, 0) {}

void CapAccumulator::add(int class_id, std::span<const double> probe) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= sums_.size())
    throw DomainError("cap accumulator: class " + std::to_string(class_id) + " out of range");
  if (probe.size() != n_) throw ShapeError("cap accumulator: probe length mismatch");
  for (std::size_t i = 0; i < n_; ++i) sums_[class_id][i] += probe[i];
  ++counts_[class_id];
}

std::size_t CapAccumulator::count(int class_id) const { return counts_.at(class_id); }

std::vector<ClassAttentionProbe> CapAccumulator::finalize() const {
  std::vector<ClassAttentionProbe> caps;
  for (std::size_t c = 0; c < sums_.size(); ++c) {
    if (counts_[c] == 0) throw ContractError("cap accumulator: class " + std::to_string(c) + " has no samples");
    ClassAttentionProbe cap{static_cast<int>(c), sums_[c], counts_[c]};
    for (double& v : cap.values) v /= static_cast<double>(counts_[c]);
    caps.push_back(std::move(cap));
  }
  return caps;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ShapeError("cosine_similarity: lengths differ");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw DomainError("cosine_similarity: zero vector");
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

double attention_consistency_loss(const AttentionProbe& ap, const ClassAttentionProbe& cap) {
  if (ap.values.size() != cap.values.size()) throw ShapeError("attention_consistency_loss: lengths differ");
  return 1.0 - cosine_similarity(ap.values, cap.values);
}

Tensor probe_tensor(const std::vector<Tensor>& layer_attention, const ProbeSelection& sel) {
  if (layer_attention.empty()) throw ContractError("probe_tensor: no attention maps");
  const Tensor& a = layer_attention[sel.resolve_layer(layer_attention.size())];
  if (a.rank() != 4) throw ShapeError("probe_tensor: expected [B,H,T,T], got " + shape_str(a.shape()));
  const std::size_t b = a.dim(0), heads = a.dim(1), t = a.dim(2);
  Tensor row = o::slice(o::slice(a, 2, 0, 1), 3, 1, t);  // [B,H,1,N]
  if (sel.aggregation == HeadAggregation::single) {
    if (sel.head >= heads) throw IndexError("probe_tensor: head " + std::to_string(sel.head) + " out of range");
    row = o::slice(row, 1, sel.head, sel.head + 1);
  } else {
    row = o::mean_axis(row, 1);
  }
  return o::reshape(row, {b, t - 1});
}

Tensor attention_consistency_loss(const Tensor& probes, const Tensor& targets) {
  const Tensor cos = o::cosine_similarity_rows(probes, targets.detach());
  return o::add_scalar(o::neg(o::mean(cos)), 1.0);
}

Tensor cap_targets(const std::vector<ClassAttentionProbe>& caps, std::span<const int> labels) {
  if (caps.empty()) throw ContractError("cap_targets: no caps");
  const std::size_t n = caps.front().values.size();
  std::vector<double> v;
  v.reserve(labels.size() * n);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= caps.size())
      throw DomainError("cap_targets: label " + std::to_string(l) + " has no cap");
    v.insert(v.end(), caps[l].values.begin(), caps[l].values.end());
  }
  return Tensor::from({labels.size(), n}, std::move(v));
}

}  // namespace dfkd
