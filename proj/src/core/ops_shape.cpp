#include <algorithm>
#include <numeric>

#include "dfkd/core/ops.hpp"
#include "op_util.hpp"

namespace dfkd::ops {

using namespace detail;

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(shape, std::move(out), "reshape", {x}, [](Node& n) {
    k().axpy(1.0, n.grad.data(), parent_grad(n, 0).data(), n.grad.size());
  });
}

namespace {

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// For each output flat index, the input flat index it reads.
std::vector<std::size_t> permute_index(const Shape& in_shape, const std::vector<std::size_t>& order) {
  const std::size_t r = in_shape.size();
  const auto in_strides = strides_of(in_shape);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[order[i]];
  std::vector<std::size_t> map(shape_numel(in_shape));
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < map.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * in_strides[order[i]];
    map[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  return map;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const std::size_t r = x.rank();
  std::vector<std::size_t> check(order);
  std::sort(check.begin(), check.end());
  std::vector<std::size_t> iota(r);
  std::iota(iota.begin(), iota.end(), 0);
  if (check != iota) throw ShapeError("permute: invalid axis order for " + shape_str(x.shape()));
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(order[i]);
  auto map = permute_index(x.shape(), order);
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[map[i]];
  return Tensor::make_result(std::move(out_shape), std::move(out), "permute", {x},
                             [map = std::move(map)](Node& n) {
                               auto& g = parent_grad(n, 0);
                               for (std::size_t i = 0; i < map.size(); ++i) g[map[i]] += n.grad[i];
                             });
}

Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1) {
  if (axis0 >= x.rank() || axis1 >= x.rank())
    throw IndexError("transpose: axes out of range for " + shape_str(x.shape()));
  std::vector<std::size_t> order(x.rank());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[axis0], order[axis1]);
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw IndexError("concat: axis out of range for " + shape_str(first));
  std::size_t outer = 1, inner = 1, total = 0;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> lens;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok)
      throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(first) +
                       " along axis " + std::to_string(axis));
    lens.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto in = parts[p].data();
    const std::size_t block = lens[p] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(in.begin() + o * block, in.begin() + (o + 1) * block,
                out.begin() + (o * total + offset) * inner);
    offset += lens[p];
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), "concat", parts,
                             [outer, inner, total, lens](Node& n) {
                               std::size_t offset = 0;
                               for (std::size_t p = 0; p < lens.size(); ++p) {
                                 const std::size_t block = lens[p] * inner;
                                 if (wants_grad(n, p)) {
                                   auto& g = parent_grad(n, p);
                                   for (std::size_t o = 0; o < outer; ++o)
                                     k().axpy(1.0, n.grad.data() + (o * total + offset) * inner,
                                              g.data() + o * block, block);
                                 }
                                 offset += lens[p];
                               }
                             });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank()) throw IndexError("slice: axis out of range for " + shape_str(x.shape()));
  if (begin >= end || end > x.dim(axis))
    throw IndexError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(x.shape()) + " axis " + std::to_string(axis));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis), w = end - begin;
  Shape out_shape = x.shape();
  out_shape[axis] = w;
  const auto in = x.data();
  std::vector<double> out(outer * w * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(in.begin() + (o * len + begin) * inner, in.begin() + (o * len + end) * inner,
              out.begin() + o * w * inner);
  return Tensor::make_result(std::move(out_shape), std::move(out), "slice", {x},
                             [outer, inner, len, begin, w](Node& n) {
                               auto& g = parent_grad(n, 0);
                               for (std::size_t o = 0; o < outer; ++o)
                                 k().axpy(1.0, n.grad.data() + o * w * inner,
                                          g.data() + (o * len + begin) * inner, w * inner);
                             });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw ContractError("embedding: empty id list");
  std::vector<int> idv(ids.begin(), ids.end());
  std::vector<double> out(idv.size() * d);
  const auto td = table.data();
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= rows)
      throw IndexError("embedding: id " + std::to_string(idv[i]) + " outside table of " +
                       std::to_string(rows));
    std::copy(td.begin() + idv[i] * d, td.begin() + (idv[i] + 1) * d, out.begin() + i * d);
  }
  const Shape out_shape{idv.size(), d};
  return Tensor::make_result(out_shape, std::move(out), "embedding", {table},
                             [idv = std::move(idv), d](Node& n) {
                               auto& g = parent_grad(n, 0);
                               for (std::size_t i = 0; i < idv.size(); ++i)
                                 k().axpy(1.0, n.grad.data() + i * d, g.data() + idv[i] * d, d);
                             });
}

}  // namespace dfkd::ops
