#pragma once

#include <string>
#include <vector>

#include "dfkd/core/error.hpp"
#include "dfkd/core/tensor.hpp"
#include "dfkd/kernels/kernels.hpp"

namespace dfkd::ops::detail {

using dfkd::detail::Node;

inline bool wants_grad(const Node& n, std::size_t parent) {
  return n.parents.size() > parent && n.parents[parent]->requires_grad;
}

inline std::vector<double>& parent_grad(Node& n, std::size_t parent) {
  return n.parents[parent]->grad_buffer();
}

inline const std::vector<double>& parent_data(const Node& n, std::size_t parent) {
  return n.parents[parent]->data;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
}

inline void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
}

inline std::vector<double> transpose_copy(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

inline const kernels::KernelTable& k() { return kernels::active(); }

}  // namespace dfkd::ops::detail
