#include "dfkd/core/ops.hpp"
#include "op_util.hpp"

namespace dfkd::ops {

using namespace detail;

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
  if (b.dim(0) != kk)
    throw ShapeError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  k().gemm(m, n, kk, a.data().data(), kk, b.data().data(), n, out.data(), n);
  return Tensor::make_result({m, n}, std::move(out), "matmul", {a, b}, [m, kk, n](Node& nd) {
    const auto& ad = parent_data(nd, 0);
    const auto& bd = parent_data(nd, 1);
    if (wants_grad(nd, 0)) {
      const auto bt = transpose_copy(bd.data(), kk, n);
      k().gemm(m, kk, n, nd.grad.data(), n, bt.data(), kk, parent_grad(nd, 0).data(), kk);
    }
    if (wants_grad(nd, 1)) {
      const auto at = transpose_copy(ad.data(), m, kk);
      k().gemm(kk, n, m, at.data(), m, nd.grad.data(), n, parent_grad(nd, 1).data(), n);
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.dim(0), m = a.dim(1), kk = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bk != kk)
    throw ShapeError("bmm: incompatible " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     (transpose_b ? " (transposed)" : ""));
  std::vector<double> out(batch * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    const double* bi = bd + i * kk * n;
    if (transpose_b) {
      const auto bt = transpose_copy(bi, n, kk);
      k().gemm(m, n, kk, ad + i * m * kk, kk, bt.data(), n, out.data() + i * m * n, n);
    } else {
      k().gemm(m, n, kk, ad + i * m * kk, kk, bi, n, out.data() + i * m * n, n);
    }
  }
  return Tensor::make_result(
      {batch, m, n}, std::move(out), "bmm", {a, b}, [batch, m, kk, n, transpose_b](Node& nd) {
        const double* ad = parent_data(nd, 0).data();
        const double* bd = parent_data(nd, 1).data();
        const bool ga = wants_grad(nd, 0), gb = wants_grad(nd, 1);
        double* gad = ga ? parent_grad(nd, 0).data() : nullptr;
        double* gbd = gb ? parent_grad(nd, 1).data() : nullptr;
        for (std::size_t i = 0; i < batch; ++i) {
          const double* gc = nd.grad.data() + i * m * n;
          const double* ai = ad + i * m * kk;
          const double* bi = bd + i * kk * n;
          if (transpose_b) {
            // C = A B^T with B [n x k]
            if (ga) k().gemm(m, kk, n, gc, n, bi, kk, gad + i * m * kk, kk);
            if (gb) {
              const auto gct = transpose_copy(gc, m, n);
              k().gemm(n, kk, m, gct.data(), m, ai, kk, gbd + i * kk * n, kk);
            }
          } else {
            if (ga) {
              const auto bt = transpose_copy(bi, kk, n);
              k().gemm(m, kk, n, gc, n, bt.data(), kk, gad + i * m * kk, kk);
            }
            if (gb) {
              const auto at = transpose_copy(ai, m, kk);
              k().gemm(kk, n, m, at.data(), m, gc, n, gbd + i * kk * n, n);
            }
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear");
  const std::size_t out_f = weight.dim(0), in_f = weight.dim(1);
  if (x.rank() == 0 || x.shape().back() != in_f)
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  if (bias.defined() && bias.shape() != Shape{out_f})
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " for " + std::to_string(out_f) +
                     " outputs");
  const std::size_t rows = x.numel() / in_f;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  std::vector<double> out(rows * out_f, 0.0);
  if (bias.defined())
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(bias.data().begin(), bias.data().end(), out.begin() + r * out_f);
  const auto wt = transpose_copy(weight.data().data(), out_f, in_f);
  k().gemm(rows, out_f, in_f, x.data().data(), in_f, wt.data(), out_f, out.data(), out_f);

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make_result(
      std::move(out_shape), std::move(out), "linear", std::move(inputs), [rows, in_f, out_f](Node& n) {
        if (wants_grad(n, 0))
          k().gemm(rows, in_f, out_f, n.grad.data(), out_f, parent_data(n, 1).data(), in_f,
                   parent_grad(n, 0).data(), in_f);
        if (wants_grad(n, 1)) {
          const auto gt = transpose_copy(n.grad.data(), rows, out_f);
          k().gemm(out_f, in_f, rows, gt.data(), rows, parent_data(n, 0).data(), in_f,
                   parent_grad(n, 1).data(), in_f);
        }
        if (wants_grad(n, 2)) {
          auto& gb = parent_grad(n, 2);
          for (std::size_t r = 0; r < rows; ++r) k().axpy(1.0, n.grad.data() + r * out_f, gb.data(), out_f);
        }
      });
}

}  // namespace dfkd::ops
