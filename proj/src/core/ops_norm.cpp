#include <cmath>

#include "dfkd/core/ops.hpp"
#include "op_util.hpp"

namespace dfkd::ops {

using namespace detail;

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (!(eps > 0.0)) throw DomainError("layernorm: eps must be positive");
  if (x.rank() == 0 || x.shape().back() == 0) throw ShapeError("layernorm: empty feature axis");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    throw ShapeError("layernorm: affine parameters must have shape [" + std::to_string(d) + "]");
  const std::size_t rows = x.numel() / d;
  const auto in = x.data();
  const auto ga = gamma.data();
  const auto be = beta.data();
  std::vector<double> out(in.size());
  // Saved per row: normalized values and inverse std.
  std::vector<double> xhat(in.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      const double xh = (row[i] - mu) * inv_std[r];
      xhat[r * d + i] = xh;
      out[r * d + i] = xh * ga[i] + be[i];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), "layernorm", {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
        const auto& ga = parent_data(n, 1);
        if (wants_grad(n, 0)) {
          auto& gx = parent_grad(n, 0);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
              const double dxh = n.grad[r * d + i] * ga[i];
              s1 += dxh;
              s2 += dxh * xhat[r * d + i];
            }
            for (std::size_t i = 0; i < d; ++i) {
              const double dxh = n.grad[r * d + i] * ga[i];
              gx[r * d + i] += inv_std[r] * (dxh - inv_d * s1 - xhat[r * d + i] * inv_d * s2);
            }
          }
        }
        if (wants_grad(n, 1)) {
          auto& gg = parent_grad(n, 1);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < d; ++i) gg[i] += n.grad[r * d + i] * xhat[r * d + i];
        }
        if (wants_grad(n, 2)) {
          auto& gb = parent_grad(n, 2);
          for (std::size_t r = 0; r < rows; ++r) k().axpy(1.0, n.grad.data() + r * d, gb.data(), d);
        }
      });
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                   bool training, double momentum, double eps) {
  require_rank(x, 4, "batchnorm2d");
  const std::size_t batch = x.dim(0), ch = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{ch} || beta.shape() != Shape{ch} ||
      stats.running_mean.shape() != Shape{ch} || stats.running_var.shape() != Shape{ch})
    throw ShapeError("batchnorm2d: per-channel tensors must have shape [" + std::to_string(ch) + "]");
  const std::size_t count = batch * plane;
  if (training && count < 2) throw ContractError("batchnorm2d: training needs more than one value per channel");
  const auto in = x.data();
  const auto ga = gamma.data();
  const auto be = beta.data();
  std::vector<double> mean(ch, 0.0), inv_std(ch);
  if (training) {
    std::vector<double> var(ch, 0.0);
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < plane; ++i) s += in[(b * ch + c) * plane + i];
      mean[c] = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
          const double dv = in[(b * ch + c) * plane + i] - mean[c];
          v += dv * dv;
        }
      var[c] = v / static_cast<double>(count);
      inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    }
    auto rm = stats.running_mean.mutable_data();
    auto rv = stats.running_var.mutable_data();
    const double unbias = static_cast<double>(count) / static_cast<double>(count - 1);
    for (std::size_t c = 0; c < ch; ++c) {
      rm[c] = (1.0 - momentum) * rm[c] + momentum * mean[c];
      rv[c] = (1.0 - momentum) * rv[c] + momentum * var[c] * unbias;
    }
  } else {
    const auto rm = stats.running_mean.data();
    const auto rv = stats.running_var.data();
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + eps);
    }
  }
  std::vector<double> out(in.size()), xhat(in.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t idx = (b * ch + c) * plane + i;
        xhat[idx] = (in[idx] - mean[c]) * inv_std[c];
        out[idx] = xhat[idx] * ga[c] + be[c];
      }
  return Tensor::make_result(
      x.shape(), std::move(out), "batchnorm2d", {x, gamma, beta},
      [batch, ch, plane, count, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
        const auto& ga = parent_data(n, 1);
        const bool gx = wants_grad(n, 0), gg = wants_grad(n, 1), gb = wants_grad(n, 2);
        for (std::size_t c = 0; c < ch; ++c) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t idx = (b * ch + c) * plane + i;
              s1 += n.grad[idx];
              s2 += n.grad[idx] * xhat[idx];
            }
          if (gg) parent_grad(n, 1)[c] += s2;
          if (gb) parent_grad(n, 2)[c] += s1;
          if (!gx) continue;
          auto& g = parent_grad(n, 0);
          const double scale = ga[c] * inv_std[c];
          const double inv_n = 1.0 / static_cast<double>(count);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t idx = (b * ch + c) * plane + i;
              g[idx] += training ? scale * (n.grad[idx] - inv_n * s1 - xhat[idx] * inv_n * s2)
                                 : scale * n.grad[idx];
            }
        }
      });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw DomainError("dropout: probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  k().mul(x.data().data(), mask.data(), out.data(), out.size());
  return Tensor::make_result(x.shape(), std::move(out), "dropout", {x},
                             [mask = std::move(mask)](Node& n) {
                               auto& g = parent_grad(n, 0);
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * mask[i];
                             });
}

}  // namespace dfkd::ops
