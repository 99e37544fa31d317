#include <cmath>
#include <numbers>

#include "dfkd/core/ops.hpp"
#include "op_util.hpp"

namespace dfkd::ops {

using namespace detail;

namespace {

// f maps x -> y; df maps (x, y) -> dy/dx.
template <class F, class DF>
Tensor unary(const Tensor& x, const char* name, F f, DF df) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return Tensor::make_result(x.shape(), std::move(out), name, {x}, [df](Node& n) {
    const auto& xs = parent_data(n, 0);
    auto& gx = parent_grad(n, 0);
    for (std::size_t i = 0; i < xs.size(); ++i) gx[i] += n.grad[i] * df(xs[i], n.data[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  k().add(a.data().data(), b.data().data(), out.data(), out.size());
  return Tensor::make_result(a.shape(), std::move(out), "add", {a, b}, [](Node& n) {
    for (std::size_t p = 0; p < 2; ++p)
      if (wants_grad(n, p)) k().axpy(1.0, n.grad.data(), parent_grad(n, p).data(), n.grad.size());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return Tensor::make_result(a.shape(), std::move(out), "sub", {a, b}, [](Node& n) {
    if (wants_grad(n, 0)) k().axpy(1.0, n.grad.data(), parent_grad(n, 0).data(), n.grad.size());
    if (wants_grad(n, 1)) k().axpy(-1.0, n.grad.data(), parent_grad(n, 1).data(), n.grad.size());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  k().mul(a.data().data(), b.data().data(), out.data(), out.size());
  return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b}, [](Node& n) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants_grad(n, p)) continue;
      const auto& other = parent_data(n, 1 - p);
      auto& g = parent_grad(n, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * other[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.numel());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] / bd[i];
  return Tensor::make_result(a.shape(), std::move(out), "div", {a, b}, [](Node& n) {
    const auto& bd = parent_data(n, 1);
    if (wants_grad(n, 0)) {
      auto& g = parent_grad(n, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / bd[i];
    }
    if (wants_grad(n, 1)) {
      auto& g = parent_grad(n, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i] * n.data[i] / bd[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  const Shape& xs = x.shape();
  const Shape& bs = b.shape();
  if (bs.size() > xs.size() || !std::equal(bs.begin(), bs.end(), xs.end() - bs.size()))
    throw ShapeError("add_bias: bias " + shape_str(bs) + " is not a suffix of " + shape_str(xs));
  const std::size_t inner = b.numel();
  const std::size_t outer = x.numel() / inner;
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t o = 0; o < outer; ++o) k().axpy(1.0, b.data().data(), out.data() + o * inner, inner);
  return Tensor::make_result(xs, std::move(out), "add_bias", {x, b}, [outer, inner](Node& n) {
    if (wants_grad(n, 0)) k().axpy(1.0, n.grad.data(), parent_grad(n, 0).data(), n.grad.size());
    if (wants_grad(n, 1)) {
      auto& g = parent_grad(n, 1);
      for (std::size_t o = 0; o < outer; ++o) k().axpy(1.0, n.grad.data() + o * inner, g.data(), inner);
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, "scale", [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(x, "add_scalar", [value](double v) { return v + value; },
               [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor relu(const Tensor& x) {
  return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
               [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(x, "tanh", [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& x) {
  return unary(x, "log", [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
  return unary(x, "exp", [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& x) {
  return unary(x, "sqrt", [](double v) { return std::sqrt(v); },
               [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary(x, "square", [](double v) { return v * v; },
               [](double v, double) { return 2.0 * v; });
}

}  // namespace dfkd::ops
