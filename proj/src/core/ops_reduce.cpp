#include <algorithm>
#include <cmath>

#include "dfkd/core/ops.hpp"
#include "op_util.hpp"

namespace dfkd::ops {

using namespace detail;

namespace {

struct AxisSplit {
  std::size_t outer, len, inner;
};

std::size_t normalize_axis(const Tensor& x, std::ptrdiff_t axis) {
  const auto r = static_cast<std::ptrdiff_t>(x.rank());
  const std::ptrdiff_t a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw IndexError("axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  return static_cast<std::size_t>(a);
}

AxisSplit split(const Shape& s, std::size_t axis) {
  AxisSplit out{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) out.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) out.inner *= s[i];
  return out;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out.push_back(s[i]);
  if (out.empty()) out.push_back(1);
  return out;
}

void check_temperature(double t) {
  if (!(t > 0.0)) throw DomainError("softmax temperature must be positive, got " + std::to_string(t));
}

}  // namespace

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make_result({1}, {s}, "sum", {x}, [](Node& n) {
    auto& g = parent_grad(n, 0);
    for (double& v : g) v += n.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make_result({1}, {s * inv}, "mean", {x}, [inv](Node& n) {
    auto& g = parent_grad(n, 0);
    for (double& v : g) v += n.grad[0] * inv;
  });
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  normalize_axis(x, static_cast<std::ptrdiff_t>(axis));
  const AxisSplit sp = split(x.shape(), axis);
  const auto in = x.data();
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.len; ++l)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += in[(o * sp.len + l) * sp.inner + i];
  return Tensor::make_result(drop_axis(x.shape(), axis), std::move(out), "sum_axis", {x},
                             [sp](Node& n) {
                               auto& g = parent_grad(n, 0);
                               for (std::size_t o = 0; o < sp.outer; ++o)
                                 for (std::size_t l = 0; l < sp.len; ++l)
                                   for (std::size_t i = 0; i < sp.inner; ++i)
                                     g[(o * sp.len + l) * sp.inner + i] += n.grad[o * sp.inner + i];
                             });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor softmax(const Tensor& x, double temperature, std::ptrdiff_t axis_in) {
  check_temperature(temperature);
  const std::size_t axis = normalize_axis(x, axis_in);
  const AxisSplit sp = split(x.shape(), axis);
  const auto in = x.data();
  std::vector<double> out(in.size());
  const double inv_t = 1.0 / temperature;
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      double mx = -INFINITY;
      for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, in[base + l * sp.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) {
        const double e = std::exp((in[base + l * sp.inner] - mx) * inv_t);
        out[base + l * sp.inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < sp.len; ++l) out[base + l * sp.inner] /= z;
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), "softmax", {x}, [sp, inv_t](Node& n) {
    auto& g = parent_grad(n, 0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t idx = base + l * sp.inner;
          dot += n.grad[idx] * n.data[idx];
        }
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t idx = base + l * sp.inner;
          g[idx] += n.data[idx] * (n.grad[idx] - dot) * inv_t;
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, double temperature, std::ptrdiff_t axis_in) {
  check_temperature(temperature);
  const std::size_t axis = normalize_axis(x, axis_in);
  const AxisSplit sp = split(x.shape(), axis);
  const auto in = x.data();
  std::vector<double> out(in.size());
  const double inv_t = 1.0 / temperature;
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      double mx = -INFINITY;
      for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, in[base + l * sp.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) z += std::exp((in[base + l * sp.inner] - mx) * inv_t);
      const double lz = std::log(z);
      for (std::size_t l = 0; l < sp.len; ++l)
        out[base + l * sp.inner] = (in[base + l * sp.inner] - mx) * inv_t - lz;
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), "log_softmax", {x}, [sp, inv_t](Node& n) {
    auto& g = parent_grad(n, 0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        double gs = 0.0;
        for (std::size_t l = 0; l < sp.len; ++l) gs += n.grad[base + l * sp.inner];
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t idx = base + l * sp.inner;
          g[idx] += (n.grad[idx] - std::exp(n.data[idx]) * gs) * inv_t;
        }
      }
    }
  });
}

}  // namespace dfkd::ops
