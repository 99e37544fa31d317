#include "dfkd/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dfkd/core/ops.hpp"

namespace dfkd {

GradCheckResult check_gradients(const DiffFunction& f, std::vector<Tensor> inputs, Rng rng,
                                double step) {
  GradCheckResult result;
  Tensor probe_out;
  {
    NoGradGuard guard;
    probe_out = f(inputs);
  }
  std::vector<double> weights(probe_out.numel());
  for (double& w : weights) w = rng.uniform(-1.0, 1.0);
  const Tensor projection = Tensor::from(probe_out.shape(), weights);

  const auto project = [&](const Tensor& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += y.data()[i] * weights[i];
    return s;
  };

  for (Tensor& t : inputs)
    if (t.requires_grad()) t.zero_grad();
  ops::sum(ops::mul(f(inputs), projection)).backward();

  for (Tensor& t : inputs) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(t.numel());
    auto data = t.mutable_data();
    NoGradGuard guard;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + step;
      const double up = project(f(inputs));
      data[i] = orig - step;
      const double down = project(f(inputs));
      data[i] = orig;
      numeric[i] = (up - down) / (2.0 * step);
      result.evaluations += 2;
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
    const double rel = (diff == 0.0) ? 0.0 : std::sqrt(diff) / denom;
    result.relative_errors.push_back(rel);
    result.max_relative_error = std::max(result.max_relative_error, rel);
  }
  return result;
}

}  // namespace dfkd
