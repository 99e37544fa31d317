#include "dfkd/core/optim.hpp"

#include <cmath>

#include "dfkd/core/error.hpp"

namespace dfkd {

AdamConfig gan_adam_defaults() {
  return {1e-4, 0.5, 0.999, 1e-8, 2e-5, WeightDecayMode::coupled};
}

AdamConfig desk_gan_adam_defaults() {
  AdamConfig c = gan_adam_defaults();
  c.lr = 2e-4;
  return c;
}

AdamConfig distill_adamw_defaults() {
  return {7.5e-4, 0.5, 0.999, 1e-8, 0.025, WeightDecayMode::decoupled};
}

void write_adam(KeyValues& kv, const std::string& prefix, const AdamConfig& c) {
  kv.set(prefix + "lr", c.lr);
  kv.set(prefix + "beta1", c.beta1);
  kv.set(prefix + "beta2", c.beta2);
  kv.set(prefix + "eps", c.eps);
  kv.set(prefix + "weight_decay", c.weight_decay);
  kv.set(prefix + "decoupled", c.mode == WeightDecayMode::decoupled);
}

AdamConfig read_adam(const KeyValues& kv, const std::string& prefix, const AdamConfig& fallback) {
  AdamConfig c;
  c.lr = kv.get_double(prefix + "lr", fallback.lr);
  c.beta1 = kv.get_double(prefix + "beta1", fallback.beta1);
  c.beta2 = kv.get_double(prefix + "beta2", fallback.beta2);
  c.eps = kv.get_double(prefix + "eps", fallback.eps);
  c.weight_decay = kv.get_double(prefix + "weight_decay", fallback.weight_decay);
  c.mode = kv.get_bool(prefix + "decoupled", fallback.mode == WeightDecayMode::decoupled) ? WeightDecayMode::decoupled
                                                                                          : WeightDecayMode::coupled;
  return c;
}

void optimizer_step(std::span<Tensor> params, OptimizerState& state) {
  if (state.shapes.empty() && state.step == 0) {
    for (const Tensor& p : params) {
      state.shapes.push_back(p.shape());
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.shapes.size() != params.size())
    throw ContractError("optimizer: parameter count changed from " +
                        std::to_string(state.shapes.size()) + " to " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].shape() != state.shapes[i])
      throw ContractError("optimizer: parameter " + std::to_string(i) + " changed shape from " +
                          shape_str(state.shapes[i]) + " to " + shape_str(params[i].shape()));

  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].mutable_data();
    const auto grad = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      double g = grad[j];
      if (c.mode == WeightDecayMode::coupled) {
        g += c.weight_decay * theta[j];
      } else {
        theta[j] -= c.lr * c.weight_decay * theta[j];
      }
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)) {
  state_.config = config;
}

void Adam::step() { optimizer_step(params_, state_); }

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace dfkd
