#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfkd/core/keyvalue.hpp"
#include "dfkd/core/tensor.hpp"

namespace dfkd {

enum class WeightDecayMode {
  coupled,    // Adam: decay folded into the gradient
  decoupled,  // AdamW: parameters shrink by lr * decay before the moment step
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  WeightDecayMode mode = WeightDecayMode::coupled;
};

// lr 1e-4, betas (0.5, 0.999), decay 2e-5, Adam. Used for GAN training.
AdamConfig gan_adam_defaults();
// gan_adam_defaults with lr 2e-4; the desk-scale GAN default.
AdamConfig desk_gan_adam_defaults();
// lr 7.5e-4, betas (0.5, 0.999), decay 0.025, AdamW. Used for distillation.
AdamConfig distill_adamw_defaults();

// Keys prefix + {lr, beta1, beta2, eps, weight_decay, decoupled}.
void write_adam(KeyValues& kv, const std::string& prefix, const AdamConfig& c);
AdamConfig read_adam(const KeyValues& kv, const std::string& prefix, const AdamConfig& fallback);

struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One bias-corrected Adam/AdamW update of every tensor in params from its
// accumulated grad. The first call fixes the parameter layout; a later call
// with different shapes throws ContractError.
void optimizer_step(std::span<Tensor> params, OptimizerState& state);

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);
  void step();
  void zero_grad();
  const OptimizerState& state() const { return state_; }
  OptimizerState& state() { return state_; }

 private:
  std::vector<Tensor> params_;
  OptimizerState state_;
};

}  // namespace dfkd
