#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dfkd/core/rng.hpp"
#include "dfkd/core/tensor.hpp"

namespace dfkd {

struct GradCheckResult {
  // Per input: ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2).
  std::vector<double> relative_errors;
  double max_relative_error = 0.0;
  std::size_t evaluations = 0;
};

using DiffFunction = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares backward() against central finite differences of the scalar
// projection sum(f(inputs) * R), with R a fixed random tensor drawn from rng.
// Inputs that do not require grad are skipped. f must be deterministic.
GradCheckResult check_gradients(const DiffFunction& f, std::vector<Tensor> inputs, Rng rng,
                                double step = 1e-5);

}  // namespace dfkd
