#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dfkd/core/tensor.hpp"

namespace dfkd {

struct FeatureStats {
  std::size_t dim = 0;
  std::vector<double> mean;        // [dim]
  std::vector<double> covariance;  // [dim * dim], row-major, symmetric
  std::size_t count = 0;
};

// Sample mean and unbiased (M-1) covariance of the rows of features [M, d].
FeatureStats feature_stats(const Tensor& features);
FeatureStats feature_stats(std::span<const double> rows, std::size_t count, std::size_t dim);

// Principal square root of a symmetric PSD matrix [d*d] by eigendecomposition.
// Negative and numerically-zero eigenvalues are clamped to zero.
std::vector<double> matrix_sqrt_psd(std::span<const double> m, std::size_t d);

// ||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 sqrt(sqrt(S_r) S_g sqrt(S_r))), clamped at 0.
double fid(const FeatureStats& real, const FeatureStats& gen);

}  // namespace dfkd
