#include "dfkd/metrics/fid.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "dfkd/core/error.hpp"

namespace dfkd {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_matrix(std::span<const double> m, std::size_t d) {
  Matrix out(d, d);
  std::copy(m.begin(), m.end(), out.data());
  return out;
}

Matrix sqrt_symmetric(const Matrix& m) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw DomainError("matrix_sqrt_psd: eigendecomposition failed");
  Eigen::VectorXd values = solver.eigenvalues();
  const double top = values.cwiseAbs().maxCoeff();
  const double floor = top * 1e-14 * static_cast<double>(m.rows());
  for (Eigen::Index i = 0; i < values.size(); ++i)
    values(i) = values(i) > floor ? std::sqrt(values(i)) : 0.0;
  const Matrix& v = solver.eigenvectors();
  Matrix s = v * values.asDiagonal() * v.transpose();
  return 0.5 * (s + s.transpose());
}

}  // namespace

FeatureStats feature_stats(const Tensor& features) {
  if (features.rank() != 2) throw ShapeError("feature_stats: expected [M, d] features");
  return feature_stats(features.data(), features.dim(0), features.dim(1));
}

FeatureStats feature_stats(std::span<const double> rows, std::size_t count, std::size_t dim) {
  if (count < 2) throw ContractError("feature_stats: need at least 2 samples, got " + std::to_string(count));
  if (dim == 0 || rows.size() != count * dim) throw ShapeError("feature_stats: data size does not match M x d");
  FeatureStats s;
  s.dim = dim;
  s.count = count;
  s.mean.assign(dim, 0.0);
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t j = 0; j < dim; ++j) s.mean[j] += rows[r * dim + j];
  for (double& m : s.mean) m /= static_cast<double>(count);
  s.covariance.assign(dim * dim, 0.0);
  std::vector<double> centered(dim);
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t j = 0; j < dim; ++j) centered[j] = rows[r * dim + j] - s.mean[j];
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = i; j < dim; ++j) s.covariance[i * dim + j] += centered[i] * centered[j];
  }
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i; j < dim; ++j) {
      const double v = s.covariance[i * dim + j] / static_cast<double>(count - 1);
      s.covariance[i * dim + j] = v;
      s.covariance[j * dim + i] = v;
    }
  return s;
}

std::vector<double> matrix_sqrt_psd(std::span<const double> m, std::size_t d) {
  if (d == 0 || m.size() != d * d) throw ShapeError("matrix_sqrt_psd: expected a square matrix");
  const Matrix a = to_matrix(m, d);
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw ContractError("matrix_sqrt_psd: matrix is not symmetric");
  const Matrix s = sqrt_symmetric(a);
  return {s.data(), s.data() + d * d};
}

double fid(const FeatureStats& real, const FeatureStats& gen) {
  if (real.dim != gen.dim)
    throw ShapeError("fid: feature dimensions differ (" + std::to_string(real.dim) + " vs " +
                     std::to_string(gen.dim) + ")");
  const std::size_t d = real.dim;
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) mean_term += (real.mean[i] - gen.mean[i]) * (real.mean[i] - gen.mean[i]);
  const Matrix sr = to_matrix(real.covariance, d), sg = to_matrix(gen.covariance, d);
  const Matrix root_r = sqrt_symmetric(sr);
  const Matrix cross = sqrt_symmetric(root_r * sg * root_r);
  const double value = mean_term + sr.trace() + sg.trace() - 2.0 * cross.trace();
  return std::max(0.0, value);
}

}  // namespace dfkd
