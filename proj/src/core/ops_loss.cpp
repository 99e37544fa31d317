#include <algorithm>
#include <cmath>

#include "dfkd/core/ops.hpp"
#include "op_util.hpp"

namespace dfkd::ops {

using namespace detail;

namespace {

// Row-wise softmax of logits / T.
std::vector<double> softmax_rows(std::span<const double> x, std::size_t rows, std::size_t cols,
                                 double inv_t) {
  std::vector<double> p(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (p[r * cols + c] = std::exp((row[c] - mx) * inv_t));
    for (std::size_t c = 0; c < cols; ++c) p[r * cols + c] /= z;
  }
  return p;
}

}  // namespace

Tensor cosine_similarity_rows(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "cosine_similarity_rows");
  require_same_shape(a, b, "cosine_similarity_rows");
  const std::size_t rows = a.dim(0), d = a.dim(1);
  const auto& kt = k();
  std::vector<double> out(rows), na(rows), nb(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* ar = a.data().data() + r * d;
    const double* br = b.data().data() + r * d;
    na[r] = std::sqrt(kt.dot(ar, ar, d));
    nb[r] = std::sqrt(kt.dot(br, br, d));
    if (na[r] == 0.0 || nb[r] == 0.0)
      throw DomainError("cosine similarity of a zero vector is undefined");
    out[r] = kt.dot(ar, br, d) / (na[r] * nb[r]);
  }
  return Tensor::make_result(
      {rows}, std::move(out), "cosine_similarity_rows", {a, b},
      [rows, d, na = std::move(na), nb = std::move(nb)](Node& n) {
        const auto& ad = parent_data(n, 0);
        const auto& bd = parent_data(n, 1);
        for (std::size_t p = 0; p < 2; ++p) {
          if (!wants_grad(n, p)) continue;
          const auto& self = p == 0 ? ad : bd;
          const auto& other = p == 0 ? bd : ad;
          const auto& ns = p == 0 ? na : nb;
          const auto& no = p == 0 ? nb : na;
          auto& g = parent_grad(n, p);
          for (std::size_t r = 0; r < rows; ++r) {
            const double gc = n.grad[r], cs = n.data[r];
            for (std::size_t i = 0; i < d; ++i) {
              const std::size_t idx = r * d + i;
              g[idx] += gc * (other[idx] / (ns[r] * no[r]) - cs * self[idx] / (ns[r] * ns[r]));
            }
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (labels.size() != rows)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  std::vector<int> lab(labels.begin(), labels.end());
  for (int y : lab)
    if (y < 0 || static_cast<std::size_t>(y) >= cols)
      throw DomainError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(cols) + ")");
  auto p = softmax_rows(logits.data(), rows, cols, 1.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    // log p computed from logits directly for accuracy near p = 0
    const double* row = logits.data().data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    loss -= (row[lab[r]] - mx) - std::log(z);
  }
  loss /= static_cast<double>(rows);
  return Tensor::make_result({1}, {loss}, "cross_entropy", {logits},
                             [rows, cols, p = std::move(p), lab = std::move(lab)](Node& n) {
                               auto& g = parent_grad(n, 0);
                               const double s = n.grad[0] / static_cast<double>(rows);
                               for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t c = 0; c < cols; ++c)
                                   g[r * cols + c] += s * (p[r * cols + c] - (static_cast<int>(c) == lab[r]));
                             });
}

Tensor kl_div_softened(const Tensor& student_logits, const Tensor& teacher_logits, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
  require_rank(student_logits, 2, "kl_div_softened");
  require_same_shape(student_logits, teacher_logits, "kl_div_softened");
  const std::size_t rows = student_logits.dim(0), cols = student_logits.dim(1);
  const double inv_t = 1.0 / temperature;
  auto q = softmax_rows(teacher_logits.data(), rows, cols, inv_t);
  auto p = softmax_rows(student_logits.data(), rows, cols, inv_t);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* s = student_logits.data().data() + r * cols;
    const double* t = teacher_logits.data().data() + r * cols;
    const double ms = *std::max_element(s, s + cols);
    const double mt = *std::max_element(t, t + cols);
    double zs = 0.0, zt = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      zs += std::exp((s[c] - ms) * inv_t);
      zt += std::exp((t[c] - mt) * inv_t);
    }
    const double lzs = std::log(zs), lzt = std::log(zt);
    for (std::size_t c = 0; c < cols; ++c) {
      const double qc = q[r * cols + c];
      if (qc == 0.0) continue;
      const double log_q = (t[c] - mt) * inv_t - lzt;
      const double log_p = (s[c] - ms) * inv_t - lzs;
      loss += qc * (log_q - log_p);
    }
  }
  loss /= static_cast<double>(rows);
  // Teacher is deliberately not an input: it receives no gradient.
  return Tensor::make_result({1}, {loss}, "kl_div_softened", {student_logits},
                             [rows, cols, inv_t, p = std::move(p), q = std::move(q)](Node& n) {
                               auto& g = parent_grad(n, 0);
                               const double s = n.grad[0] * inv_t / static_cast<double>(rows);
                               for (std::size_t i = 0; i < rows * cols; ++i) g[i] += s * (p[i] - q[i]);
                             });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits");
  const auto x = logits.data();
  std::vector<double> y(targets.data().begin(), targets.data().end());
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    loss += std::max(x[i], 0.0) - x[i] * y[i] + std::log1p(std::exp(-std::abs(x[i])));
  const double inv_n = 1.0 / static_cast<double>(x.size());
  return Tensor::make_result({1}, {loss * inv_n}, "bce_with_logits", {logits},
                             [inv_n, y = std::move(y)](Node& n) {
                               const auto& x = parent_data(n, 0);
                               auto& g = parent_grad(n, 0);
                               const double s = n.grad[0] * inv_n;
                               for (std::size_t i = 0; i < x.size(); ++i) {
                                 const double sig = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                                                 : std::exp(x[i]) / (1.0 + std::exp(x[i]));
                                 g[i] += s * (sig - y[i]);
                               }
                             });
}

double smooth_l1_value(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

Tensor smooth_l1(const Tensor& pred, const Tensor& target, const std::vector<bool>& row_mask) {
  require_rank(pred, 2, "smooth_l1");
  require_same_shape(pred, target, "smooth_l1");
  const std::size_t rows = pred.dim(0), cols = pred.dim(1);
  if (row_mask.size() != rows)
    throw ShapeError("smooth_l1: mask length " + std::to_string(row_mask.size()) + " for " +
                     std::to_string(rows) + " rows");
  const auto pd = pred.data();
  const auto td = target.data();
  std::vector<double> diff(rows * cols, 0.0);
  std::size_t contributing = 0;
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_mask[r]) continue;
    contributing += cols;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = pd[r * cols + c] - td[r * cols + c];
      diff[r * cols + c] = d;
      loss += smooth_l1_value(d);
    }
  }
  const double inv = contributing ? 1.0 / static_cast<double>(contributing) : 0.0;
  return Tensor::make_result({1}, {loss * inv}, "smooth_l1", {pred},
                             [inv, row_mask, cols, diff = std::move(diff)](Node& n) {
                               auto& g = parent_grad(n, 0);
                               const double s = n.grad[0] * inv;
                               for (std::size_t r = 0; r < row_mask.size(); ++r) {
                                 if (!row_mask[r]) continue;
                                 for (std::size_t c = 0; c < cols; ++c) {
                                   const double d = diff[r * cols + c];
                                   g[r * cols + c] += s * (std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0));
                                 }
                               }
                             });
}

}  // namespace dfkd::ops
