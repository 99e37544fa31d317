#pragma once
// Differentiable operations. Each op allocates a fresh output and, when any
// input requires grad and recording is enabled, registers its backward rule.

#include <cstddef>
#include <span>
#include <vector>

#include "dfkd/core/rng.hpp"
#include "dfkd/core/tensor.hpp"

namespace dfkd::ops {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// b broadcast over the leading dimensions of x; b.shape() must equal the
// trailing dimensions of x.
Tensor add_bias(const Tensor& x, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor neg(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);

// Reductions. sum/mean return shape {1}; *_axis drop the axis.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);

// exp(x/T) normalized along axis with max subtraction. Throws DomainError
// for T <= 0.
Tensor softmax(const Tensor& x, double temperature = 1.0, std::ptrdiff_t axis = -1);
Tensor log_softmax(const Tensor& x, double temperature = 1.0, std::ptrdiff_t axis = -1);

// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [B x m x k] * [B x k x n], or [B x n x k] transposed when transpose_b.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
// x[..., in] * w[out, in]^T + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);

// Cross-correlation. x [B,C,H,W], w [O,C,k,k], bias [O] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding);
// Adjoint of conv2d. x [B,Cin,H,W], w [Cin,Cout,k,k]; output side (H-1)s-2p+k.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                        std::size_t stride, std::size_t padding);

struct BatchNormStats {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
};

// Per-channel normalization over (B,H,W). In training mode uses batch
// statistics and updates the running estimates (unbiased variance).
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, bool training, double momentum = 0.1,
                   double eps = 1e-5);
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

// Rows of table [num, dim] selected by ids -> [ids.size(), dim].
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Row-wise cosine similarity of [N, d] inputs -> [N]. Zero rows throw
// DomainError.
Tensor cosine_similarity_rows(const Tensor& a, const Tensor& b);

// Mean over rows of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
// Mean over rows of KL(softmax(teacher/T) || softmax(student/T)); teacher is
// treated as a constant.
Tensor kl_div_softened(const Tensor& student_logits, const Tensor& teacher_logits,
                       double temperature);
// Mean over all entries of binary cross-entropy on logits; targets constant.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);
// Smooth-L1 over rows with row_mask set, mean over contributing coordinates.
// Returns 0 when no row contributes.
Tensor smooth_l1(const Tensor& pred, const Tensor& target, const std::vector<bool>& row_mask);

double smooth_l1_value(double d);

}  // namespace dfkd::ops
