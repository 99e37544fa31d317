#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "dfkd/core/error.hpp"
#include "dfkd/core/gradcheck.hpp"
#include "dfkd/core/ops.hpp"
#include "dfkd/core/optim.hpp"

using namespace dfkd;
namespace o = dfkd::ops;

namespace {

Tensor random_tensor(Rng& rng, const Shape& shape, bool grad = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(shape, std::move(v), grad);
}

// Direct 6-loop cross-correlation, independent of im2col.
std::vector<double> conv_oracle(const Tensor& x, const Tensor& w, std::size_t s, std::size_t p) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), K = w.dim(2);
  const std::size_t Ho = (H + 2 * p - K) / s + 1, Wo = (W + 2 * p - K) / s + 1;
  std::vector<double> out(B * O * Ho * Wo, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t oc = 0; oc < O; ++oc)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long iy = long(oy * s + ky) - long(p), ix = long(ox * s + kx) - long(p);
                if (iy < 0 || ix < 0 || iy >= long(H) || ix >= long(W)) continue;
                acc += x.at(((b * C + c) * H + iy) * W + ix) * w.at(((oc * C + c) * K + ky) * K + kx);
              }
          out[((b * O + oc) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

double inner(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("matmul examples") {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor em = o::matmul(eye, m);
  CHECK(std::vector<double>(em.data().begin(), em.data().end()) == std::vector<double>{1, 2, 3, 4});
  CHECK(o::matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item() == 11.0);

  Rng rng(1);
  const Tensor a = random_tensor(rng, {4, 5}), b = random_tensor(rng, {5, 3});
  const Tensor c = o::matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < 5; ++p) s += a.at(i * 5 + p) * b.at(p * 3 + j);
      CHECK(std::abs(c.at(i * 3 + j) - s) < 1e-12);
    }
  CHECK_THROWS_AS(o::matmul(a, a), ShapeError);
}

TEST_CASE("softmax examples and properties") {
  auto s = o::softmax(Tensor::from({2}, {0, 0}), 1.0);
  CHECK(s.at(0) == doctest::Approx(0.5));
  s = o::softmax(Tensor::from({2}, {std::log(3.0), 0}), 1.0);
  CHECK(std::abs(s.at(0) - 0.75) < 1e-12);
  CHECK(std::abs(s.at(1) - 0.25) < 1e-12);
  s = o::softmax(Tensor::from({2}, {2, 0}), 2.0);
  const double e = std::exp(1.0);
  CHECK(std::abs(s.at(0) - e / (e + 1)) < 1e-12);
  CHECK(std::abs(s.at(0) - 0.73106) < 1e-5);
  CHECK(std::abs(s.at(1) - 0.26894) < 1e-5);
  CHECK_THROWS_AS(o::softmax(Tensor::from({2}, {1, 2}), 0.0), DomainError);
  CHECK_THROWS_AS(o::softmax(Tensor::from({2}, {1, 2}), -1.0), DomainError);

  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor x = random_tensor(rng, {3, 6}, false, -10, 10);
    const double t = rng.uniform(0.05, 20.0);
    const double shift = rng.uniform(-50, 50);
    const Tensor p = o::softmax(x, t);
    const Tensor q = o::softmax(o::add_scalar(x, shift), t);
    for (std::size_t r = 0; r < 3; ++r) {
      double sum = 0.0;
      std::size_t am_x = 0, am_p = 0;
      for (std::size_t c = 0; c < 6; ++c) {
        sum += p.at(r * 6 + c);
        CHECK(std::abs(p.at(r * 6 + c) - q.at(r * 6 + c)) < 1e-9);
        if (x.at(r * 6 + c) > x.at(r * 6 + am_x)) am_x = c;
        if (p.at(r * 6 + c) > p.at(r * 6 + am_p)) am_p = c;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
      CHECK(am_x == am_p);
    }
  }
}

TEST_CASE("softmax along a non-final axis") {
  const Tensor x = Tensor::from({2, 2}, {0, std::log(3.0), 0, 0});
  const Tensor p = o::softmax(x, 1.0, 0);
  CHECK(p.at(0) == doctest::Approx(0.5));
  CHECK(p.at(1) == doctest::Approx(0.75));
  CHECK(p.at(3) == doctest::Approx(0.25));
}

TEST_CASE("conv2d examples") {
  Rng rng(2);
  const Tensor x = random_tensor(rng, {1, 1, 3, 3});
  const Tensor one = Tensor::from({1, 1, 1, 1}, {1.0});
  const Tensor y = o::conv2d(x, one, Tensor(), 1, 0);
  for (std::size_t i = 0; i < 9; ++i) CHECK(y.at(i) == x.at(i));

  const Tensor ones = Tensor::full({1, 1, 2, 2}, 1.0);
  CHECK(o::conv2d(ones, ones, Tensor(), 1, 0).item() == 4.0);

  const Tensor xr = random_tensor(rng, {1, 2, 5, 5});
  const Tensor wr = random_tensor(rng, {3, 2, 3, 3});
  for (std::size_t s : {1, 2})
    for (std::size_t p : {0, 1}) {
      const Tensor out = o::conv2d(xr, wr, Tensor(), s, p);
      const auto ref = conv_oracle(xr, wr, s, p);
      REQUIRE(out.numel() == ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(out.at(i) - ref[i]) < 1e-12);
    }
  CHECK_THROWS_AS(o::conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), Tensor(), 1, 0),
                  ShapeError);
}

TEST_CASE("conv_transpose2d shape, identity and adjointness") {
  CHECK(o::conv_transpose2d(Tensor::zeros({1, 2, 7, 7}), Tensor::zeros({2, 3, 4, 4}), Tensor(), 2, 1).shape() ==
        Shape{1, 3, 14, 14});
  const Tensor x = Tensor::from({1, 1, 1, 1}, {0.625});
  CHECK(o::conv_transpose2d(x, Tensor::from({1, 1, 1, 1}, {1.0}), Tensor(), 1, 0).item() == 0.625);
  CHECK_THROWS_AS(o::conv_transpose2d(Tensor::zeros({1, 1, 1, 1}), Tensor::zeros({1, 1, 1, 1}), Tensor(), 1, 1),
                  ShapeError);

  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t s = 1 + rng.below(2), p = rng.below(2), k = 3 + rng.below(2);
    const Tensor w = random_tensor(rng, {3, 2, k, k});  // conv: O=3, C=2
    const Tensor xin = random_tensor(rng, {2, 2, 6, 6});
    const Tensor cx = o::conv2d(xin, w, Tensor(), s, p);
    const Tensor yy = random_tensor(rng, cx.shape());
    const Tensor ty = o::conv_transpose2d(yy, w, Tensor(), s, p);
    // Transposed output may be smaller than the conv input when the stride
    // drops border pixels; compare on the overlapping region only if sizes match.
    if (ty.shape() != xin.shape()) continue;
    CHECK(std::abs(inner(cx.data(), yy.data()) - inner(xin.data(), ty.data())) < 1e-10);
  }
}

TEST_CASE("layernorm examples") {
  const Tensor g = Tensor::full({4}, 1.0), b = Tensor::zeros({4});
  const Tensor c = o::layernorm(Tensor::full({1, 4}, 3.5), g, b);
  for (double v : c.data()) CHECK(v == 0.0);
  const Tensor pm = o::layernorm(Tensor::from({2}, {1, -1}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-300);
  CHECK(std::abs(pm.at(0) - 1.0) < 1e-12);
  CHECK(std::abs(pm.at(1) + 1.0) < 1e-12);

  Rng rng(5);
  const Tensor x = random_tensor(rng, {3, 16}, false);
  const auto moments = [](const Tensor& t, std::size_t r) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 16; ++i) m += t.at(r * 16 + i);
    m /= 16;
    for (std::size_t i = 0; i < 16; ++i) v += (t.at(r * 16 + i) - m) * (t.at(r * 16 + i) - m);
    return std::pair{m, v / 16};
  };
  const Tensor y = o::layernorm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}), 1e-12);
  const Tensor yd = o::layernorm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}));
  for (std::size_t r = 0; r < 3; ++r) {
    const auto [m, v] = moments(y, r);
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::abs(v - 1.0) < 1e-6);
    // With the default eps the output variance is exactly s2 / (s2 + eps).
    const double s2 = moments(x, r).second;
    const auto [md, vd] = moments(yd, r);
    CHECK(std::abs(md) < 1e-10);
    CHECK(std::abs(vd - s2 / (s2 + 1e-5)) < 1e-10);
  }
  CHECK_THROWS_AS(o::layernorm(x, g, b, 0.0), DomainError);
}

TEST_CASE("backward examples") {
  const Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  o::sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  const Tensor y = Tensor::from({3}, {1, 2, 3}, true);
  o::sum(o::mul(y, y)).backward();
  CHECK(y.grad()[0] == 2.0);
  CHECK(y.grad()[1] == 4.0);
  CHECK(y.grad()[2] == 6.0);

  // Repeated sweeps accumulate into leaves.
  const Tensor z = Tensor::from({2}, {1, 1}, true);
  const Tensor loss = o::sum(o::scale(z, 3.0));
  loss.backward();
  loss.backward();
  CHECK(z.grad()[0] == 6.0);

  CHECK_THROWS_AS(o::scale(z, 2.0).backward(), ContractError);
}

TEST_CASE("no-grad guard stops recording") {
  const Tensor x = Tensor::from({2}, {1, 2}, true);
  NoGradGuard guard;
  const Tensor y = o::scale(x, 2.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("optimizer examples") {
  Tensor p = Tensor::from({2}, {0.3, -0.7}, true);
  OptimizerState st;
  st.config = AdamConfig{0.1, 0.5, 0.999, 1e-8, 0.0, WeightDecayMode::coupled};
  p.zero_grad();
  std::vector<Tensor> ps{p};
  optimizer_step(ps, st);
  CHECK(p.at(0) == 0.3);
  CHECK(p.at(1) == -0.7);

  // One step, g = 1: m_hat = 1, v_hat = 1, update = -lr / (1 + eps).
  Tensor q = Tensor::from({1}, {2.0}, true);
  q.mutable_grad()[0] = 1.0;
  OptimizerState s1;
  s1.config = AdamConfig{0.1, 0.5, 0.999, 1e-8, 0.0, WeightDecayMode::coupled};
  std::vector<Tensor> qs{q};
  optimizer_step(qs, s1);
  const double m = (1 - 0.5) * 1.0, v = (1 - 0.999) * 1.0;
  const double m_hat = m / (1 - 0.5), v_hat = v / (1 - 0.999);
  CHECK(std::abs(q.at(0) - (2.0 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8))) < 1e-15);
  CHECK(s1.step == 1);

  // Decoupled decay shrinks by lr * decay * theta in addition to the moment step.
  Tensor r = Tensor::from({1}, {4.0}, true);
  r.zero_grad();
  OptimizerState s2;
  s2.config = AdamConfig{0.1, 0.5, 0.999, 1e-8, 0.025, WeightDecayMode::decoupled};
  std::vector<Tensor> rs{r};
  optimizer_step(rs, s2);
  CHECK(std::abs(r.at(0) - (4.0 - 0.1 * 0.025 * 4.0)) < 1e-15);

  std::vector<Tensor> other{Tensor::from({3}, {0, 0, 0}, true)};
  CHECK_THROWS_AS(optimizer_step(other, s2), ContractError);
}

TEST_CASE("table defaults") {
  const AdamConfig g = gan_adam_defaults();
  CHECK(g.lr == 1e-4);
  CHECK(g.beta1 == 0.5);
  CHECK(g.beta2 == 0.999);
  CHECK(g.weight_decay == 2e-5);
  const AdamConfig d = distill_adamw_defaults();
  CHECK(d.lr == 7.5e-4);
  CHECK(d.weight_decay == 0.025);
  CHECK(d.mode == WeightDecayMode::decoupled);
}

TEST_CASE("losses: analytic values") {
  // kd: teacher (ln3, 0), student (0, 0), T = 1 -> 0.75 ln 1.5 + 0.25 ln 0.5
  const Tensor t = Tensor::from({1, 2}, {std::log(3.0), 0});
  const Tensor s = Tensor::from({1, 2}, {0, 0}, true);
  const double oracle = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  CHECK(std::abs(o::kl_div_softened(s, t, 1.0).item() - oracle) < 1e-12);
  CHECK(std::abs(oracle - 0.130812) < 1e-6);
  CHECK(std::abs(o::cross_entropy(Tensor::from({1, 2}, {0, 0}), std::vector<int>{1}).item() - std::log(2.0)) < 1e-12);
  CHECK(std::abs(o::bce_with_logits(Tensor::from({1}, {0.0}), Tensor::from({1}, {1.0})).item() - std::log(2.0)) < 1e-12);
  CHECK(o::bce_with_logits(Tensor::from({1}, {20.0}), Tensor::from({1}, {1.0})).item() < 1e-8);
  CHECK(o::smooth_l1_value(0.5) == 0.125);
  CHECK(o::smooth_l1_value(1.0) == 0.5);
  CHECK(o::smooth_l1_value(-2.0) == 1.5);
  CHECK_THROWS_AS(o::cross_entropy(Tensor::from({1, 2}, {0, 0}), std::vector<int>{2}), DomainError);
  CHECK_THROWS_AS(o::cosine_similarity_rows(Tensor::zeros({1, 2}), Tensor::full({1, 2}, 1.0)), DomainError);
}

TEST_CASE("smooth-L1 is C1 at the branch point") {
  const double h = 1e-7;
  const double left = (o::smooth_l1_value(1.0) - o::smooth_l1_value(1.0 - h)) / h;
  const double right = (o::smooth_l1_value(1.0 + h) - o::smooth_l1_value(1.0)) / h;
  CHECK(std::abs(0.5 * 1.0 * 1.0 - (1.0 - 0.5)) < 1e-9);
  CHECK(std::abs(left - right) < 1e-6);
}

TEST_CASE("dropout is seeded and inverted") {
  Rng r1(3), r2(3);
  const Tensor x = Tensor::full({1000}, 1.0);
  const Tensor a = o::dropout(x, 0.3, r1, true), b = o::dropout(x, 0.3, r2, true);
  double mean = 0.0;
  for (std::size_t i = 0; i < 1000; ++i) {
    CHECK(a.at(i) == b.at(i));
    mean += a.at(i);
  }
  CHECK(std::abs(mean / 1000 - 1.0) < 0.1);
  Rng r3(3);
  CHECK(o::dropout(x, 0.3, r3, false).at(0) == 1.0);
}

TEST_CASE("batchnorm eval mode uses running statistics") {
  o::BatchNormStats st{Tensor::from({1}, {2.0}), Tensor::from({1}, {4.0})};
  const Tensor x = Tensor::from({1, 1, 1, 2}, {2.0, 6.0});
  const Tensor y = o::batchnorm2d(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), st, false, 0.1, 0.0);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == 2.0);
  o::batchnorm2d(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), st, true);
  CHECK(std::abs(st.running_mean.at(0) - (0.9 * 2.0 + 0.1 * 4.0)) < 1e-12);
  CHECK(std::abs(st.running_var.at(0) - (0.9 * 4.0 + 0.1 * 8.0)) < 1e-12);
}

TEST_CASE("shape ops") {
  const Tensor x = Tensor::from({2, 3}, {0, 1, 2, 3, 4, 5});
  const Tensor t = o::transpose(x, 0, 1);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.at(1) == 3.0);
  const Tensor c = o::concat({x, x}, 1);
  CHECK(c.shape() == Shape{2, 6});
  CHECK(c.at(3) == 0.0);
  const Tensor s = o::slice(x, 1, 1, 3);
  CHECK(s.at(0) == 1.0);
  CHECK(s.at(2) == 4.0);
  const Tensor e = o::embedding(x, std::vector<int>{1, 0});
  CHECK(e.at(0) == 3.0);
  CHECK_THROWS_AS(o::reshape(x, {4}), ShapeError);
  CHECK_THROWS_AS(o::embedding(x, std::vector<int>{2}), IndexError);
}
