#include "grad_suite.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

#include "dfkd/core/gradcheck.hpp"
#include "dfkd/core/ops.hpp"

namespace dfkd::testing {

namespace o = dfkd::ops;

namespace {

Tensor rand_t(Rng& rng, const Shape& s, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(s));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(s, std::move(v), true);
}

using Builder = std::function<std::pair<DiffFunction, std::vector<Tensor>>(Rng&)>;

struct Case {
  std::string name;
  Builder build;
};

std::vector<Case> cases() {
  std::vector<Case> c;
  const auto unary = [&c](std::string name, std::function<Tensor(const Tensor&)> f, double lo = -2.0,
                          double hi = 2.0) {
    c.push_back({name, [f, lo, hi](Rng& r) {
                   return std::pair{DiffFunction([f](const std::vector<Tensor>& in) { return f(in[0]); }),
                                    std::vector<Tensor>{rand_t(r, {3, 4}, lo, hi)}};
                 }});
  };
  const auto binary = [&c](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> f,
                           Shape sa, Shape sb, double lo = -2.0, double hi = 2.0) {
    c.push_back({name, [f, sa, sb, lo, hi](Rng& r) {
                   return std::pair{
                       DiffFunction([f](const std::vector<Tensor>& in) { return f(in[0], in[1]); }),
                       std::vector<Tensor>{rand_t(r, sa, lo, hi), rand_t(r, sb, lo, hi)}};
                 }});
  };

  binary("add", o::add, {3, 4}, {3, 4});
  binary("sub", o::sub, {3, 4}, {3, 4});
  binary("mul", o::mul, {3, 4}, {3, 4});
  binary("div", o::div, {3, 4}, {3, 4}, 0.5, 2.0);
  binary("add_bias", o::add_bias, {2, 3, 4}, {4});
  unary("scale", [](const Tensor& x) { return o::scale(x, -1.7); });
  unary("add_scalar", [](const Tensor& x) { return o::add_scalar(x, 0.3); });
  unary("neg", o::neg);
  unary("relu", o::relu);
  unary("leaky_relu", [](const Tensor& x) { return o::leaky_relu(x, 0.2); });
  unary("gelu", o::gelu);
  unary("sigmoid", o::sigmoid);
  unary("tanh", o::tanh);
  unary("log", o::log, 0.3, 3.0);
  unary("exp", o::exp);
  unary("sqrt", o::sqrt, 0.3, 3.0);
  unary("square", o::square);
  unary("sum", o::sum);
  unary("mean", o::mean);
  unary("sum_axis", [](const Tensor& x) { return o::sum_axis(x, 0); });
  unary("mean_axis", [](const Tensor& x) { return o::mean_axis(x, 1); });
  unary("softmax", [](const Tensor& x) { return o::softmax(x, 1.0); });
  unary("softmax_T", [](const Tensor& x) { return o::softmax(x, 2.5, 0); });
  unary("log_softmax", [](const Tensor& x) { return o::log_softmax(x, 0.7); });
  binary("matmul", o::matmul, {3, 5}, {5, 2});
  binary("bmm", [](const Tensor& a, const Tensor& b) { return o::bmm(a, b, false); }, {2, 3, 4}, {2, 4, 5});
  binary("bmm_transposed", [](const Tensor& a, const Tensor& b) { return o::bmm(a, b, true); }, {2, 3, 4},
         {2, 5, 4});
  c.push_back({"linear", [](Rng& r) {
                 return std::pair{DiffFunction([](const std::vector<Tensor>& in) {
                                    return o::linear(in[0], in[1], in[2]);
                                  }),
                                  std::vector<Tensor>{rand_t(r, {2, 3, 4}), rand_t(r, {5, 4}), rand_t(r, {5})}};
               }});
  unary("reshape", [](const Tensor& x) { return o::reshape(x, {2, 6}); });
  c.push_back({"permute", [](Rng& r) {
                 return std::pair{DiffFunction([](const std::vector<Tensor>& in) {
                                    return o::permute(in[0], {2, 0, 1});
                                  }),
                                  std::vector<Tensor>{rand_t(r, {2, 3, 4})}};
               }});
  unary("transpose", [](const Tensor& x) { return o::transpose(x, 0, 1); });
  binary("concat", [](const Tensor& a, const Tensor& b) { return o::concat({a, b}, 1); }, {2, 3, 2}, {2, 1, 2});
  unary("slice", [](const Tensor& x) { return o::slice(x, 1, 1, 3); });
  c.push_back({"conv2d", [](Rng& r) {
                 return std::pair{DiffFunction([](const std::vector<Tensor>& in) {
                                    return o::conv2d(in[0], in[1], in[2], 2, 1);
                                  }),
                                  std::vector<Tensor>{rand_t(r, {2, 2, 5, 5}), rand_t(r, {3, 2, 3, 3}),
                                                      rand_t(r, {3})}};
               }});
  c.push_back({"conv_transpose2d", [](Rng& r) {
                 return std::pair{DiffFunction([](const std::vector<Tensor>& in) {
                                    return o::conv_transpose2d(in[0], in[1], in[2], 2, 1);
                                  }),
                                  std::vector<Tensor>{rand_t(r, {2, 2, 3, 3}), rand_t(r, {2, 3, 4, 4}),
                                                      rand_t(r, {3})}};
               }});
  c.push_back({"batchnorm2d_train", [](Rng& r) {
                 return std::pair{DiffFunction([](const std::vector<Tensor>& in) {
                                    o::BatchNormStats st{Tensor::zeros({3}), Tensor::full({3}, 1.0)};
                                    return o::batchnorm2d(in[0], in[1], in[2], st, true);
                                  }),
                                  std::vector<Tensor>{rand_t(r, {2, 3, 2, 2}), rand_t(r, {3}), rand_t(r, {3})}};
               }});
  c.push_back({"batchnorm2d_eval", [](Rng& r) {
                 const Tensor mean = rand_t(r, {3}).detach();
                 const Tensor var = rand_t(r, {3}, 0.5, 2.0).detach();
                 return std::pair{DiffFunction([mean, var](const std::vector<Tensor>& in) {
                                    o::BatchNormStats st{mean, var};
                                    return o::batchnorm2d(in[0], in[1], in[2], st, false);
                                  }),
                                  std::vector<Tensor>{rand_t(r, {2, 3, 2, 2}), rand_t(r, {3}), rand_t(r, {3})}};
               }});
  c.push_back({"layernorm", [](Rng& r) {
                 return std::pair{DiffFunction([](const std::vector<Tensor>& in) {
                                    return o::layernorm(in[0], in[1], in[2]);
                                  }),
                                  std::vector<Tensor>{rand_t(r, {3, 5}), rand_t(r, {5}), rand_t(r, {5})}};
               }});
  c.push_back({"dropout", [](Rng& r) {
                 const std::uint64_t seed = r.next_u64();
                 return std::pair{DiffFunction([seed](const std::vector<Tensor>& in) {
                                    Rng mask(seed);
                                    return o::dropout(in[0], 0.3, mask, true);
                                  }),
                                  std::vector<Tensor>{rand_t(r, {4, 5})}};
               }});
  c.push_back({"embedding", [](Rng& r) {
                 return std::pair{DiffFunction([](const std::vector<Tensor>& in) {
                                    const std::vector<int> ids{2, 0, 2, 1};
                                    return o::embedding(in[0], ids);
                                  }),
                                  std::vector<Tensor>{rand_t(r, {3, 4})}};
               }});
  binary("cosine_similarity_rows", o::cosine_similarity_rows, {3, 5}, {3, 5});
  c.push_back({"cross_entropy", [](Rng& r) {
                 return std::pair{DiffFunction([](const std::vector<Tensor>& in) {
                                    const std::vector<int> labels{0, 2, 1, 2};
                                    return o::cross_entropy(in[0], labels);
                                  }),
                                  std::vector<Tensor>{rand_t(r, {4, 3}, -3, 3)}};
               }});
  c.push_back({"kl_div_softened", [](Rng& r) {
                 const Tensor teacher = rand_t(r, {4, 3}, -3, 3).detach();
                 return std::pair{DiffFunction([teacher](const std::vector<Tensor>& in) {
                                    return o::kl_div_softened(in[0], teacher, 2.0);
                                  }),
                                  std::vector<Tensor>{rand_t(r, {4, 3}, -3, 3)}};
               }});
  c.push_back({"bce_with_logits", [](Rng& r) {
                 std::vector<double> y(12);
                 for (double& v : y) v = r.bernoulli(0.5) ? 1.0 : 0.0;
                 const Tensor t = Tensor::from({4, 3}, y);
                 return std::pair{DiffFunction([t](const std::vector<Tensor>& in) {
                                    return o::bce_with_logits(in[0], t);
                                  }),
                                  std::vector<Tensor>{rand_t(r, {4, 3}, -4, 4)}};
               }});
  c.push_back({"smooth_l1", [](Rng& r) {
                 const Tensor target = rand_t(r, {4, 4}, -2, 2).detach();
                 return std::pair{DiffFunction([target](const std::vector<Tensor>& in) {
                                    return o::smooth_l1(in[0], target, {true, false, true, true});
                                  }),
                                  std::vector<Tensor>{rand_t(r, {4, 4}, -2, 2)}};
               }});
  return c;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(int seeds) {
  std::vector<GradSuiteEntry> out;
  const auto all = cases();
  for (std::size_t ci = 0; ci < all.size(); ++ci) {
    GradSuiteEntry e{all[ci].name, 0.0, seeds};
    for (int s = 0; s < seeds; ++s) {
      Rng rng = Rng(0x6a7dULL).child(ci * 1000 + static_cast<std::uint64_t>(s));
      GradCheckResult res;
      try {
        auto [f, inputs] = all[ci].build(rng);
        res = check_gradients(f, inputs, rng.child(1));
      } catch (const std::exception& ex) {
        throw std::runtime_error(all[ci].name + ": " + ex.what());
      }
      e.max_relative_error = std::max(e.max_relative_error, res.max_relative_error);
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace dfkd::testing
