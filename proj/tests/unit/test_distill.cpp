#include <cmath>

#include "doctest.h"
#include "dfkd/core/error.hpp"
#include "dfkd/core/gradcheck.hpp"
#include "dfkd/core/ops.hpp"
#include "dfkd/data/datasets.hpp"
#include "dfkd/distill/distill.hpp"

using namespace dfkd;

namespace {

Tensor random_logits(Rng& rng, std::size_t n, std::size_t c, bool grad = false) {
  std::vector<double> v(n * c);
  for (double& x : v) x = rng.uniform(-3, 3);
  return Tensor::from({n, c}, v, grad);
}

// [1, 1, 4, 4] attention with row 0 given; other rows uniform.
Tensor attention_with_row0(std::vector<double> row0) {
  std::vector<double> v(16, 0.25);
  std::copy(row0.begin(), row0.end(), v.begin());
  return Tensor::from({1, 1, 4, 4}, v, true);
}

}  // namespace

TEST_CASE("kd_loss oracle values") {
  const Tensor t = Tensor::from({1, 2}, {std::log(3.0), 0.0});
  const Tensor s = Tensor::from({1, 2}, {0.0, 0.0});
  const double oracle = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  CHECK(std::abs(kd_loss(s, t, 1.0).item() - oracle) < 1e-12);
  CHECK(std::abs(kd_loss(s, t, 1.0).item() - 0.130812) < 1e-6);
  const Tensor t2 = Tensor::from({1, 2}, {2 * std::log(3.0), 0.0});
  CHECK(std::abs(kd_loss(s, t2, 2.0).item() - 0.523248) < 1e-6);
  CHECK(std::abs(kd_loss(s, t2, 2.0).item() - 4 * oracle) < 1e-12);
  Rng rng(1);
  const Tensor x = random_logits(rng, 5, 4);
  CHECK(std::abs(kd_loss(x, x, 4.0).item()) < 1e-12);
  CHECK_THROWS_AS(kd_loss(x, random_logits(rng, 5, 3), 4.0), ShapeError);
  CHECK_THROWS_AS(kd_loss(x, x, 0.0), DomainError);
}

TEST_CASE("kd_loss is non-negative with student-only gradients") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) CHECK(kd_loss(random_logits(rng, 3, 5), random_logits(rng, 3, 5), rng.uniform(0.5, 8)).item() >= 0.0);
  for (int seed = 0; seed < 5; ++seed) {
    const Tensor s = random_logits(rng, 4, 3, true);
    Tensor t = random_logits(rng, 4, 3, true);
    const auto r = check_gradients([](const std::vector<Tensor>& in) { return kd_loss(in[0], in[1], 4.0); }, {s, t},
                                   Rng(seed));
    CHECK(r.relative_errors[0] < 1e-4);
    t.zero_grad();
    kd_loss(s, t, 4.0).backward();
    for (double g : t.grad()) CHECK(g == 0.0);
  }
}

TEST_CASE("ce_loss oracle values") {
  CHECK(ce_loss(Tensor::from({1, 2}, {800.0, 0.0}), std::vector<int>{0}).item() == 0.0);
  CHECK(std::abs(ce_loss(Tensor::from({1, 2}, {0.0, 0.0}), std::vector<int>{1}).item() - std::log(2.0)) < 1e-12);
  Rng rng(3);
  const Tensor x = random_logits(rng, 4, 3);
  const std::vector<int> labels{2, 0, 1, 2};
  double oracle = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < 3; ++j) z += std::exp(x.at(i * 3 + j));
    oracle -= x.at(i * 3 + labels[i]) - std::log(z);
  }
  oracle /= 4.0;
  CHECK(std::abs(ce_loss(x, labels).item() - oracle) < 1e-10);
  std::vector<double> hot(12, 0.0);
  for (std::size_t i = 0; i < 4; ++i) hot[i * 3 + labels[i]] = 1.0;
  CHECK(std::abs(ce_loss(x, Tensor::from({4, 3}, hot)).item() - oracle) < 1e-12);
  CHECK_THROWS_AS(ce_loss(x, std::vector<int>{0, 1, 3, 0}), DomainError);
  CHECK_THROWS_AS(ce_loss(x, std::vector<int>{0, 1, -1, 0}), DomainError);
}

TEST_CASE("ce_loss decreases as the true logit grows") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    double prev = 1e300;
    for (int step = 0; step < 20; ++step) {
      v[1] += 0.3;
      const double l = ce_loss(Tensor::from({1, 3}, v), std::vector<int>{1}).item();
      CHECK(l >= 0.0);
      CHECK(l < prev);
      prev = l;
    }
  }
}

TEST_CASE("default layer map") {
  CHECK(default_layer_map(1, 2) == std::vector<std::size_t>{1});
  CHECK(default_layer_map(2, 2) == std::vector<std::size_t>{0, 1});
  CHECK(default_layer_map(3, 12) == std::vector<std::size_t>{3, 7, 11});
  CHECK(default_layer_map(3, 2) == std::vector<std::size_t>{0, 1, 1});
  for (std::size_t s = 1; s <= 6; ++s)
    for (std::size_t t = 1; t <= 12; ++t) {
      const auto m = default_layer_map(s, t);
      CHECK(m.back() == t - 1);
      for (std::size_t i = 0; i < s; ++i) CHECK(m[i] == static_cast<std::size_t>(std::ceil((i + 1.0) * t / s)) - 1);
    }
}

TEST_CASE("patch attention loss oracle values") {
  const Tensor a = attention_with_row0({0.4, 0.1, 0.2, 0.3});
  CHECK(std::abs(patch_attention_loss({a}, {a}, {0}).item()) < 1e-15);

  const Tensor x = attention_with_row0({0.5, 0.5, 0.0, 0.0});
  const Tensor y = attention_with_row0({0.5, 0.0, 0.5, 0.0});
  CHECK(std::abs(patch_attention_loss({x, x}, {y, y}, {0, 1}).item() - 1.0) < 1e-15);

  // Pair 0 identical, pair 1 with probes (1,2,3) and (4,5,6) scaled.
  const Tensor t1 = attention_with_row0({0.1, 0.24, 0.30, 0.36});
  const Tensor loss = patch_attention_loss({a, t1}, {a, a}, {0, 1});
  CHECK(std::abs(loss.item() - 0.012684) < 1e-6);
  CHECK(std::abs(loss.item() - 0.5 * (1.0 - 32.0 / std::sqrt(1078.0))) < 1e-12);

  const Tensor small = Tensor::from({1, 1, 3, 3}, std::vector<double>(9, 1.0 / 3.0));
  CHECK_THROWS_AS(patch_attention_loss({a}, {small}, {0}), ConfigError);
  CHECK_THROWS_AS(patch_attention_loss({a}, {a}, {1}), ConfigError);
  CHECK_THROWS_AS(patch_attention_loss({a}, {a, a}, {0}), ConfigError);
}

TEST_CASE("patch attention loss gradient reaches the student only") {
  Rng rng(5);
  for (int seed = 0; seed < 5; ++seed) {
    std::vector<double> s(2 * 2 * 5 * 5), t(2 * 2 * 5 * 5);
    for (double& v : s) v = rng.uniform(0.05, 1);
    for (double& v : t) v = rng.uniform(0.05, 1);
    const Tensor st = Tensor::from({2, 2, 5, 5}, s, true), tt = Tensor::from({2, 2, 5, 5}, t, true);
    const auto r = check_gradients(
        [](const std::vector<Tensor>& in) { return patch_attention_loss({in[1]}, {in[0]}, {0}); }, {st, tt},
        Rng(seed));
    CHECK(r.relative_errors[0] < 1e-4);
  }
}

TEST_CASE("total loss is linear in each component") {
  DistillConfig c;
  CHECK(total_loss(0.5, 0.7, 0.2, c) == doctest::Approx(1.4).epsilon(1e-15));
  c.lambda_kd = 2;
  c.lambda_patch = 0.5;
  CHECK(total_loss(0.5, 0.7, 0.2, c) == doctest::Approx(1.8).epsilon(1e-15));
  c.lambda_kd = c.lambda_patch = 0;
  CHECK(total_loss(0.5, 0.7, 0.2, c) == 0.7);
  c = DistillConfig{};
  c.lambda_kd = 3.0;
  const double base = total_loss(0.5, 0.7, 0.2, c);
  CHECK(total_loss(1.5, 0.7, 0.2, c) - base == 3.0);
  const Tensor t = total_loss(Tensor::scalar(0.5), Tensor::scalar(0.7), Tensor::scalar(0.2), c);
  CHECK(t.item() == total_loss(0.5, 0.7, 0.2, c));
}

TEST_CASE("distill config validation and round trip") {
  DistillConfig c;
  c.layer_map = {1, 1};
  c.temperature = 2.5;
  CHECK(DistillConfig::from_kv(c.to_kv()).to_kv() == c.to_kv());
  c.temperature = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = DistillConfig{};
  c.lambda_kd = c.lambda_ce = c.lambda_patch = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.lambda_ce = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("teacher training and distillation loop contracts") {
  ClassificationDatasetSpec spec;
  spec.samples_per_class = 30;
  const DatasetSplits d = gen_classification_dataset(spec);
  const ViTConfig tc{16, 4, 1, 16, 2, 2, 3, 2.0, 0.0};
  Rng rng(6);
  VisionTransformer teacher(tc, rng);
  const double before = evaluate_classifier(teacher, d.train).accuracy;
  ClassifierTrainConfig cc;
  cc.epochs = 12;
  cc.cosine_schedule = false;
  const VisionTransformer initial(tc, teacher.weights().deep_copy());
  const auto th = train_classifier(teacher, d.train, d.val, cc);
  REQUIRE(th.size() == 12);
  CHECK(th.back().train_acc > before);
  CHECK(th.back().train_acc > 0.6);

  // The cosine schedule starts at the base rate, so only later epochs differ.
  VisionTransformer scheduled(tc, initial.weights().deep_copy());
  cc.cosine_schedule = true;
  const auto sh = train_classifier(scheduled, d.train, d.val, cc);
  CHECK(sh[0].loss == th[0].loss);
  CHECK(sh[0].train_acc == th[0].train_acc);
  CHECK(sh[1].loss != th[1].loss);
  CHECK(ClassifierTrainConfig::from_kv(cc.to_kv()).cosine_schedule);

  const ViTConfig sc{16, 4, 1, 8, 1, 2, 3, 2.0, 0.0};
  DistillConfig dc;
  dc.epochs = 3;
  const DistillResult r = distill(teacher, sc, d.train, d.val, dc);
  REQUIRE(r.history.size() == 3);
  for (const auto& e : r.history) {
    CHECK(std::isfinite(e.kd));
    CHECK(std::isfinite(e.ce));
    CHECK(std::isfinite(e.patch));
    CHECK(std::isfinite(e.val_acc));
    CHECK(e.patch >= 0.0);
    CHECK(e.patch <= 2.0);
  }
  CHECK(r.confusion.total() == d.val.size());
  const DistillResult again = distill(teacher, sc, d.train, d.val, dc);
  CHECK(distill_history_csv(again.history) == distill_history_csv(r.history));
  CHECK(distill_history_csv(r.history).rfind("epoch,kd,ce,patch,total,val_acc\n1,", 0) == 0);

  dc.lambda_kd = dc.lambda_patch = 0;
  for (const auto& e : distill(teacher, sc, d.train, d.val, dc).history) CHECK(e.total == e.ce);

  const ViTConfig other{16, 8, 1, 8, 1, 2, 3, 2.0, 0.0};
  dc = DistillConfig{};
  dc.epochs = 1;
  CHECK_THROWS_AS(distill(teacher, other, d.train, d.val, dc), ConfigError);
  dc.lambda_patch = 0;
  const auto mismatch = distill(teacher, other, d.train, d.val, dc);
  CHECK(std::isnan(mismatch.history[0].patch));
  dc.layer_map = {5};
  CHECK_THROWS_AS(distill(teacher, sc, d.train, d.val, dc), ConfigError);
}

TEST_CASE("ablation variants zero exactly one weight") {
  DistillConfig base;
  base.lambda_kd = 2;
  const auto v = ablation_variants(base);
  REQUIRE(v.size() == 4);
  CHECK(v[0].name == "full");
  CHECK(v[0].config.to_kv() == base.to_kv());
  CHECK(v[1].name == "no_kd");
  CHECK(v[1].config.lambda_kd == 0.0);
  CHECK(v[1].config.lambda_ce == 1.0);
  CHECK(v[2].config.lambda_ce == 0.0);
  CHECK(v[2].config.lambda_kd == 2.0);
  CHECK(v[3].config.lambda_patch == 0.0);
}
