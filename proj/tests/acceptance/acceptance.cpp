// End-to-end acceptance run: one PASS/FAIL line per criterion.
// Usage: acceptance [--out DIR] [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dfkd/cli/app.hpp"
#include "dfkd/cli/run_support.hpp"
#include "dfkd/core/error.hpp"
#include "dfkd/core/ops.hpp"
#include "dfkd/data/checkpoint.hpp"
#include "dfkd/data/coco.hpp"
#include "dfkd/data/datasets.hpp"
#include "dfkd/detr/detr.hpp"
#include "dfkd/distill/distill.hpp"
#include "dfkd/gan/gan.hpp"
#include "dfkd/metrics/fid.hpp"
#include "dfkd/metrics/fid_extractor.hpp"
#include "dfkd/models/probes.hpp"
#include "grad_suite.hpp"

using namespace dfkd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string list(const std::vector<double>& v, const char* f = "%.4f") {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : "/") + fmt(f, x);
  return s;
}

fs::path g_out = "acceptance_out";

// ---- 1 ----------------------------------------------------------------------

Outcome gradients() {
  const auto entries = testing::run_gradient_suite(5);
  double worst = 0.0;
  std::string worst_op, failing;
  for (const auto& e : entries) {
    if (e.max_relative_error > worst) {
      worst = e.max_relative_error;
      worst_op = e.op;
    }
    if (!(e.max_relative_error < 1e-4) || e.seeds < 5) failing += " " + e.op;
  }
  return {failing.empty() && !entries.empty(),
          std::to_string(entries.size()) + " ops x 5 seeds, worst rel-err " + fmt("%.2e", worst) + " (" + worst_op +
              ") < 1e-4" + (failing.empty() ? "" : "; failing:" + failing)};
}

// ---- 2 ----------------------------------------------------------------------

Outcome loss_oracles() {
  struct Case {
    std::string name;
    double value, oracle;
  };
  std::vector<Case> cases;
  const Tensor s = Tensor::from({1, 2}, {0.0, 0.0});
  cases.push_back({"kd T=1", kd_loss(s, Tensor::from({1, 2}, {std::log(3.0), 0.0}), 1.0).item(), 0.130812});
  cases.push_back({"kd T=2 (x4)", kd_loss(s, Tensor::from({1, 2}, {2 * std::log(3.0), 0.0}), 2.0).item(), 0.523248});
  const std::vector<int> label{1};
  cases.push_back({"ce", ce_loss(s, label).item(), std::log(2.0)});
  const std::vector<double> u{1, 2, 3}, v{4, 5, 6};
  cases.push_back({"consistency same", attention_consistency_loss(AttentionProbe{0, HeadAggregation::mean, u},
                                                                  ClassAttentionProbe{0, u, 1}),
                   0.0});
  cases.push_back({"consistency orthogonal",
                   attention_consistency_loss(AttentionProbe{0, HeadAggregation::mean, {1, 0}},
                                              ClassAttentionProbe{0, {0, 1}, 1}),
                   1.0});
  cases.push_back({"consistency (1,2,3)/(4,5,6)",
                   attention_consistency_loss(AttentionProbe{0, HeadAggregation::mean, u}, ClassAttentionProbe{0, v, 1}),
                   0.025368});
  for (double d : {0.5, 1.0, 2.0}) {
    const double value =
        ops::smooth_l1(Tensor::from({1, 1}, {d}), Tensor::from({1, 1}, {0.0}), std::vector<bool>{true}).item();
    cases.push_back({"smooth-l1 d=" + fmt("%g", d), value, d < 1.0 ? 0.5 * d * d : d - 0.5});
  }
  cases.push_back(
      {"bce logit 0", ops::bce_with_logits(Tensor::from({1}, {0.0}), Tensor::from({1}, {1.0})).item(), std::log(2.0)});
  cases.push_back(
      {"bce logit 40 target 1", ops::bce_with_logits(Tensor::from({1}, {40.0}), Tensor::from({1}, {1.0})).item(), 0.0});
  cases.push_back({"bce logit -800 target 1",
                   ops::bce_with_logits(Tensor::from({1}, {-800.0}), Tensor::from({1}, {1.0})).item(), 800.0});
  cases.push_back({"bce logit 800 target 0",
                   ops::bce_with_logits(Tensor::from({1}, {800.0}), Tensor::from({1}, {0.0})).item(), 800.0});

  std::string failing;
  double worst = 0.0;
  for (const auto& c : cases) {
    const double err = std::abs(c.value - c.oracle);
    worst = std::max(worst, err);
    if (!(err <= 1e-6)) failing += " " + c.name + "=" + fmt("%.9g", c.value);
  }
  return {failing.empty(), std::to_string(cases.size()) + " cases, worst |err| " + fmt("%.2e", worst) + " <= 1e-6" +
                               (failing.empty() ? "" : "; failing:" + failing)};
}

// ---- 3 ----------------------------------------------------------------------

std::vector<double> random_psd(Rng& rng, std::size_t d, std::size_t r) {
  std::vector<double> a(d * r);
  for (double& x : a) x = rng.normal();
  std::vector<double> m(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < r; ++k) m[i * d + j] += a[i * r + k] * a[j * r + k];
  return m;
}

FeatureStats stats(std::vector<double> mean, std::vector<double> cov) {
  FeatureStats s;
  s.dim = mean.size();
  s.mean = std::move(mean);
  s.covariance = std::move(cov);
  s.count = 100;
  return s;
}

Outcome fid_identities() {
  Rng rng(41);
  std::vector<double> rows(200 * 8);
  for (double& x : rows) x = rng.normal();
  const FeatureStats s = feature_stats(rows, 200, 8);
  const double self = fid(s, s);
  const std::vector<double> eye{1, 0, 0, 1};
  const double mean_case = fid(stats({0, 0}, eye), stats({3, 4}, eye));
  const double trace_case = fid(stats({0, 0}, {4, 0, 0, 4}), stats({0, 0}, eye));
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(15);
    const std::size_t rank = trial % 4 == 0 ? 1 + rng.below(n) : n + 2;
    const auto m = random_psd(rng, n, rank);
    const auto r = matrix_sqrt_psd(m, n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double p = 0.0;
        for (std::size_t k = 0; k < n; ++k) p += r[i * n + k] * r[k * n + j];
        num += (p - m[i * n + j]) * (p - m[i * n + j]);
        den += m[i * n + j] * m[i * n + j];
      }
    worst = std::max(worst, std::sqrt(num / den));
  }
  const bool pass = std::abs(self) <= 1e-9 && std::abs(mean_case - 25.0) <= 1e-6 &&
                    std::abs(trace_case - 2.0) <= 1e-6 && worst < 1e-8;
  return {pass, "fid(s,s)=" + fmt("%.2e", self) + ", mean case " + fmt("%.9f", mean_case) + ", trace case " +
                    fmt("%.9f", trace_case) + ", sqrt residual max " + fmt("%.2e", worst) + " over 20 PSD"};
}

// ---- 4 ----------------------------------------------------------------------

Outcome attention_machinery() {
  Rng rng(43);
  double worst_row = 0.0;
  std::size_t rows = 0;
  const auto check_rows = [&](const Tensor& a) {
    const std::size_t t = a.dim(a.rank() - 1);
    const auto d = a.data();
    for (std::size_t r = 0; r < d.size() / t; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < t; ++c) sum += d[r * t + c];
      worst_row = std::max(worst_row, std::abs(sum - 1.0));
      ++rows;
    }
  };
  NoGradGuard guard;
  for (int trial = 0; trial < 12; ++trial) {
    ViTConfig c;
    const std::size_t patches[] = {2, 4, 8};
    c.patch_size = patches[rng.below(3)];
    c.in_channels = 1 + 2 * rng.below(2);
    c.num_heads = 1 + rng.below(4);
    c.embed_dim = c.num_heads * (4 + 4 * rng.below(3));
    c.depth = 1 + rng.below(3);
    c.num_classes = 2 + rng.below(5);
    Rng init = rng.child(static_cast<std::uint64_t>(trial));
    const VisionTransformer m(c, init);
    const std::size_t b = 1 + rng.below(3);
    std::vector<double> px(b * c.in_channels * 16 * 16);
    for (double& x : px) x = rng.uniform(-3, 3);
    for (const Tensor& a : m.forward(Tensor::from({b, c.in_channels, 16, 16}, px)).attention) check_rows(a);
  }
  {
    Rng init(44);
    const DetrLite d(DetrConfig::desk_teacher(), init);
    std::vector<double> px(2 * 3 * 64 * 96);
    for (double& x : px) x = rng.uniform(-2, 2);
    for (const Tensor& a : d.forward(Tensor::from({2, 3, 64, 96}, px)).cross_attention) check_rows(a);
  }

  // Hand-built maps: 2 layers x 2 heads, 3 tokens (class + 2 patches).
  std::vector<AttentionMap> maps;
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 2; ++h) {
      AttentionMap m{l, h, 3, std::vector<double>(9)};
      for (std::size_t i = 0; i < 9; ++i) m.values[i] = static_cast<double>(100 * l + 10 * h + i);
      maps.push_back(m);
    }
  // Row 0, columns 1..2: layer l head h -> {100l+10h+1, 100l+10h+2}.
  const auto p_last = extract_probe(maps).values;
  const auto p_first_h1 = extract_probe(maps, {0, HeadAggregation::single, 1}).values;
  const auto p_first_mean = extract_probe(maps, {-2, HeadAggregation::mean, 0}).values;
  const bool slices = p_last == std::vector<double>{106, 107} && p_first_h1 == std::vector<double>{11, 12} &&
                      p_first_mean == std::vector<double>{6, 7};

  std::size_t argmax_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<double> x(n);
    for (double& e : x) e = rng.uniform(-10, 10);
    const double t = std::exp(rng.uniform(std::log(0.05), std::log(20.0)));
    const Tensor sm = ops::softmax(Tensor::from({n}, x), t);
    const auto p = sm.data();
    const auto am = [](auto b, auto e) { return std::distance(b, std::max_element(b, e)); };
    if (am(x.begin(), x.end()) == am(p.begin(), p.end())) ++argmax_ok;
  }
  const bool pass = worst_row <= 1e-6 && slices && argmax_ok == 1000;
  return {pass, std::to_string(rows) + " attention rows, max |sum-1| " + fmt("%.2e", worst_row) +
                    "; probe slices " + (slices ? "match" : "MISMATCH") + "; argmax invariant " +
                    std::to_string(argmax_ok) + "/1000"};
}

// ---- 5, 6, 8 ----------------------------------------------------------------

struct ClassificationRuns {
  bool ready = false;
  DatasetSplits data;
  std::optional<VisionTransformer> teacher;
  double teacher_train_acc = 0.0, teacher_test_acc = 0.0;
  std::vector<double> fid_vanilla, fid_augmented;
  std::vector<double> student_acc, untrained_acc;
  std::vector<LabeledImages> synthetic;
  double seconds_gan = 0.0, seconds_distill = 0.0, seconds_setup = 0.0;
  bool losses_finite = true;
};

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ClassificationRuns& classification_runs() {
  static ClassificationRuns r;
  if (r.ready) return r;
  r.ready = true;
  auto t0 = std::chrono::steady_clock::now();
  r.data = gen_classification_dataset(ClassificationDatasetSpec{});
  Rng init = Rng(1).child(1u << 20);
  r.teacher.emplace(ViTConfig{}, init);
  const auto th = train_classifier(*r.teacher, r.data.train, r.data.val, ClassifierTrainConfig{});
  r.teacher_train_acc = evaluate_classifier(*r.teacher, r.data.train).accuracy;
  r.teacher_test_acc = evaluate_classifier(*r.teacher, r.data.test).accuracy;
  const FidExtractorTraining ex = train_fid_extractor(FidExtractorConfig{}, r.data.train);
  const auto caps = teacher_caps(*r.teacher, r.data.train);
  r.seconds_setup = since(t0);
  std::cout << "  [setup] teacher train acc " << fmt("%.4f", r.teacher_train_acc) << ", test "
            << fmt("%.4f", r.teacher_test_acc) << ", extractor acc " << fmt("%.4f", ex.train_accuracy) << " ("
            << fmt("%.0f", r.seconds_setup) << " s)" << std::endl;

  fs::create_directories(g_out / "gan");
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (double lambda : {0.0, 1.0}) {
      t0 = std::chrono::steady_clock::now();
      GanConfig gc;
      gc.lambda_attn = lambda;
      GanTrainConfig tc;
      tc.seed = seed;
      std::optional<AttentionGuidance> guidance;
      if (lambda != 0.0) guidance = AttentionGuidance{&*r.teacher, caps, {}};
      const GanTrainResult g = train_gan(gc, tc, r.data.train, guidance, &ex.extractor);
      r.seconds_gan += since(t0);
      for (const auto& e : g.history)
        if (!std::isfinite(e.d_loss) || !std::isfinite(e.g_adv)) r.losses_finite = false;
      const double f = g.history.back().fid;
      (lambda == 0.0 ? r.fid_vanilla : r.fid_augmented).push_back(f);
      cli::write_text(g_out / "gan" / ("history_seed" + std::to_string(seed) + "_lambda" + fmt("%g", lambda) + ".csv"),
                      gan_history_csv(g.history));
      std::cout << "  [gan] seed " << seed << " lambda " << lambda << " final FID " << fmt("%.4f", f) << " ("
                << fmt("%.0f", since(t0)) << " s)" << std::endl;
      if (lambda == 0.0) continue;

      t0 = std::chrono::steady_clock::now();
      const SynthDataset syn = synthesize(g.generator, 2000, Rng(seed).child(7));
      DistillConfig dc;
      dc.seed = seed;
      const DistillResult d = distill(*r.teacher, default_student_config(), syn.data, r.data.val, dc);
      Rng untrained_init = Rng(seed).child(0);
      const VisionTransformer untrained(default_student_config(), untrained_init);
      r.student_acc.push_back(evaluate_classifier(d.student, r.data.test).accuracy);
      r.untrained_acc.push_back(evaluate_classifier(untrained, r.data.test).accuracy);
      r.synthetic.push_back(syn.data);
      r.seconds_distill += since(t0);
      std::cout << "  [distill] seed " << seed << " student test acc " << fmt("%.4f", r.student_acc.back())
                << ", untrained " << fmt("%.4f", r.untrained_acc.back()) << " (" << fmt("%.0f", since(t0)) << " s)"
                << std::endl;
    }
  }
  return r;
}

Outcome gan_direction() {
  const ClassificationRuns& r = classification_runs();
  const double mv = median(r.fid_vanilla), ma = median(r.fid_augmented);
  const double minutes = (r.seconds_setup + r.seconds_gan) / 60.0;
  return {ma <= mv && r.losses_finite,
          "median final FID augmented " + fmt("%.4f", ma) + " <= vanilla " + fmt("%.4f", mv) + " (augmented " +
              list(r.fid_augmented) + ", vanilla " + list(r.fid_vanilla) + "); losses finite: " +
              (r.losses_finite ? "yes" : "NO") + "; " + fmt("%.1f", minutes) + " min (target < 10)"};
}

Outcome classification_dfkd() {
  const ClassificationRuns& r = classification_runs();
  const double ms = median(r.student_acc), mu = median(r.untrained_acc);
  const bool pass = r.teacher_train_acc >= 0.95 && ms >= 0.7 * r.teacher_test_acc && ms >= mu + 0.30;
  const double minutes = (r.seconds_setup + r.seconds_gan + r.seconds_distill) / 60.0;
  return {pass, "teacher train acc " + fmt("%.4f", r.teacher_train_acc) + " >= 0.95; median student test acc " +
                    fmt("%.4f", ms) + " (" + list(r.student_acc) + ") >= 0.7 x teacher " +
                    fmt("%.4f", r.teacher_test_acc) + " = " + fmt("%.4f", 0.7 * r.teacher_test_acc) +
                    " and >= untrained " + fmt("%.4f", mu) + " + 0.30; " + fmt("%.1f", minutes) +
                    " min incl. GANs (target < 15)"};
}

Outcome ablation() {
  ClassificationRuns& r = classification_runs();
  const auto t0 = std::chrono::steady_clock::now();
  DistillConfig base;
  base.seed = 1;
  fs::create_directories(g_out / "ablation");
  double full = 0.0;
  std::vector<std::pair<std::string, double>> others;
  for (const AblationVariant& v : ablation_variants(base)) {
    const DistillResult d = distill(*r.teacher, default_student_config(), r.synthetic.front(), r.data.val, v.config);
    cli::write_text(g_out / "ablation" / (v.name + ".csv"), distill_history_csv(d.history));
    const double acc = evaluate_classifier(d.student, r.data.test).accuracy;
    if (v.name == "full")
      full = acc;
    else
      others.emplace_back(v.name, acc);
  }
  bool pass = others.size() == 3;
  std::string detail = "full " + fmt("%.4f", full);
  for (const auto& [name, acc] : others) {
    pass = pass && full >= acc - 0.05;
    detail += ", " + name + " " + fmt("%.4f", acc);
  }
  return {pass, detail + " (full >= each - 0.05; curves in " + (g_out / "ablation").string() + "; " +
                    fmt("%.0f", since(t0)) + " s)"};
}

// ---- 7 ----------------------------------------------------------------------

Outcome detection_dfkd() {
  const auto t0 = std::chrono::steady_clock::now();
  const DetectionSplits d = gen_detection_dataset(DetectionSceneSpec{});
  const DetrConfig tc = DetrConfig::desk_teacher(), sc = DetrConfig::desk_student();
  const PreparedDetectionSet train = prepare_detection_set(d.train, tc.preprocess);
  DetrTrainConfig cfg;
  cfg.map_every = 0;
  Rng init = Rng(cfg.seed).child(1u << 20);
  DetrLite teacher(tc, init);
  const auto th = train_detr(teacher, train, cfg);
  const double teacher_map = evaluate_detector(teacher, train).ap.mean_ap;
  std::cout << "  [detr] teacher train mAP@0.5 " << fmt("%.4f", teacher_map) << " (" << fmt("%.0f", since(t0))
            << " s)" << std::endl;
  const DetrDistillResult s = distill_detection(teacher, sc, train, cfg);
  const double student_map = evaluate_detector(s.student, train).ap.mean_ap;
  fs::create_directories(g_out / "detr");
  cli::write_text(g_out / "detr" / "teacher_history.csv", detr_history_csv(th));
  cli::write_text(g_out / "detr" / "student_history.csv", detr_history_csv(s.history));
  const bool pass = teacher_map >= 0.8 && student_map >= 0.5 * teacher_map;
  return {pass, "teacher train mAP@0.5 " + fmt("%.4f", teacher_map) + " >= 0.8; student " +
                    fmt("%.4f", student_map) + " >= 0.5 x teacher = " + fmt("%.4f", 0.5 * teacher_map) + "; " +
                    fmt("%.1f", since(t0) / 60.0) + " min (target < 20)"};
}

// ---- 9 ----------------------------------------------------------------------

Outcome preprocessing() {
  const PreprocessConfig full = PreprocessConfig::full_scale();
  const auto a = resized_size(400, 600, full), b = resized_size(400, 1000, full);
  const double px = normalize_pixel(255, 0, full);
  const bool pass = a == std::array<std::size_t, 2>{800, 1200} && b == std::array<std::size_t, 2>{533, 1333} &&
                    std::abs(px - 2.248908) <= 1e-6;
  return {pass, "400x600 -> " + std::to_string(a[0]) + "x" + std::to_string(a[1]) + ", 400x1000 -> " +
                    std::to_string(b[0]) + "x" + std::to_string(b[1]) + ", pixel 255 R -> " + fmt("%.9f", px)};
}

// ---- 10 ---------------------------------------------------------------------

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cout << "  [cli] " << args.front() << " exit " << code << ": " << err.str();
  return code;
}

// Files written by a run, excluding the manifest (it carries timestamps).
std::vector<fs::path> run_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != cli::RunManifest::kFileName)
      files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  return files;
}

Outcome persistence() {
  // Checkpoint round trip.
  Rng init(47);
  const VisionTransformer m(ViTConfig{}, init);
  const std::string bytes = encode_checkpoint("vit", m.config().to_kv(), m.weights());
  const Checkpoint back = decode_checkpoint(bytes);
  bool ck_ok = back.kind == "vit" && back.config == m.config().to_kv() &&
               encode_checkpoint(back.kind, back.config, back.weights) == bytes;
  for (const auto& e : m.weights().entries()) {
    const auto a = e.tensor.data(), b = back.weights.at(e.name).data();
    ck_ok = ck_ok && a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  }

  // Committed v1 fixture.
  bool fixture_ok = false;
  try {
    const Checkpoint f = load_checkpoint(std::string(DFKD_FIXTURE_DIR) + "/checkpoint_v1.dfkd");
    const double w5 = 6.02214076e23;
    fixture_ok = f.version == 1 && f.kind == "fixture" && f.weights.entries().size() == 3 &&
                 std::memcmp(&f.weights.at("layer.weight").data()[5], &w5, sizeof w5) == 0;
  } catch (const Error& e) {
    std::cout << "  [fixture] " << e.what() << "\n";
  }

  // COCO round trip: fixture text and generated scenes.
  bool coco_ok = false;
  try {
    const CocoDataset ds = read_coco(std::string(DFKD_FIXTURE_DIR) + "/coco_minimal.json");
    DetectionSceneSpec spec;
    spec.images = 12;
    const DetectionSplits scenes = gen_detection_dataset(spec);
    const CocoDataset gen = to_coco(scenes.train, detection_class_names(), "images/");
    coco_ok = parse_coco(dump_coco(ds)) == ds && parse_coco(dump_coco(gen)) == gen &&
              dump_coco(parse_coco(dump_coco(gen))) == dump_coco(gen);
  } catch (const Error& e) {
    std::cout << "  [coco] " << e.what() << "\n";
  }

  // Every training subcommand rerun from its manifest.
  const fs::path root = fs::absolute(g_out / "rerun");
  fs::remove_all(root);
  const auto p = [&](const std::string& s) { return (root / s).string(); };
  const std::vector<std::pair<std::string, std::vector<std::string>>> runs{
      {"cls", {"gen-data", "--spec", "cls_default", "--seed", "7", "--out", p("cls")}},
      {"det", {"gen-data", "--spec", "det_default", "--out", p("det")}},
      {"teacher", {"train-teacher", "--data", p("cls"), "--epochs", "2", "--out", p("teacher")}},
      {"extractor", {"train-fid-extractor", "--data", p("cls"), "--epochs", "1", "--out", p("extractor")}},
      {"gan",
       {"train-gan", "--data", p("cls"), "--teacher", p("teacher/teacher.ckpt"), "--extractor",
        p("extractor/extractor.ckpt"), "--epochs", "1", "--out", p("gan")}},
      {"syn", {"synthesize", "--generator", p("gan/generator.ckpt"), "--count", "90", "--out", p("syn")}},
      {"probe", {"probe-export", "--teacher", p("teacher/teacher.ckpt"), "--data", p("cls"), "--out", p("probe")}},
      {"student",
       {"distill", "--teacher", p("teacher/teacher.ckpt"), "--gan", p("gan/generator.ckpt"), "--data", p("cls"),
        "--count", "120", "--epochs", "1", "--out", p("student")}},
      {"detr", {"train-detr-teacher", "--data", p("det"), "--epochs", "1", "--out", p("detr")}},
      {"detr_student",
       {"distill-detect", "--teacher", p("detr/detr_teacher.ckpt"), "--data", p("det"), "--epochs", "1", "--out",
        p("detr_student")}},
      {"eval", {"eval", "--model", p("student/student.ckpt"), "--data", p("cls"), "--out", p("eval")}},
      {"eval_det", {"eval-detect", "--model", p("detr/detr_teacher.ckpt"), "--data", p("det"), "--out", p("eval_det")}},
      {"fid",
       {"fid", "--extractor", p("extractor/extractor.ckpt"), "--real", p("cls"), "--fake", p("syn/synthetic.imgset"),
        "--out", p("fid")}},
  };
  std::size_t reproduced = 0;
  std::string mismatched;
  for (const auto& [name, args] : runs) {
    if (cli_run(args) != 0) {
      mismatched += " " + name + "(failed)";
      continue;
    }
    const fs::path first = root / name, second = root / (name + "_rerun");
    if (cli_run({args.front(), "--config", (first / cli::RunManifest::kFileName).string(), "--out", second.string()}) !=
        0) {
      mismatched += " " + name + "(rerun failed)";
      continue;
    }
    const auto files = run_files(first);
    bool same = !files.empty() && files == run_files(second);
    for (const auto& f : files) same = same && file_bytes(first / f) == file_bytes(second / f);
    if (same)
      ++reproduced;
    else
      mismatched += " " + name;
  }
  const bool rerun_ok = mismatched.empty();
  return {ck_ok && fixture_ok && coco_ok && rerun_ok,
          std::string("checkpoint round trip ") + (ck_ok ? "bitwise" : "DIFFERS") + "; v1 fixture " +
              (fixture_ok ? "loads" : "FAILS") + "; COCO round trip " + (coco_ok ? "exact" : "DIFFERS") +
              "; manifest reruns bitwise " + std::to_string(reproduced) + "/" + std::to_string(runs.size()) +
              (rerun_ok ? "" : " (mismatch:" + mismatched + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc)
      g_out = argv[++i];
    else
      selected.insert(std::atoi(argv[i]));
  }
  fs::create_directories(g_out);
  setenv("DFKD_LOG", "error", 0);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradients},
      {"analytic loss oracles", loss_oracles},
      {"FID identities", fid_identities},
      {"attention machinery", attention_machinery},
      {"GAN FID direction (lambda 1 vs 0)", gan_direction},
      {"classification DFKD", classification_dfkd},
      {"detection DFKD", detection_dfkd},
      {"distillation ablation", ablation},
      {"detection preprocessing", preprocessing},
      {"persistence", persistence},
  };
  int failures = 0;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const std::string line = "criterion " + std::to_string(n) + " " + (o.pass ? "PASS" : "FAIL") + " [" +
                             criteria[i].first + "] " + o.detail + " (" + fmt("%.1f", since(t0)) + " s)";
    std::cout << line << std::endl;
    lines.push_back(line);
    if (!o.pass) ++failures;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l.substr(0, l.find(" [")) << "\n";
  return failures == 0 ? 0 : 1;
}
