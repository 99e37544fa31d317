#include "dfkd/cli/app.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include "dfkd/cli/report.hpp"
#include "dfkd/cli/run_support.hpp"
#include "dfkd/core/error.hpp"
#include "dfkd/core/log.hpp"
#include "dfkd/core/ops.hpp"
#include "dfkd/data/coco.hpp"
#include "dfkd/data/config_file.hpp"
#include "dfkd/data/datasets.hpp"
#include "dfkd/data/image_set.hpp"
#include "dfkd/detr/detr.hpp"
#include "dfkd/distill/distill.hpp"
#include "dfkd/gan/gan.hpp"
#include "dfkd/metrics/fid.hpp"
#include "dfkd/metrics/fid_extractor.hpp"
#include "dfkd/models/probes.hpp"
#include "dfkd/models/vit_io.hpp"

namespace dfkd::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> epochs;
  std::optional<double> lambda_kd, lambda_ce, lambda_patch, temperature, lambda_attn;
  std::optional<std::string> spec, data, teacher, extractor, generator, gan, synthetic, model, real, fake, split;
  std::optional<std::size_t> count;
  std::optional<double> score_threshold;
  std::vector<std::string> runs;
};

struct SynthesizeSettings {
  std::size_t count = 2000;
  std::string labels = "uniform";  // or comma-separated class weights
  std::uint64_t seed = 1;

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("count", count);
    kv.set("labels", labels);
    kv.set("seed", static_cast<std::size_t>(seed));
    return kv;
  }
  static SynthesizeSettings from_kv(const KeyValues& kv) {
    SynthesizeSettings s;
    s.count = kv.get_size("count", s.count);
    s.labels = kv.get("labels", s.labels);
    s.seed = kv.get_size("seed", s.seed);
    return s;
  }
  std::vector<double> weights(std::size_t classes) const {
    if (labels == "uniform") return {};
    std::vector<double> w;
    std::stringstream ss(labels);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        w.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("synthesize.labels: expected 'uniform' or comma-separated weights, got '" + labels + "'");
      }
    }
    if (w.size() != classes)
      throw ConfigError("synthesize.labels: " + std::to_string(w.size()) + " weights for " +
                        std::to_string(classes) + " classes");
    return w;
  }
};

struct ProbeSettings {
  long layer = -1;
  std::string aggregation = "mean";
  std::size_t head = 0;
  std::size_t images = 30;

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("layer", static_cast<std::int64_t>(layer));
    kv.set("aggregation", aggregation);
    kv.set("head", head);
    kv.set("images", images);
    return kv;
  }
  static ProbeSettings from_kv(const KeyValues& kv) {
    ProbeSettings p;
    p.layer = static_cast<long>(kv.get_int("layer", p.layer));
    p.aggregation = kv.get("aggregation", p.aggregation);
    p.head = kv.get_size("head", p.head);
    p.images = kv.get_size("images", p.images);
    if (p.aggregation != "mean" && p.aggregation != "single")
      throw ConfigError("probe.aggregation: expected mean or single, got '" + p.aggregation + "'");
    return p;
  }
  ProbeSelection selection() const {
    return {layer, aggregation == "mean" ? HeadAggregation::mean : HeadAggregation::single, head};
  }
};

// Resolves config sections (defaults < config file < flags) and input paths,
// and records both in the run manifest.
class Context {
 public:
  Context(std::string subcommand, const Options& opts, std::ostream& out)
      : opts_(opts), out_(out) {
    manifest_.subcommand = std::move(subcommand);
    manifest_.version = version_string();
    manifest_.started = utc_timestamp();
    if (opts.config) {
      file_ = ConfigFile::read(*opts.config);
      if (file_.has_section("run")) {
        const std::string other = file_.section("run").get("subcommand", std::string());
        if (!other.empty() && other != manifest_.subcommand)
          throw ConfigError(*opts.config + " is a manifest for '" + other + "', not '" + manifest_.subcommand + "'");
      }
    }
  }

  template <class T>
  T section(const std::string& name, const T& defaults, const std::function<void(KeyValues&)>& overrides = {}) {
    KeyValues kv = defaults.to_kv();
    const KeyValues& from_file = file_.section(name);
    for (const auto& [k, v] : from_file.items())
      if (!kv.has(k)) log_warn("config [" + name + "]: unknown key '" + k + "' ignored");
    kv.merge(from_file);
    if (overrides) overrides(kv);
    T value = T::from_kv(kv);
    manifest_.config.emplace_back(name, value.to_kv());
    return value;
  }

  std::string input(const std::string& role, const std::optional<std::string>& flag, bool required) {
    std::string v = flag ? *flag : file_.section("inputs").get(role, std::string());
    if (v.empty()) {
      if (required) throw ConfigError(manifest_.subcommand + ": --" + role + " is required");
      return v;
    }
    manifest_.inputs.set(role, v);
    return v;
  }

  void seed(std::uint64_t s) { manifest_.seed = s; }
  const Options& opts() const { return opts_; }
  std::ostream& out() { return out_; }

  fs::path output(const std::string& role, const std::string& file) {
    manifest_.outputs.set(role, file);
    return fs::path(opts_.out) / file;
  }
  void write(const std::string& role, const std::string& file, const std::string& text) {
    write_text(output(role, file), text);
  }

  void finish() {
    manifest_.finished = utc_timestamp();
    manifest_.to_file().write((fs::path(opts_.out) / RunManifest::kFileName).string());
  }

 private:
  const Options& opts_;
  std::ostream& out_;
  ConfigFile file_;
  RunManifest manifest_;
};

std::function<void(KeyValues&)> seed_epochs(const Options& o, bool with_epochs = true) {
  return [&o, with_epochs](KeyValues& kv) {
    if (o.seed) kv.set("seed", static_cast<std::size_t>(*o.seed));
    if (with_epochs && o.epochs) kv.set("epochs", *o.epochs);
  };
}

LabeledImages load_split(const std::string& dir, const std::string& split) {
  const fs::path p = fs::path(dir) / (split + ".imgset");
  if (!fs::exists(p))
    throw IoError(p.string() + " not found; create it with 'dfkd gen-data --spec cls_default --out " + dir + "'");
  return load_image_set(p.string()).images;
}

std::vector<DetectionSample> load_detection_split(const std::string& dir, const std::string& split) {
  const fs::path d = fs::path(dir) / split;
  const fs::path ann = d / "annotations.json";
  if (!fs::exists(ann))
    throw IoError(ann.string() + " not found; create it with 'dfkd gen-data --spec det_default --out " + dir + "'");
  return from_coco(read_coco(ann.string()), d.string());
}

Raster preview(const LabeledImages& images, std::size_t max_count, std::size_t columns) {
  std::vector<Raster> tiles;
  for (std::size_t i = 0; i < std::min(max_count, images.size()); ++i)
    tiles.push_back(to_raster(images.image(i), images.channels, images.height, images.width));
  return tile_rasters(tiles, columns);
}

void draw_rect(Raster& r, const BoxXYWH& b, std::array<std::uint8_t, 3> color) {
  const auto clampi = [](double v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp(std::lround(v), 0L, static_cast<long>(hi) - 1));
  };
  const std::size_t x0 = clampi(b[0], r.width), y0 = clampi(b[1], r.height);
  const std::size_t x1 = clampi(b[0] + b[2] - 1, r.width), y1 = clampi(b[1] + b[3] - 1, r.height);
  const auto put = [&](std::size_t x, std::size_t y) {
    for (std::size_t c = 0; c < 3; ++c) r.at(x, y, c) = color[c];
  };
  for (std::size_t x = x0; x <= x1; ++x) {
    put(x, y0);
    put(x, y1);
  }
  for (std::size_t y = y0; y <= y1; ++y) {
    put(x0, y);
    put(x1, y);
  }
}

const std::array<std::array<std::uint8_t, 3>, 4> kPalette{{{255, 64, 64}, {64, 160, 255}, {255, 200, 0}, {200, 80, 255}}};

Raster heatmap(std::span<const double> values, std::size_t grid, std::size_t scale) {
  const double hi = std::max(*std::max_element(values.begin(), values.end()), 1e-12);
  Raster small = to_raster(values, 1, grid, grid, 0.0, hi);
  Raster big{grid * scale, grid * scale, 1, std::vector<std::uint8_t>(grid * grid * scale * scale)};
  for (std::size_t y = 0; y < big.height; ++y)
    for (std::size_t x = 0; x < big.width; ++x) big.at(x, y) = small.at(x / scale, y / scale);
  return big;
}

std::string summary_block(const std::string& title, const MetricsTable& m) {
  std::ostringstream os;
  os << "== " << title << " ==\n";
  for (const auto& [k, v] : m.rows()) os << "  " << std::left << std::setw(32) << k << v << "\n";
  return os.str();
}

// ---- subcommands ---------------------------------------------------------

void cmd_gen_data(Context& ctx) {
  const Options& o = ctx.opts();
  std::string spec = ctx.input("spec", o.spec, false);
  if (spec.empty()) spec = ctx.input("spec", std::optional<std::string>("cls_default"), false);
  MetricsTable m;
  if (spec == "cls_default") {
    const auto s = ctx.section("data", ClassificationDatasetSpec{}, seed_epochs(o, false));
    ctx.seed(s.seed);
    const DatasetSplits d = gen_classification_dataset(s);
    save_image_set(ctx.output("train", "train.imgset").string(), d.train, "gen-data cls_default");
    save_image_set(ctx.output("val", "val.imgset").string(), d.val, "gen-data cls_default");
    save_image_set(ctx.output("test", "test.imgset").string(), d.test, "gen-data cls_default");
    write_pnm(ctx.output("preview", "preview.pgm").string(), preview(d.train, 32, 8));
    m.add("train_count", static_cast<double>(d.train.size()));
    m.add("val_count", static_cast<double>(d.val.size()));
    m.add("test_count", static_cast<double>(d.test.size()));
  } else if (spec == "det_default") {
    const auto s = ctx.section("detection_data", DetectionSceneSpec{}, seed_epochs(o, false));
    ctx.seed(s.seed);
    const DetectionSplits d = gen_detection_dataset(s);
    const std::vector<std::pair<std::string, const std::vector<DetectionSample>*>> splits{
        {"train", &d.train}, {"val", &d.val}, {"test", &d.test}};
    for (const auto& [name, samples] : splits) {
      const fs::path dir = fs::path(o.out) / name;
      fs::create_directories(dir / "images");
      const CocoDataset coco = to_coco(*samples, detection_class_names(), "images/");
      for (std::size_t i = 0; i < samples->size(); ++i)
        write_pnm((dir / coco.images[i].file_name).string(), (*samples)[i].image);
      ctx.output(name, name + "/annotations.json");
      write_coco((dir / "annotations.json").string(), coco);
      m.add(name + "_count", static_cast<double>(samples->size()));
      m.add(name + "_objects", static_cast<double>(coco.annotations.size()));
    }
    Raster shown = d.train.front().image;
    for (std::size_t k = 0; k < d.train.front().boxes.size(); ++k)
      draw_rect(shown, d.train.front().boxes[k], kPalette[static_cast<std::size_t>(d.train.front().labels[k]) % 4]);
    write_pnm(ctx.output("preview", "preview.ppm").string(), shown);
  } else {
    throw ConfigError("gen-data: unknown --spec '" + spec + "' (expected cls_default or det_default)");
  }
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("gen-data " + spec, m);
}

void cmd_train_teacher(Context& ctx) {
  const Options& o = ctx.opts();
  const std::string data = ctx.input("data", o.data, true);
  const ViTConfig vc = ctx.section("teacher", ViTConfig{});
  const auto tc = ctx.section("teacher_train", ClassifierTrainConfig{}, seed_epochs(o));
  ctx.seed(tc.seed);
  const LabeledImages train = load_split(data, "train"), val = load_split(data, "val"), test = load_split(data, "test");
  Rng init = Rng(tc.seed).child(1u << 20);
  VisionTransformer model(vc, init);
  const auto history = train_classifier(model, train, val, tc);
  save_vit(ctx.output("model", "teacher.ckpt").string(), model);
  const ConfusionMatrix cm = evaluate_classifier(model, test);
  ctx.write("history", "history.csv", classifier_history_csv(history));
  ctx.write("confusion", "confusion.csv", confusion_csv(cm));
  MetricsTable m;
  m.add("train_acc", history.back().train_acc);
  m.add("val_acc", history.back().val_acc);
  m.add("test_acc", cm.accuracy);
  m.add("params", static_cast<double>(model.weights().trainable_count()));
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("train-teacher", m);
}

void cmd_train_fid_extractor(Context& ctx) {
  const Options& o = ctx.opts();
  const std::string data = ctx.input("data", o.data, true);
  const auto fc = ctx.section("extractor", FidExtractorConfig{}, seed_epochs(o));
  ctx.seed(fc.seed);
  const LabeledImages train = load_split(data, "train"), val = load_split(data, "val");
  const FidExtractorTraining t = train_fid_extractor(fc, train);
  save_fid_extractor(ctx.output("model", "extractor.ckpt").string(), t.extractor);
  MetricsTable m;
  m.add("train_acc", t.train_accuracy);
  m.add("fid_train_vs_val", fid(image_stats(t.extractor, train.all()), image_stats(t.extractor, val.all())));
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("train-fid-extractor", m);
}

void cmd_train_gan(Context& ctx) {
  const Options& o = ctx.opts();
  const std::string data = ctx.input("data", o.data, true);
  const std::string teacher_path = ctx.input("teacher", o.teacher, false);
  const std::string extractor_path = ctx.input("extractor", o.extractor, false);
  const GanConfig gc = ctx.section("gan", GanConfig{}, [&](KeyValues& kv) {
    if (o.lambda_attn) kv.set("lambda_attn", *o.lambda_attn);
  });
  const auto tc = ctx.section("gan_train", GanTrainConfig{}, seed_epochs(o));
  const ProbeSettings ps = ctx.section("probe", ProbeSettings{});
  ctx.seed(tc.seed);
  if (gc.lambda_attn != 0.0 && teacher_path.empty())
    throw ConfigError("train-gan: lambda_attn = " + format_double(gc.lambda_attn) +
                      " needs --teacher (or set --lambda-attn 0 for a vanilla GAN)");
  const LabeledImages train = load_split(data, "train");
  std::optional<VisionTransformer> teacher;
  std::optional<AttentionGuidance> guidance;
  if (!teacher_path.empty()) {
    teacher.emplace(load_vit(teacher_path));
    guidance = AttentionGuidance{&*teacher, teacher_caps(*teacher, train, ps.selection()), ps.selection()};
  }
  std::optional<FidExtractor> extractor;
  if (!extractor_path.empty()) extractor.emplace(load_fid_extractor(extractor_path));
  const GanTrainResult r = train_gan(gc, tc, train, guidance, extractor ? &*extractor : nullptr);
  save_generator(ctx.output("model", "generator.ckpt").string(), r.generator);
  ctx.write("history", "history.csv", gan_history_csv(r.history));
  const SynthDataset grid = synthesize(r.generator, 8 * gc.num_classes, Rng(tc.seed).child(5));
  write_pnm(ctx.output("samples", "samples.pgm").string(), preview(grid.data, grid.data.size(), 8));
  MetricsTable m;
  const GanEpochRecord& last = r.history.back();
  if (extractor) m.add("final_fid", last.fid);
  m.add("final_d_loss", last.d_loss);
  m.add("final_g_adv", last.g_adv);
  if (teacher) m.add("final_g_attn", last.g_attn);
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("train-gan", m);
}

void cmd_synthesize(Context& ctx) {
  const Options& o = ctx.opts();
  const std::string gen_path = ctx.input("generator", o.generator, true);
  const SynthesizeSettings ss = ctx.section("synthesize", SynthesizeSettings{}, [&](KeyValues& kv) {
    if (o.seed) kv.set("seed", static_cast<std::size_t>(*o.seed));
    if (o.count) kv.set("count", *o.count);
  });
  ctx.seed(ss.seed);
  const Generator g = load_generator(gen_path);
  const auto weights = ss.weights(g.config().num_classes);
  const SynthDataset syn = synthesize(g, ss.count, Rng(ss.seed), weights, gen_path);
  save_image_set(ctx.output("images", "synthetic.imgset").string(), syn.data, syn.provenance);
  write_pnm(ctx.output("samples", "samples.pgm").string(), preview(syn.data, 64, 8));
  MetricsTable m;
  m.add("count", static_cast<double>(syn.data.size()));
  for (std::size_t k = 0; k < g.config().num_classes; ++k)
    m.add("count_class_" + std::to_string(k),
          static_cast<double>(std::count(syn.data.labels.begin(), syn.data.labels.end(), static_cast<int>(k))));
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("synthesize", m);
}

void cmd_probe_export(Context& ctx) {
  const Options& o = ctx.opts();
  const std::string teacher_path = ctx.input("teacher", o.teacher, true);
  const std::string data = ctx.input("data", o.data, true);
  const ProbeSettings ps = ctx.section("probe", ProbeSettings{});
  const VisionTransformer teacher = load_vit(teacher_path);
  const LabeledImages train = load_split(data, "train");
  const auto caps = teacher_caps(teacher, train, ps.selection());
  const std::size_t grid = teacher.config().grid();

  std::ostringstream cap_csv;
  cap_csv << "class_id,samples";
  for (std::size_t j = 0; j < grid * grid; ++j) cap_csv << ",p" << j;
  cap_csv << "\n";
  for (const auto& c : caps) {
    cap_csv << c.class_id << ',' << c.sample_count;
    for (double v : c.values) cap_csv << ',' << csv_double(v);
    cap_csv << "\n";
    write_pnm(ctx.output("cap_" + std::to_string(c.class_id), "cap_" + std::to_string(c.class_id) + ".pgm").string(),
              heatmap(c.values, grid, 8));
  }
  ctx.write("caps", "caps.csv", cap_csv.str());

  std::ostringstream probe_csv;
  probe_csv << "image,label,predicted,class_id";
  for (std::size_t j = 0; j < grid * grid; ++j) probe_csv << ",p" << j;
  probe_csv << "\n";
  const std::size_t n = std::min(ps.images, train.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  NoGradGuard guard;
  const ViTOutput out = teacher.forward(train.batch(idx));
  const Tensor probes = probe_tensor(out.attention, ps.selection());
  const auto pred = predict(teacher, train.subset(idx));
  for (std::size_t i = 0; i < n; ++i) {
    probe_csv << i << ',' << train.labels[i] << ',' << pred[i] << ',' << pred[i];
    for (std::size_t j = 0; j < grid * grid; ++j) probe_csv << ',' << csv_double(probes.at(i * grid * grid + j));
    probe_csv << "\n";
  }
  ctx.write("probes", "probes.csv", probe_csv.str());
  MetricsTable m;
  m.add("classes", static_cast<double>(caps.size()));
  m.add("probes_exported", static_cast<double>(n));
  m.add_text("layer", std::to_string(ps.selection().resolve_layer(teacher.config().depth)));
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("probe-export", m);
}

void cmd_distill(Context& ctx) {
  const Options& o = ctx.opts();
  const std::string teacher_path = ctx.input("teacher", o.teacher, true);
  const std::string gan_path = ctx.input("gan", o.gan, false);
  const std::string synthetic_path = ctx.input("synthetic", o.synthetic, false);
  const std::string data = ctx.input("data", o.data, false);
  if (gan_path.empty() == synthetic_path.empty())
    throw ConfigError("distill: give exactly one of --gan (generator checkpoint) or --synthetic (image set)");
  const ViTConfig sc = ctx.section("student", default_student_config());
  const DistillConfig dc = ctx.section("distill", DistillConfig{}, [&](KeyValues& kv) {
    seed_epochs(o)(kv);
    if (o.lambda_kd) kv.set("lambda_kd", *o.lambda_kd);
    if (o.lambda_ce) kv.set("lambda_ce", *o.lambda_ce);
    if (o.lambda_patch) kv.set("lambda_patch", *o.lambda_patch);
    if (o.temperature) kv.set("temperature", *o.temperature);
  });
  ctx.seed(dc.seed);
  const VisionTransformer teacher = load_vit(teacher_path);
  LabeledImages synthetic;
  if (!gan_path.empty()) {
    const SynthesizeSettings ss = ctx.section("synthesize", SynthesizeSettings{}, [&](KeyValues& kv) {
      if (o.seed) kv.set("seed", static_cast<std::size_t>(*o.seed));
      if (o.count) kv.set("count", *o.count);
    });
    const Generator g = load_generator(gan_path);
    synthetic = synthesize(g, ss.count, Rng(ss.seed), ss.weights(g.config().num_classes), gan_path).data;
  } else {
    synthetic = load_image_set(synthetic_path).images;
  }
  LabeledImages val, test;
  if (!data.empty()) {
    val = load_split(data, "val");
    test = load_split(data, "test");
  }
  const DistillResult r = distill(teacher, sc, synthetic, val, dc);
  save_vit(ctx.output("model", "student.ckpt").string(), r.student);
  ctx.write("history", "history.csv", distill_history_csv(r.history));
  MetricsTable m;
  m.add("synthetic_count", static_cast<double>(synthetic.size()));
  m.add("teacher_agreement_on_synthetic",
        accuracy_confusion(predict(teacher, synthetic), synthetic.labels, teacher.config().num_classes).accuracy);
  m.add("student_params", static_cast<double>(r.student.weights().trainable_count()));
  if (!data.empty()) {
    const ConfusionMatrix cm = evaluate_classifier(r.student, test);
    ctx.write("confusion", "confusion.csv", confusion_csv(cm));
    Rng untrained_rng = Rng(dc.seed).child(0);
    const VisionTransformer untrained(sc, untrained_rng);
    m.add("student_val_acc", r.history.back().val_acc);
    m.add("student_test_acc", cm.accuracy);
    m.add("teacher_test_acc", evaluate_classifier(teacher, test).accuracy);
    m.add("untrained_test_acc", evaluate_classifier(untrained, test).accuracy);
  }
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("distill", m);
}

PreparedDetectionSet prepared(const std::string& data, const std::string& split, const DetrConfig& c) {
  return prepare_detection_set(load_detection_split(data, split), c.preprocess);
}

void cmd_train_detr_teacher(Context& ctx) {
  const Options& o = ctx.opts();
  const std::string data = ctx.input("data", o.data, true);
  const DetrConfig dc = ctx.section("detr", DetrConfig::desk_teacher());
  const auto tc = ctx.section("detr_train", DetrTrainConfig{}, seed_epochs(o));
  ctx.seed(tc.seed);
  const auto train = prepared(data, "train", dc), val = prepared(data, "val", dc);
  Rng init = Rng(tc.seed).child(1u << 20);
  DetrLite model(dc, init);
  const auto history = train_detr(model, train, tc);
  save_detr(ctx.output("model", "detr_teacher.ckpt").string(), model);
  ctx.write("history", "history.csv", detr_history_csv(history));
  MetricsTable m;
  m.add("train_map50", history.back().map50);
  m.add("val_map50", evaluate_detector(model, val).ap.mean_ap);
  m.add("params", static_cast<double>(detr_param_count(dc)));
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("train-detr-teacher", m);
}

void cmd_distill_detect(Context& ctx) {
  const Options& o = ctx.opts();
  const std::string teacher_path = ctx.input("teacher", o.teacher, true);
  const std::string data = ctx.input("data", o.data, true);
  const DetrConfig sc = ctx.section("detr_student", DetrConfig::desk_student());
  const auto tc = ctx.section("detr_train", DetrTrainConfig{}, [&](KeyValues& kv) {
    seed_epochs(o)(kv);
    if (o.temperature) kv.set("temperature", *o.temperature);
    if (o.lambda_kd) kv.set("weight.distill", *o.lambda_kd);
  });
  ctx.seed(tc.seed);
  const DetrLite teacher = load_detr(teacher_path);
  const auto train = prepared(data, "train", sc), val = prepared(data, "val", sc);
  const DetrDistillResult r = distill_detection(teacher, sc, train, tc);
  save_detr(ctx.output("model", "detr_student.ckpt").string(), r.student);
  ctx.write("history", "history.csv", detr_history_csv(r.history));
  MetricsTable m;
  m.add("train_map50", r.history.back().map50);
  m.add("val_map50", evaluate_detector(r.student, val).ap.mean_ap);
  m.add("teacher_train_map50", evaluate_detector(teacher, train).ap.mean_ap);
  m.add("params", static_cast<double>(detr_param_count(sc)));
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("distill-detect", m);
}

void cmd_eval(Context& ctx) {
  const Options& o = ctx.opts();
  const std::string model_path = ctx.input("model", o.model, true);
  const std::string data = ctx.input("data", o.data, false);
  const std::string images = ctx.input("images", o.synthetic, false);
  if (data.empty() == images.empty()) throw ConfigError("eval: give exactly one of --data DIR or --images FILE");
  const std::string split = o.split.value_or("test");
  const LabeledImages set = data.empty() ? load_image_set(images).images : load_split(data, split);
  const VisionTransformer model = load_vit(model_path);
  const ConfusionMatrix cm = evaluate_classifier(model, set);
  ctx.write("confusion", "confusion.csv", confusion_csv(cm));
  MetricsTable m;
  m.add("accuracy", cm.accuracy);
  m.add("count", static_cast<double>(cm.total()));
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("eval", m);
}

void cmd_eval_detect(Context& ctx) {
  const Options& o = ctx.opts();
  const std::string model_path = ctx.input("model", o.model, true);
  const std::string data = ctx.input("data", o.data, true);
  const std::string split = o.split.value_or("test");
  const DetrLite model = load_detr(model_path);
  const auto samples = load_detection_split(data, split);
  const auto set = prepare_detection_set(samples, model.config().preprocess);
  DecodeOptions dopt;
  if (o.score_threshold) dopt.score_threshold = *o.score_threshold;
  const DetectionEvaluation ev = evaluate_detector(model, set, dopt);
  ctx.write("detections", "detections.csv", detection_dump_csv(model, set, dopt));
  const fs::path ann = fs::path(o.out) / "annotated";
  fs::create_directories(ann);
  for (std::size_t i = 0; i < std::min<std::size_t>(8, samples.size()); ++i) {
    Raster r = samples[i].image;
    for (const auto& gt : ev.results.images[i].ground_truth) draw_rect(r, gt.box, {0, 255, 0});
    for (const auto& p : ev.results.images[i].predictions)
      draw_rect(r, p.box, kPalette[static_cast<std::size_t>(p.label) % kPalette.size()]);
    std::ostringstream name;
    name << "annotated/" << std::setw(5) << std::setfill('0') << i << ".ppm";
    write_pnm(ctx.output("annotated_" + std::to_string(i), name.str()).string(), r);
  }
  MetricsTable m;
  m.add("map50", ev.ap.mean_ap);
  for (std::size_t k = 0; k < ev.ap.per_class.size(); ++k) m.add("ap50_class_" + std::to_string(k), ev.ap.per_class[k]);
  m.add("images", static_cast<double>(samples.size()));
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("eval-detect " + split, m);
}

LabeledImages image_source(const std::string& path, const std::string& split) {
  return fs::is_directory(path) ? load_split(path, split) : load_image_set(path).images;
}

void cmd_fid(Context& ctx) {
  const Options& o = ctx.opts();
  const std::string extractor_path = ctx.input("extractor", o.extractor, true);
  const std::string real = ctx.input("real", o.real, true);
  const std::string fake = ctx.input("fake", o.fake, false);
  const std::string gen_path = ctx.input("generator", o.generator, false);
  if (fake.empty() == gen_path.empty()) throw ConfigError("fid: give exactly one of --fake or --generator");
  const FidExtractor ex = load_fid_extractor(extractor_path);
  const LabeledImages r = image_source(real, o.split.value_or("train"));
  LabeledImages f;
  if (!fake.empty()) {
    f = image_source(fake, o.split.value_or("train"));
  } else {
    const SynthesizeSettings ss = ctx.section("synthesize", SynthesizeSettings{}, [&](KeyValues& kv) {
      if (o.seed) kv.set("seed", static_cast<std::size_t>(*o.seed));
      if (o.count) kv.set("count", *o.count);
    });
    ctx.seed(ss.seed);
    const Generator g = load_generator(gen_path);
    f = synthesize(g, ss.count, Rng(ss.seed), ss.weights(g.config().num_classes), gen_path).data;
  }
  MetricsTable m;
  m.add("fid", fid(image_stats(ex, r.all()), image_stats(ex, f.all())));
  m.add("real_count", static_cast<double>(r.size()));
  m.add("fake_count", static_cast<double>(f.size()));
  ctx.write("metrics", "metrics.csv", m.csv());
  ctx.out() << summary_block("fid", m);
}

void cmd_report(Context& ctx) {
  const Options& o = ctx.opts();
  std::vector<fs::path> dirs(o.runs.begin(), o.runs.end());
  const Report r = build_report(dirs);
  for (std::size_t i = 0; i < o.runs.size(); ++i) ctx.input("run" + std::to_string(i), o.runs[i], false);
  if (!o.out.empty()) {
    ctx.write("report_csv", "report.csv", r.csv());
    ctx.write("report_text", "report.txt", r.text());
  }
  ctx.out() << r.text();
}

using Command = void (*)(Context&);

struct Subcommand {
  const char* name;
  const char* help;
  Command run;
  std::vector<const char*> paths;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    set_log_level(log_level_from_env());
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitContract;
  }

  Options o;
  CLI::App app{"dfkd: data-free knowledge distillation toolkit (desk scale)", "dfkd"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  const std::vector<Subcommand> subs{
      {"gen-data", "generate the procedural classification (cls_default) or detection (det_default) dataset",
       cmd_gen_data, {"spec"}},
      {"train-teacher", "train the ViT teacher on real data", cmd_train_teacher, {"data"}},
      {"train-fid-extractor", "train the small CNN used as the FID feature extractor", cmd_train_fid_extractor,
       {"data"}},
      {"train-gan", "train the conditional GAN, optionally guided by teacher attention", cmd_train_gan,
       {"data", "teacher", "extractor"}},
      {"synthesize", "sample a labeled synthetic image set from a generator", cmd_synthesize, {"generator", "count"}},
      {"probe-export", "export attention probes and class attention probes", cmd_probe_export, {"teacher", "data"}},
      {"distill", "distill a student ViT from the teacher on synthetic images", cmd_distill,
       {"teacher", "gan", "synthetic", "data", "count"}},
      {"train-detr-teacher", "train the DETR-lite teacher", cmd_train_detr_teacher, {"data"}},
      {"distill-detect", "distill a DETR-lite student from the teacher", cmd_distill_detect, {"teacher", "data"}},
      {"eval", "evaluate a ViT checkpoint", cmd_eval, {"model", "data", "images", "split"}},
      {"eval-detect", "evaluate a DETR-lite checkpoint (mAP@0.5, detection dumps)", cmd_eval_detect,
       {"model", "data", "split", "score-threshold"}},
      {"fid", "FID between two image sources under the pinned extractor", cmd_fid,
       {"extractor", "real", "fake", "generator", "split", "count"}},
      {"report", "aggregate run directories into comparison tables", cmd_report, {"runs"}},
  };

  const std::map<std::string, std::function<void(CLI::App*)>> path_flags{
      {"spec", [&](CLI::App* s) { s->add_option("--spec", o.spec, "cls_default or det_default"); }},
      {"data", [&](CLI::App* s) { s->add_option("--data", o.data, "dataset directory from gen-data"); }},
      {"teacher", [&](CLI::App* s) { s->add_option("--teacher", o.teacher, "teacher checkpoint"); }},
      {"extractor", [&](CLI::App* s) { s->add_option("--extractor", o.extractor, "FID extractor checkpoint"); }},
      {"generator", [&](CLI::App* s) { s->add_option("--generator", o.generator, "generator checkpoint"); }},
      {"gan", [&](CLI::App* s) { s->add_option("--gan", o.gan, "generator checkpoint to synthesize from"); }},
      {"synthetic", [&](CLI::App* s) { s->add_option("--synthetic", o.synthetic, "synthetic image set"); }},
      {"images", [&](CLI::App* s) { s->add_option("--images", o.synthetic, "image set file"); }},
      {"model", [&](CLI::App* s) { s->add_option("--model", o.model, "model checkpoint"); }},
      {"real", [&](CLI::App* s) { s->add_option("--real", o.real, "image set file or dataset directory"); }},
      {"fake", [&](CLI::App* s) { s->add_option("--fake", o.fake, "image set file or dataset directory"); }},
      {"split", [&](CLI::App* s) { s->add_option("--split", o.split, "train, val or test"); }},
      {"count", [&](CLI::App* s) { s->add_option("--count", o.count, "number of synthetic images"); }},
      {"score-threshold",
       [&](CLI::App* s) { s->add_option("--score-threshold", o.score_threshold, "minimum detection score"); }},
      {"runs", [&](CLI::App* s) { s->add_option("--runs", o.runs, "run directories")->required(); }},
  };

  const Subcommand* chosen = nullptr;
  for (const Subcommand& sc : subs) {
    CLI::App* s = app.add_subcommand(sc.name, sc.help);
    s->add_option("--config", o.config, "config file (key = value with [section] headers) or a run manifest");
    s->add_option("--seed", o.seed, "seed (overrides the config)");
    auto* out_opt = s->add_option("--out", o.out, "output directory");
    if (std::string(sc.name) != "report") out_opt->required();
    s->add_option("--epochs", o.epochs, "training epochs");
    s->add_option("--lambda-kd", o.lambda_kd, "weight of the KD term");
    s->add_option("--lambda-ce", o.lambda_ce, "weight of the CE term");
    s->add_option("--lambda-patch", o.lambda_patch, "weight of the patch attention term");
    s->add_option("--temperature", o.temperature, "distillation temperature");
    s->add_option("--lambda-attn", o.lambda_attn, "weight of the generator attention term");
    for (const char* p : sc.paths) path_flags.at(p)(s);
    s->callback([&chosen, &sc] { chosen = &sc; });
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    const auto parsed = app.get_subcommands();
    err << (parsed.empty() ? app.help() : parsed.front()->help());
    return kExitContract;
  }

  try {
    Context ctx(chosen->name, o, out);
    const bool has_out = !o.out.empty();
    std::optional<OutDirLock> lock;
    if (has_out) lock.emplace(o.out);
    log_info(std::string(chosen->name) + " started, output in " + (has_out ? o.out : std::string("(stdout)")));
    chosen->run(ctx);
    if (has_out) ctx.finish();
    log_info(std::string(chosen->name) + " finished");
    return kExitOk;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitContract;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace dfkd::cli
