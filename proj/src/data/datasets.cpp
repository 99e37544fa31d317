#include "dfkd/data/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "dfkd/core/error.hpp"

namespace dfkd {

const std::vector<std::string>& classification_families() {
  static const std::vector<std::string> f{"bars", "crosses", "disks", "rings", "hbars", "diagonals", "squares",
                                          "triangles"};
  return f;
}

void ClassificationDatasetSpec::validate() const {
  if (num_classes < 2) throw ConfigError("dataset: need at least 2 classes");
  if (samples_per_class < 7) throw ConfigError("dataset: samples_per_class must be at least 7 for a 70/15/15 split");
  if (image_size < 8) throw ConfigError("dataset: image_size must be at least 8");
  if (channels != 1 && channels != 3) throw ConfigError("dataset: channels must be 1 or 3");
  if (noise < 0.0) throw ConfigError("dataset: noise must be non-negative");
  const auto fam = resolved_families();
  for (const auto& f : fam)
    if (std::find(classification_families().begin(), classification_families().end(), f) ==
        classification_families().end())
      throw ConfigError("dataset: unknown shape family '" + f + "'");
  for (std::size_t i = 0; i < fam.size(); ++i)
    for (std::size_t j = i + 1; j < fam.size(); ++j)
      if (fam[i] == fam[j]) throw ConfigError("dataset: family '" + fam[i] + "' used twice");
}

std::vector<std::string> ClassificationDatasetSpec::resolved_families() const {
  if (!families.empty()) {
    if (families.size() != num_classes)
      throw ConfigError("dataset: " + std::to_string(families.size()) + " families for " +
                        std::to_string(num_classes) + " classes");
    return families;
  }
  if (num_classes > classification_families().size())
    throw ConfigError("dataset: at most " + std::to_string(classification_families().size()) + " classes");
  return {classification_families().begin(), classification_families().begin() + static_cast<long>(num_classes)};
}

KeyValues ClassificationDatasetSpec::to_kv() const {
  KeyValues kv;
  kv.set("num_classes", num_classes);
  kv.set("samples_per_class", samples_per_class);
  kv.set("image_size", image_size);
  kv.set("channels", channels);
  std::string fam;
  for (const auto& f : resolved_families()) fam += (fam.empty() ? "" : ",") + f;
  kv.set("families", fam);
  kv.set("noise", noise);
  kv.set("seed", static_cast<std::size_t>(seed));
  return kv;
}

ClassificationDatasetSpec ClassificationDatasetSpec::from_kv(const KeyValues& kv) {
  ClassificationDatasetSpec s;
  s.num_classes = kv.get_size("num_classes", s.num_classes);
  s.samples_per_class = kv.get_size("samples_per_class", s.samples_per_class);
  s.image_size = kv.get_size("image_size", s.image_size);
  s.channels = kv.get_size("channels", s.channels);
  s.noise = kv.get_double("noise", s.noise);
  s.seed = kv.get_size("seed", s.seed);
  const std::string fam = kv.get("families", std::string());
  std::size_t start = 0;
  while (!fam.empty() && start <= fam.size()) {
    const std::size_t comma = std::min(fam.find(',', start), fam.size());
    s.families.push_back(fam.substr(start, comma - start));
    start = comma + 1;
  }
  return s;
}

std::vector<double> render_classification_image(const std::string& family, std::size_t size, std::size_t channels,
                                                double noise, Rng& rng) {
  const double s = static_cast<double>(size), k = s / 16.0;
  const double cx = s / 2 + rng.uniform(-2, 2) * k, cy = s / 2 + rng.uniform(-2, 2) * k;
  std::function<bool(double, double)> inside;
  if (family == "bars" || family == "hbars") {
    const double x0 = rng.uniform(2, s / 2 - 3 * k), gap = rng.uniform(4, 7) * k, w = rng.uniform(1.5, 2.5) * k;
    const double lo = rng.uniform(1, 3) * k, hi = s - rng.uniform(1, 3) * k;
    const bool vertical = family == "bars";
    inside = [=](double x, double y) {
      const double a = vertical ? x : y, b = vertical ? y : x;
      return b >= lo && b <= hi && ((a >= x0 && a <= x0 + w) || (a >= x0 + gap && a <= x0 + gap + w));
    };
  } else if (family == "crosses") {
    const double len = rng.uniform(4, 7) * k, t = rng.uniform(0.8, 1.3) * k;
    inside = [=](double x, double y) {
      const double dx = std::abs(x - cx), dy = std::abs(y - cy);
      return (dx <= t && dy <= len) || (dy <= t && dx <= len);
    };
  } else if (family == "disks") {
    const double r = rng.uniform(3, 6) * k;
    inside = [=](double x, double y) { return std::hypot(x - cx, y - cy) <= r; };
  } else if (family == "rings") {
    const double r = rng.uniform(4.5, 7) * k, t = rng.uniform(0.7, 1.0) * k;
    inside = [=](double x, double y) { return std::abs(std::hypot(x - cx, y - cy) - r) <= t; };
  } else if (family == "diagonals") {
    const double off = rng.uniform(-2, 2) * k, t = rng.uniform(0.9, 1.4) * k;
    inside = [=](double x, double y) { return std::abs((x - y) - off) <= t * 1.41421356237; };
  } else if (family == "squares") {
    const double h = rng.uniform(2.5, 5) * k;
    inside = [=](double x, double y) { return std::max(std::abs(x - cx), std::abs(y - cy)) <= h; };
  } else if (family == "triangles") {
    const double h = rng.uniform(3, 6) * k;
    inside = [=](double x, double y) {
      const double dy = y - (cy - h);
      return dy >= 0 && dy <= 2 * h && std::abs(x - cx) <= dy / 2;
    };
  } else {
    throw ConfigError("unknown shape family '" + family + "'");
  }
  const double fg = rng.uniform(0.6, 1.0), bg = rng.uniform(-1.0, -0.7);
  std::vector<double> img(channels * size * size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double base = inside(x + 0.5, y + 0.5) ? fg : bg;
      for (std::size_t c = 0; c < channels; ++c)
        img[(c * size + y) * size + x] = std::clamp(base + noise * rng.normal(), -1.0, 1.0);
    }
  return img;
}

SplitIndices stratified_split(const std::vector<int>& labels, std::size_t num_classes, Rng rng) {
  SplitIndices out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == static_cast<int>(c)) idx.push_back(i);
    Rng r = rng.child(c);
    r.shuffle(std::span<std::size_t>(idx));
    const std::size_t n = idx.size(), ntr = n * 70 / 100, nva = n * 15 / 100;
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<long>(ntr));
    out.val.insert(out.val.end(), idx.begin() + static_cast<long>(ntr), idx.begin() + static_cast<long>(ntr + nva));
    out.test.insert(out.test.end(), idx.begin() + static_cast<long>(ntr + nva), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

DatasetSplits gen_classification_dataset(const ClassificationDatasetSpec& spec) {
  spec.validate();
  const auto fam = spec.resolved_families();
  const Rng root(spec.seed);
  LabeledImages all{spec.channels, spec.image_size, spec.image_size, {}, {}};
  for (std::size_t c = 0; c < spec.num_classes; ++c)
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      Rng r = root.child(c).child(i);
      all.append(render_classification_image(fam[c], spec.image_size, spec.channels, spec.noise, r),
                 static_cast<int>(c));
    }
  const SplitIndices s = stratified_split(all.labels, spec.num_classes, root.child(1u << 20));
  return {all.subset(s.train), all.subset(s.val), all.subset(s.test)};
}

void DetectionSceneSpec::validate() const {
  if (canvas < 16) throw ConfigError("scenes: canvas must be at least 16");
  if (num_classes < 1 || num_classes > detection_class_names().size())
    throw ConfigError("scenes: num_classes must be in [1, " + std::to_string(detection_class_names().size()) + "]");
  if (min_objects > max_objects || max_objects == 0) throw ConfigError("scenes: invalid object count range");
  if (min_size < 4 || min_size > max_size || max_size >= canvas) throw ConfigError("scenes: invalid object size range");
  if (images < 7) throw ConfigError("scenes: need at least 7 images for a 70/15/15 split");
}

KeyValues DetectionSceneSpec::to_kv() const {
  KeyValues kv;
  kv.set("canvas", canvas);
  kv.set("num_classes", num_classes);
  kv.set("min_objects", min_objects);
  kv.set("max_objects", max_objects);
  kv.set("min_size", min_size);
  kv.set("max_size", max_size);
  kv.set("images", images);
  kv.set("noise", noise);
  kv.set("seed", static_cast<std::size_t>(seed));
  return kv;
}

DetectionSceneSpec DetectionSceneSpec::from_kv(const KeyValues& kv) {
  DetectionSceneSpec s;
  s.canvas = kv.get_size("canvas", s.canvas);
  s.num_classes = kv.get_size("num_classes", s.num_classes);
  s.min_objects = kv.get_size("min_objects", s.min_objects);
  s.max_objects = kv.get_size("max_objects", s.max_objects);
  s.min_size = kv.get_size("min_size", s.min_size);
  s.max_size = kv.get_size("max_size", s.max_size);
  s.images = kv.get_size("images", s.images);
  s.noise = kv.get_double("noise", s.noise);
  s.seed = kv.get_size("seed", s.seed);
  return s;
}

const std::vector<std::string>& detection_class_names() {
  static const std::vector<std::string> n{"square", "disk", "triangle"};
  return n;
}

DetectionSample render_detection_scene(const DetectionSceneSpec& spec, Rng& rng) {
  static const int colors[3][3] = {{220, 60, 60}, {60, 200, 80}, {70, 90, 230}};
  const std::size_t n = spec.canvas;
  DetectionSample s;
  s.image = Raster{n, n, 3, std::vector<std::uint8_t>(n * n * 3)};
  const double gray = rng.uniform(70, 110);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        s.image.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(gray + spec.noise * rng.normal()), 0L, 255L));

  const std::size_t count = spec.min_objects + rng.below(spec.max_objects - spec.min_objects + 1);
  struct Obj {
    int label;
    std::size_t x, y, size;
  };
  std::vector<Obj> objs;
  for (std::size_t attempt = 0; objs.size() < count && attempt < 200; ++attempt) {
    const std::size_t sz = spec.min_size + rng.below(spec.max_size - spec.min_size + 1);
    const std::size_t x = rng.below(n - sz + 1), y = rng.below(n - sz + 1);
    const int label = static_cast<int>(rng.below(spec.num_classes));
    bool clear = true;
    for (const auto& o : objs)
      clear = clear && (x + sz + 2 <= o.x || o.x + o.size + 2 <= x || y + sz + 2 <= o.y || o.y + o.size + 2 <= y);
    if (clear) objs.push_back({label, x, y, sz});
  }
  std::sort(objs.begin(), objs.end(), [](const Obj& a, const Obj& b) {
    const double ca = a.x + a.size / 2.0, cb = b.x + b.size / 2.0;
    if (ca != cb) return ca < cb;
    return a.y + a.size / 2.0 < b.y + b.size / 2.0;
  });
  for (const auto& o : objs) {
    int col[3];
    for (int c = 0; c < 3; ++c) col[c] = std::clamp(colors[o.label][c] + static_cast<int>(rng.uniform(-20, 20)), 0, 255);
    const double side = static_cast<double>(o.size), r = side / 2.0;
    for (std::size_t py = o.y; py < o.y + o.size; ++py)
      for (std::size_t px = o.x; px < o.x + o.size; ++px) {
        const double u = px - o.x + 0.5, v = py - o.y + 0.5;
        bool in = true;
        if (o.label == 1) in = std::hypot(u - r, v - r) <= r;
        if (o.label == 2) in = std::abs(u - r) <= v / 2.0;
        if (in)
          for (int c = 0; c < 3; ++c) s.image.at(px, py, c) = static_cast<std::uint8_t>(col[c]);
      }
    s.labels.push_back(o.label);
    s.boxes.push_back({double(o.x), double(o.y), side, side});
  }
  return s;
}

DetectionSplits gen_detection_dataset(const DetectionSceneSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  DetectionSplits out;
  const std::size_t ntr = spec.images * 70 / 100, nva = spec.images * 15 / 100;
  for (std::size_t i = 0; i < spec.images; ++i) {
    Rng r = root.child(i);
    DetectionSample s = render_detection_scene(spec, r);
    (i < ntr ? out.train : i < ntr + nva ? out.val : out.test).push_back(std::move(s));
  }
  return out;
}

BoxCXCYWH to_normalized_cxcywh(const BoxXYWH& b, double w, double h) {
  return {(b[0] + b[2] / 2) / w, (b[1] + b[3] / 2) / h, b[2] / w, b[3] / h};
}

BoxXYWH from_normalized_cxcywh(const BoxCXCYWH& b, double w, double h) {
  return {(b[0] - b[2] / 2) * w, (b[1] - b[3] / 2) * h, b[2] * w, b[3] * h};
}

}  // namespace dfkd
