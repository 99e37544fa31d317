#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dfkd/core/error.hpp"
#include "dfkd/core/ops.hpp"
#include "dfkd/gan/gan.hpp"

namespace dfkd {

namespace o = ops;

void GanTrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train-gan: batch_size must be positive");
  if (!(optimizer.lr > 0.0)) throw ConfigError("train-gan: lr must be positive");
  if (fid_samples < 2) throw ConfigError("train-gan: fid_samples must be at least 2");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("train-gan: ema_decay must lie in [0, 1)");
}

KeyValues GanTrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("epochs", epochs);
  kv.set("batch_size", batch_size);
  write_adam(kv, "", optimizer);
  kv.set("fid_every", fid_every);
  kv.set("fid_samples", fid_samples);
  kv.set("ema_decay", ema_decay);
  kv.set("seed", static_cast<std::size_t>(seed));
  return kv;
}

GanTrainConfig GanTrainConfig::from_kv(const KeyValues& kv) {
  GanTrainConfig c;
  c.epochs = kv.get_size("epochs", c.epochs);
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.optimizer = read_adam(kv, "", c.optimizer);
  c.fid_every = kv.get_size("fid_every", c.fid_every);
  c.fid_samples = kv.get_size("fid_samples", c.fid_samples);
  c.ema_decay = kv.get_double("ema_decay", c.ema_decay);
  c.seed = kv.get_size("seed", c.seed);
  return c;
}

namespace {

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits.at(i * k + j) > logits.at(i * k + best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

Tensor generate(const Generator& g, std::size_t count, Rng rng) {
  NoGradGuard guard;
  const std::size_t k = g.config().num_classes;
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < count; b += 64) {
    const std::size_t n = std::min<std::size_t>(64, count - b);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>((b + i) % k);
    parts.push_back(g.forward(sample_latent(n, g.config().latent_dim, rng), labels));
  }
  return parts.size() == 1 ? parts.front() : o::concat(parts, 0);
}

void ema_update(ModelWeights& avg, const ModelWeights& current, double decay) {
  for (const NamedTensor& e : current.entries()) {
    auto out = avg.at(e.name).mutable_data();
    const auto in = e.tensor.data();
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = decay * out[j] + (1.0 - decay) * in[j];
  }
}

}  // namespace

std::vector<ClassAttentionProbe> teacher_caps(const VisionTransformer& teacher, const LabeledImages& data,
                                              const ProbeSelection& selection) {
  NoGradGuard guard;
  const ViTConfig& c = teacher.config();
  CapAccumulator acc(c.num_classes, c.num_patches());
  for (std::size_t b = 0; b < data.size(); b += 64) {
    std::vector<std::size_t> idx(std::min<std::size_t>(64, data.size() - b));
    std::iota(idx.begin(), idx.end(), b);
    const ViTOutput out = teacher.forward(data.batch(idx));
    const auto pred = argmax_rows(out.logits);
    const Tensor probes = probe_tensor(out.attention, selection);
    const std::size_t n = c.num_patches();
    for (std::size_t i = 0; i < idx.size(); ++i) acc.add(pred[i], probes.data().subspan(i * n, n));
  }
  return acc.finalize();
}

GanTrainResult train_gan(const GanConfig& config, const GanTrainConfig& train, const LabeledImages& data,
                         const std::optional<AttentionGuidance>& guidance, const FidExtractor* extractor) {
  config.validate();
  train.validate();
  if (data.size() == 0) throw ContractError("train-gan: empty dataset");
  if (data.channels != config.channels || data.height != config.image_size || data.width != config.image_size)
    throw ShapeError("train-gan: dataset images do not match the configured image shape");

  std::optional<VisionTransformer> teacher;
  if (guidance) {
    if (!guidance->teacher) throw ConfigError("train-gan: guidance without a teacher");
    if (guidance->caps.size() != config.num_classes)
      throw ConfigError("train-gan: teacher guidance needs one class attention probe per class (" +
                        std::to_string(config.num_classes) + "), got " + std::to_string(guidance->caps.size()));
    for (std::size_t k = 0; k < guidance->caps.size(); ++k)
      if (guidance->caps[k].values.size() != guidance->teacher->config().num_patches())
        throw ConfigError("train-gan: CAP " + std::to_string(k) + " does not match the teacher patch grid");
    teacher.emplace(guidance->teacher->config(), guidance->teacher->weights().deep_copy());
    teacher->weights().freeze();
  }

  Rng root(train.seed);
  Rng g_init = root.child(0), d_init = root.child(1);
  Generator gen(config, g_init);
  Discriminator disc(config, d_init);
  Adam opt_g(gen.weights().trainable(), train.optimizer);
  Adam opt_d(disc.weights().trainable(), train.optimizer);
  std::optional<Generator> ema;
  if (train.ema_decay > 0.0) {
    ema.emplace(config, gen.weights().deep_copy());
    ema->weights().freeze();
  }

  std::optional<FeatureStats> real_stats;
  if (extractor) real_stats = image_stats(*extractor, data.all());

  std::vector<GanEpochRecord> history;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    Rng ep = root.child(2).child(epoch);
    Rng order = ep.child(0);
    const auto batches = shuffled_batches(data.size(), train.batch_size, order);
    double d_sum = 0.0, adv_sum = 0.0, attn_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& idx = batches[bi];
      const std::size_t b = idx.size();
      Rng step = ep.child(1).child(bi);
      Rng zr = step.child(0), lr = step.child(1), dr = step.child(2);
      std::vector<int> real_labels, fake_labels(b);
      for (std::size_t i : idx) real_labels.push_back(data.labels[i]);
      for (int& l : fake_labels) l = static_cast<int>(lr.below(config.num_classes));
      const ForwardOptions train_mode{true, &dr};

      const Tensor fake = gen.forward(sample_latent(b, config.latent_dim, zr), fake_labels, train_mode);
      const Tensor ones = Tensor::full({b}, 1.0), zeros = Tensor::zeros({b});

      opt_d.zero_grad();
      const Tensor d_loss =
          o::add(o::bce_with_logits(disc.forward(data.batch(idx), real_labels, train_mode), ones),
                 o::bce_with_logits(disc.forward(fake.detach(), fake_labels, train_mode), zeros));
      d_loss.backward();
      opt_d.step();

      opt_g.zero_grad();
      const Tensor adv = o::bce_with_logits(disc.forward(fake, fake_labels, train_mode), ones);
      Tensor g_loss = adv;
      if (teacher) {
        const ViTOutput out = teacher->forward(fake);
        const Tensor attn = attention_consistency_loss(probe_tensor(out.attention, guidance->selection),
                                                       cap_targets(guidance->caps, fake_labels));
        attn_sum += attn.item();
        g_loss = generator_loss(adv, attn, config.lambda_attn);
      }
      g_loss.backward();
      opt_g.step();
      if (ema) ema_update(ema->weights(), gen.weights(), train.ema_decay);

      d_sum += d_loss.item();
      adv_sum += adv.item();
      if (!std::isfinite(d_loss.item()) || !std::isfinite(g_loss.item()))
        throw DomainError("train-gan: non-finite loss at epoch " + std::to_string(epoch + 1));
    }
    const double nb = static_cast<double>(batches.size());
    GanEpochRecord rec{epoch + 1, d_sum / nb, adv_sum / nb, teacher ? attn_sum / nb : nan, nan};
    const bool last = epoch + 1 == train.epochs;
    if (real_stats && (last || (train.fid_every && (epoch + 1) % train.fid_every == 0)))
      rec.fid = fid(*real_stats, image_stats(*extractor, generate(ema ? *ema : gen, train.fid_samples, root.child(3))));
    history.push_back(rec);
  }
  return {ema ? std::move(*ema) : std::move(gen), std::move(disc), std::move(history)};
}

std::string gan_history_csv(const std::vector<GanEpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,d_loss,g_adv,g_attn,fid\n";
  for (const auto& r : history)
    out << r.epoch << ',' << csv_double(r.d_loss) << ',' << csv_double(r.g_adv) << ','
        << csv_double(r.g_attn) << ',' << csv_double(r.fid) << '\n';
  return out.str();
}

SynthDataset synthesize(const Generator& generator, std::size_t count, Rng rng, std::span<const double> label_weights,
                        const std::string& source) {
  if (count == 0) throw ContractError("synthesize: count must be at least 1");
  const GanConfig& c = generator.config();
  if (!label_weights.empty()) {
    if (label_weights.size() != c.num_classes)
      throw ConfigError("synthesize: label histogram has " + std::to_string(label_weights.size()) +
                        " entries for " + std::to_string(c.num_classes) + " classes");
    double total = 0.0;
    for (double w : label_weights) {
      if (!(w >= 0.0)) throw ConfigError("synthesize: label weights must be non-negative");
      total += w;
    }
    if (!(total > 0.0)) throw ConfigError("synthesize: label weights sum to zero");
  }
  const std::uint64_t key = rng.key();
  Rng label_rng = rng.child(0), z_rng = rng.child(1);
  std::vector<int> labels(count);
  for (int& l : labels) {
    if (label_weights.empty()) {
      l = static_cast<int>(label_rng.below(c.num_classes));
      continue;
    }
    const double total = std::accumulate(label_weights.begin(), label_weights.end(), 0.0);
    double u = label_rng.uniform() * total;
    l = static_cast<int>(c.num_classes - 1);
    for (std::size_t k = 0; k < c.num_classes; ++k) {
      if (u < label_weights[k]) {
        l = static_cast<int>(k);
        break;
      }
      u -= label_weights[k];
    }
  }
  SynthDataset out;
  out.data.channels = c.channels;
  out.data.height = c.image_size;
  out.data.width = c.image_size;
  NoGradGuard guard;
  for (std::size_t b = 0; b < count; b += 64) {
    const std::size_t n = std::min<std::size_t>(64, count - b);
    const std::span<const int> batch_labels(labels.data() + b, n);
    const Tensor images = generator.forward(sample_latent(n, c.latent_dim, z_rng), batch_labels);
    for (std::size_t i = 0; i < n; ++i)
      out.data.append(images.data().subspan(i * out.data.image_numel(), out.data.image_numel()), batch_labels[i]);
  }
  std::ostringstream prov;
  prov << "generator=" << (source.empty() ? "in-memory" : source) << ";rng_key=" << key << ";count=" << count
       << ";labels=" << (label_weights.empty() ? "uniform" : "histogram");
  out.provenance = prov.str();
  return out;
}

}  // namespace dfkd
