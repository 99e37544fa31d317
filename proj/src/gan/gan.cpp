#include "dfkd/gan/gan.hpp"

#include "dfkd/core/error.hpp"
#include "dfkd/core/ops.hpp"
#include "dfkd/data/checkpoint.hpp"

namespace dfkd {

namespace o = ops;

void GanConfig::validate() const {
  if (image_size != 16)
    throw ConfigError("gan: the four stride-2 layers produce 16x16 images; image_size " + std::to_string(image_size) +
                      " is not supported");
  if (latent_dim == 0 || num_classes == 0 || g_embed_dim == 0 || d_embed_dim == 0 || channels == 0)
    throw ConfigError("gan: latent_dim, num_classes, embedding sizes and channels must be positive");
  for (std::size_t c : g_channels)
    if (c == 0) throw ConfigError("gan: generator widths must be positive");
  for (std::size_t c : d_channels)
    if (c == 0) throw ConfigError("gan: discriminator widths must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("gan: dropout must be in [0, 1)");
  if (lambda_attn < 0.0) throw ConfigError("gan: lambda_attn must be non-negative");
}

KeyValues GanConfig::to_kv() const {
  KeyValues kv;
  kv.set("latent_dim", latent_dim);
  kv.set("num_classes", num_classes);
  kv.set("g_embed_dim", g_embed_dim);
  kv.set("d_embed_dim", d_embed_dim);
  kv.set("image_size", image_size);
  kv.set("channels", channels);
  kv.set("g_channels", format_sizes(std::vector<std::size_t>(g_channels.begin(), g_channels.end())));
  kv.set("d_channels", format_sizes(std::vector<std::size_t>(d_channels.begin(), d_channels.end())));
  kv.set("leaky_slope", leaky_slope);
  kv.set("dropout", dropout);
  kv.set("lambda_attn", lambda_attn);
  return kv;
}

namespace {

std::array<std::size_t, 3> three(const KeyValues& kv, const std::string& key, std::array<std::size_t, 3> fallback) {
  if (!kv.has(key)) return fallback;
  const auto v = parse_sizes(kv.get(key), key);
  if (v.size() != 3) throw ConfigError(key + ": expected three comma-separated widths");
  return {v[0], v[1], v[2]};
}

void check_labels(std::span<const int> labels, std::size_t num_classes, std::size_t batch, const char* who) {
  if (labels.size() != batch)
    throw ShapeError(std::string(who) + ": " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
      throw DomainError(std::string(who) + ": label " + std::to_string(l) + " outside [0, " +
                        std::to_string(num_classes) + ")");
}

void add_init(ModelWeights& w, const WeightLayout& layout, Rng& rng) {
  for (const auto& [name, shape] : layout) {
    if (name.ends_with("running_mean") || name.ends_with(".bias"))
      w.add(name, Tensor::zeros(shape), !name.ends_with("running_mean"));
    else if (name.ends_with("running_var"))
      w.add(name, Tensor::full(shape, 1.0), false);
    else if (name.starts_with("bn"))
      w.add(name, Tensor::full(shape, 1.0));
    else if (name == "label_embed")
      w.add(name, normal_tensor(shape, rng, 1.0));
    else
      w.add(name, normal_tensor(shape, rng, 0.02));
  }
}

Tensor bn(const ModelWeights& w, const std::string& p, const Tensor& x, bool training) {
  o::BatchNormStats stats{w.at(p + ".running_mean"), w.at(p + ".running_var")};
  return o::batchnorm2d(x, w.at(p + ".weight"), w.at(p + ".bias"), stats, training);
}

void push_bn(WeightLayout& l, const std::string& p, std::size_t c) {
  l.push_back({p + ".weight", {c}});
  l.push_back({p + ".bias", {c}});
  l.push_back({p + ".running_mean", {c}});
  l.push_back({p + ".running_var", {c}});
}

}  // namespace

GanConfig GanConfig::from_kv(const KeyValues& kv) {
  GanConfig c;
  c.latent_dim = kv.get_size("latent_dim", c.latent_dim);
  c.num_classes = kv.get_size("num_classes", c.num_classes);
  c.g_embed_dim = kv.get_size("g_embed_dim", c.g_embed_dim);
  c.d_embed_dim = kv.get_size("d_embed_dim", c.d_embed_dim);
  c.image_size = kv.get_size("image_size", c.image_size);
  c.channels = kv.get_size("channels", c.channels);
  c.g_channels = three(kv, "g_channels", c.g_channels);
  c.d_channels = three(kv, "d_channels", c.d_channels);
  c.leaky_slope = kv.get_double("leaky_slope", c.leaky_slope);
  c.dropout = kv.get_double("dropout", c.dropout);
  c.lambda_attn = kv.get_double("lambda_attn", c.lambda_attn);
  return c;
}

WeightLayout Generator::layout(const GanConfig& c) {
  const auto& g = c.g_channels;
  WeightLayout l{{"label_embed", {c.num_classes, c.g_embed_dim}},
                 {"deconv1.weight", {c.latent_dim + c.g_embed_dim, g[0], 4, 4}}};
  push_bn(l, "bn1", g[0]);
  l.push_back({"deconv2.weight", {g[0], g[1], 4, 4}});
  push_bn(l, "bn2", g[1]);
  l.push_back({"deconv3.weight", {g[1], g[2], 4, 4}});
  push_bn(l, "bn3", g[2]);
  l.push_back({"deconv4.weight", {g[2], c.channels, 4, 4}});
  l.push_back({"deconv4.bias", {c.channels}});
  return l;
}

Generator::Generator(const GanConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  add_init(weights_, layout(config_), rng);
}

Generator::Generator(const GanConfig& config, ModelWeights weights) : config_(config), weights_(std::move(weights)) {
  config_.validate();
  check_layout("generator", layout(config_), weights_);
}

Tensor Generator::forward(const Tensor& z, std::span<const int> labels, const ForwardOptions& opts) const {
  const GanConfig& c = config_;
  if (z.rank() != 2 || z.dim(1) != c.latent_dim)
    throw ShapeError("generator: expected z [B," + std::to_string(c.latent_dim) + "], got " + shape_str(z.shape()));
  const std::size_t b = z.dim(0);
  check_labels(labels, c.num_classes, b, "generator");
  const auto& w = weights_;
  Tensor x = o::concat({z, o::embedding(w.at("label_embed"), labels)}, 1);
  x = o::reshape(x, {b, c.latent_dim + c.g_embed_dim, 1, 1});
  x = o::relu(bn(w, "bn1", o::conv_transpose2d(x, w.at("deconv1.weight"), Tensor(), 2, 1), opts.training));
  x = o::relu(bn(w, "bn2", o::conv_transpose2d(x, w.at("deconv2.weight"), Tensor(), 2, 1), opts.training));
  x = o::relu(bn(w, "bn3", o::conv_transpose2d(x, w.at("deconv3.weight"), Tensor(), 2, 1), opts.training));
  return o::tanh(o::conv_transpose2d(x, w.at("deconv4.weight"), w.at("deconv4.bias"), 2, 1));
}

WeightLayout Discriminator::layout(const GanConfig& c) {
  const auto& d = c.d_channels;
  const std::size_t plane = c.image_size * c.image_size;
  WeightLayout l{{"label_embed", {c.num_classes, c.d_embed_dim}},
                 {"label_proj.weight", {plane, c.d_embed_dim}},
                 {"label_proj.bias", {plane}},
                 {"conv1.weight", {d[0], c.channels + 1, 4, 4}},
                 {"conv1.bias", {d[0]}},
                 {"conv2.weight", {d[1], d[0], 4, 4}}};
  push_bn(l, "bn2", d[1]);
  l.push_back({"conv3.weight", {d[2], d[1], 4, 4}});
  push_bn(l, "bn3", d[2]);
  l.push_back({"conv4.weight", {1, d[2], 4, 4}});
  l.push_back({"conv4.bias", {1}});
  return l;
}

Discriminator::Discriminator(const GanConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  add_init(weights_, layout(config_), rng);
}

Discriminator::Discriminator(const GanConfig& config, ModelWeights weights)
    : config_(config), weights_(std::move(weights)) {
  config_.validate();
  check_layout("discriminator", layout(config_), weights_);
}

Tensor Discriminator::forward(const Tensor& images, std::span<const int> labels, const ForwardOptions& opts) const {
  const GanConfig& c = config_;
  const Shape expect{c.channels, c.image_size, c.image_size};
  if (images.rank() != 4 || Shape(images.shape().begin() + 1, images.shape().end()) != expect)
    throw ShapeError("discriminator: expected [B," + std::to_string(c.channels) + "," + std::to_string(c.image_size) +
                     "," + std::to_string(c.image_size) + "], got " + shape_str(images.shape()));
  const std::size_t b = images.dim(0);
  check_labels(labels, c.num_classes, b, "discriminator");
  const bool drop = opts.training && c.dropout > 0.0;
  if (drop && !opts.rng) throw ContractError("discriminator: training with dropout needs an rng");
  const auto& w = weights_;
  const auto dropout = [&](const Tensor& t) { return drop ? o::dropout(t, c.dropout, *opts.rng, true) : t; };
  Tensor plane = o::linear(o::embedding(w.at("label_embed"), labels), w.at("label_proj.weight"),
                           w.at("label_proj.bias"));
  plane = o::reshape(plane, {b, 1, c.image_size, c.image_size});
  Tensor x = o::concat({images, plane}, 1);
  x = dropout(o::leaky_relu(o::conv2d(x, w.at("conv1.weight"), w.at("conv1.bias"), 2, 1), c.leaky_slope));
  x = dropout(o::leaky_relu(bn(w, "bn2", o::conv2d(x, w.at("conv2.weight"), Tensor(), 2, 1), opts.training),
                            c.leaky_slope));
  x = dropout(o::leaky_relu(bn(w, "bn3", o::conv2d(x, w.at("conv3.weight"), Tensor(), 2, 1), opts.training),
                            c.leaky_slope));
  x = o::conv2d(x, w.at("conv4.weight"), w.at("conv4.bias"), 1, 1);
  return o::reshape(x, {b});
}

double generator_loss(double adv, double attn, double lambda) { return adv + lambda * attn; }

Tensor generator_loss(const Tensor& adv, const Tensor& attn, double lambda) {
  return o::add(adv, o::scale(attn, lambda));
}

Tensor sample_latent(std::size_t count, std::size_t latent_dim, Rng& rng) {
  std::vector<double> z(count * latent_dim);
  for (double& v : z) v = rng.normal();
  return Tensor::from({count, latent_dim}, std::move(z));
}

void save_generator(const std::string& path, const Generator& g) {
  save_checkpoint(path, kGeneratorKind, g.config().to_kv(), g.weights());
}

Generator load_generator(const std::string& path) {
  Checkpoint ck = load_checkpoint(path, kGeneratorKind);
  return Generator(GanConfig::from_kv(ck.config), std::move(ck.weights));
}

}  // namespace dfkd
