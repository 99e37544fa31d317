#include <cmath>

#include "dfkd/core/error.hpp"
#include "dfkd/core/ops.hpp"
#include "dfkd/data/checkpoint.hpp"
#include "dfkd/detr/detr.hpp"
#include "dfkd/models/vit.hpp"

namespace dfkd {

namespace o = ops;

void DetrConfig::validate() const {
  if (in_channels != 3) throw ConfigError("detr: only 3-channel input is supported");
  for (std::size_t c : backbone)
    if (c == 0) throw ConfigError("detr: backbone widths must be positive");
  if (num_heads == 0 || embed_dim == 0 || embed_dim % num_heads != 0)
    throw ConfigError("detr: embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  if (embed_dim % 4 != 0) throw ConfigError("detr: embed_dim must be a multiple of 4 for the sine positions");
  if (decoder_layers == 0) throw ConfigError("detr: need at least one decoder layer");
  if (ffn_dim == 0 || num_queries == 0 || num_classes == 0)
    throw ConfigError("detr: ffn_dim, num_queries and num_classes must be positive");
  preprocess.validate();
}

KeyValues DetrConfig::to_kv() const {
  KeyValues kv;
  kv.set("in_channels", in_channels);
  kv.set("backbone", format_sizes(std::vector<std::size_t>(backbone.begin(), backbone.end())));
  kv.set("embed_dim", embed_dim);
  kv.set("encoder_layers", encoder_layers);
  kv.set("decoder_layers", decoder_layers);
  kv.set("num_heads", num_heads);
  kv.set("ffn_dim", ffn_dim);
  kv.set("num_queries", num_queries);
  kv.set("num_classes", num_classes);
  kv.set("preprocess.shortest", preprocess.shortest);
  kv.set("preprocess.longest", preprocess.longest);
  kv.set("preprocess.rescale", preprocess.rescale);
  for (std::size_t c = 0; c < 3; ++c) {
    kv.set("preprocess.mean" + std::to_string(c), preprocess.mean[c]);
    kv.set("preprocess.std" + std::to_string(c), preprocess.std[c]);
  }
  return kv;
}

DetrConfig DetrConfig::from_kv(const KeyValues& kv) {
  DetrConfig c;
  c.in_channels = kv.get_size("in_channels", c.in_channels);
  if (kv.has("backbone")) {
    const auto b = parse_sizes(kv.get("backbone"), "backbone");
    if (b.size() != 4) throw ConfigError("backbone: expected four comma-separated widths");
    c.backbone = {b[0], b[1], b[2], b[3]};
  }
  c.embed_dim = kv.get_size("embed_dim", c.embed_dim);
  c.encoder_layers = kv.get_size("encoder_layers", c.encoder_layers);
  c.decoder_layers = kv.get_size("decoder_layers", c.decoder_layers);
  c.num_heads = kv.get_size("num_heads", c.num_heads);
  c.ffn_dim = kv.get_size("ffn_dim", c.ffn_dim);
  c.num_queries = kv.get_size("num_queries", c.num_queries);
  c.num_classes = kv.get_size("num_classes", c.num_classes);
  c.preprocess.shortest = kv.get_size("preprocess.shortest", c.preprocess.shortest);
  c.preprocess.longest = kv.get_size("preprocess.longest", c.preprocess.longest);
  c.preprocess.rescale = kv.get_double("preprocess.rescale", c.preprocess.rescale);
  for (std::size_t i = 0; i < 3; ++i) {
    c.preprocess.mean[i] = kv.get_double("preprocess.mean" + std::to_string(i), c.preprocess.mean[i]);
    c.preprocess.std[i] = kv.get_double("preprocess.std" + std::to_string(i), c.preprocess.std[i]);
  }
  return c;
}

DetrConfig DetrConfig::desk_teacher() { return DetrConfig{}; }

DetrConfig DetrConfig::desk_student() {
  DetrConfig c;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  return c;
}

DetrConfig DetrConfig::full_scale_teacher_layout() {
  DetrConfig c;
  c.backbone = {64, 128, 256, 512};
  c.embed_dim = 256;
  c.encoder_layers = 6;
  c.decoder_layers = 6;
  c.num_heads = 8;
  c.ffn_dim = 2048;
  c.num_queries = 100;
  c.preprocess = PreprocessConfig::full_scale();
  return c;
}

DetrConfig DetrConfig::full_scale_student_layout() {
  DetrConfig c = full_scale_teacher_layout();
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  return c;
}

namespace {

void push_norm(WeightLayout& l, const std::string& p, std::size_t d) {
  l.push_back({p + ".weight", {d}});
  l.push_back({p + ".bias", {d}});
}

void push_linear(WeightLayout& l, const std::string& p, std::size_t out, std::size_t in) {
  l.push_back({p + ".weight", {out, in}});
  l.push_back({p + ".bias", {out}});
}

Tensor layer_norm(const ModelWeights& w, const std::string& p, const Tensor& x) {
  return o::layernorm(x, w.at(p + ".weight"), w.at(p + ".bias"));
}

Tensor dense(const ModelWeights& w, const std::string& p, const Tensor& x) {
  return o::linear(x, w.at(p + ".weight"), w.at(p + ".bias"));
}

Tensor ffn(const ModelWeights& w, const std::string& p, const Tensor& x) {
  return dense(w, p + ".fc2", o::relu(dense(w, p + ".fc1", x)));
}

Tensor self_attention(const ModelWeights& w, const std::string& p, const Tensor& x, std::size_t heads) {
  const AttentionWeights aw{w.at(p + ".qkv.weight"), w.at(p + ".qkv.bias"), w.at(p + ".proj.weight"),
                            w.at(p + ".proj.bias")};
  return mhsa_forward(x, aw, heads).output;
}

// Queries from x [B,Tq,D], keys and values from memory [B,Tk,D].
MhsaResult cross_attention(const ModelWeights& w, const std::string& p, const Tensor& x, const Tensor& memory,
                           std::size_t heads) {
  const std::size_t b = x.dim(0), tq = x.dim(1), d = x.dim(2), tk = memory.dim(1), dh = d / heads;
  const Tensor q = o::reshape(o::permute(o::reshape(dense(w, p + ".q", x), {b, tq, heads, dh}), {0, 2, 1, 3}),
                              {b * heads, tq, dh});
  const Tensor kv = o::permute(o::reshape(dense(w, p + ".kv", memory), {b, tk, 2, heads, dh}), {2, 0, 3, 1, 4});
  const Tensor k = o::reshape(o::slice(kv, 0, 0, 1), {b * heads, tk, dh});
  const Tensor v = o::reshape(o::slice(kv, 0, 1, 2), {b * heads, tk, dh});
  const Tensor attn = o::softmax(o::scale(o::bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh))), 1.0);
  Tensor out = o::bmm(attn, v);
  out = o::reshape(o::permute(o::reshape(out, {b, heads, tq, dh}), {0, 2, 1, 3}), {b, tq, d});
  return {dense(w, p + ".proj", out), o::reshape(attn, {b, heads, tq, tk})};
}

}  // namespace

WeightLayout DetrLite::layout(const DetrConfig& c) {
  WeightLayout l;
  std::size_t in = c.in_channels;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string p = "backbone." + std::to_string(i);
    l.push_back({p + ".weight", {c.backbone[i], in, 3, 3}});
    l.push_back({p + ".bias", {c.backbone[i]}});
    in = c.backbone[i];
  }
  const std::size_t d = c.embed_dim, f = c.ffn_dim;
  push_linear(l, "input_proj", d, in);
  for (std::size_t i = 0; i < c.encoder_layers; ++i) {
    const std::string p = "encoder." + std::to_string(i);
    push_norm(l, p + ".norm1", d);
    push_linear(l, p + ".self_attn.qkv", 3 * d, d);
    push_linear(l, p + ".self_attn.proj", d, d);
    push_norm(l, p + ".norm2", d);
    push_linear(l, p + ".ffn.fc1", f, d);
    push_linear(l, p + ".ffn.fc2", d, f);
  }
  push_norm(l, "encoder_norm", d);
  l.push_back({"query_embed", {c.num_queries, d}});
  for (std::size_t i = 0; i < c.decoder_layers; ++i) {
    const std::string p = "decoder." + std::to_string(i);
    push_norm(l, p + ".norm1", d);
    push_linear(l, p + ".self_attn.qkv", 3 * d, d);
    push_linear(l, p + ".self_attn.proj", d, d);
    push_norm(l, p + ".norm2", d);
    push_linear(l, p + ".cross_attn.q", d, d);
    push_linear(l, p + ".cross_attn.kv", 2 * d, d);
    push_linear(l, p + ".cross_attn.proj", d, d);
    push_norm(l, p + ".norm3", d);
    push_linear(l, p + ".ffn.fc1", f, d);
    push_linear(l, p + ".ffn.fc2", d, f);
  }
  push_norm(l, "decoder_norm", d);
  push_linear(l, "class_head", c.num_classes, d);
  push_linear(l, "box_head.fc1", d, d);
  push_linear(l, "box_head.fc2", d, d);
  push_linear(l, "box_head.fc3", 4, d);
  return l;
}

DetrLite::DetrLite(const DetrConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  for (const auto& [name, shape] : layout(config_)) {
    const bool norm = name.find("norm") != std::string::npos;
    if (name.ends_with(".bias")) {
      weights_.add(name, Tensor::zeros(shape));
    } else if (norm) {
      weights_.add(name, Tensor::full(shape, 1.0));
    } else if (name == "query_embed") {
      weights_.add(name, normal_tensor(shape, rng, 1.0));
    } else if (shape.size() == 4) {
      const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
      weights_.add(name, normal_tensor(shape, rng, std::sqrt(2.0 / fan_in)));
    } else {
      const double fan = static_cast<double>(shape[0] + shape[1]);
      weights_.add(name, normal_tensor(shape, rng, std::sqrt(2.0 / fan)));
    }
  }
}

DetrLite::DetrLite(const DetrConfig& config, ModelWeights weights) : config_(config), weights_(std::move(weights)) {
  config_.validate();
  check_layout("detr", layout(config_), weights_);
}

Tensor sine_position_encoding(std::size_t h, std::size_t w, std::size_t dim) {
  if (dim % 4 != 0) throw ConfigError("sine positions: dim must be a multiple of 4");
  const std::size_t half = dim / 2, pairs = half / 2;
  const double two_pi = 2.0 * 3.14159265358979323846;
  std::vector<double> out(h * w * dim);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double py = (static_cast<double>(y) + 0.5) / static_cast<double>(h) * two_pi;
      const double px = (static_cast<double>(x) + 0.5) / static_cast<double>(w) * two_pi;
      double* row = out.data() + (y * w + x) * dim;
      for (std::size_t i = 0; i < pairs; ++i) {
        const double freq = std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(half));
        row[2 * i] = std::sin(py / freq);
        row[2 * i + 1] = std::cos(py / freq);
        row[half + 2 * i] = std::sin(px / freq);
        row[half + 2 * i + 1] = std::cos(px / freq);
      }
    }
  return Tensor::from({h * w, dim}, std::move(out));
}

DetrOutput DetrLite::forward(const Tensor& images) const {
  const DetrConfig& c = config_;
  if (images.rank() != 4 || images.dim(1) != c.in_channels || images.dim(2) % 16 != 0 || images.dim(3) % 16 != 0 ||
      images.dim(2) == 0 || images.dim(3) == 0)
    throw ShapeError("detr: expected [B,3,H,W] with H and W positive multiples of 16, got " +
                     shape_str(images.shape()));
  const auto& w = weights_;
  const std::size_t b = images.dim(0), d = c.embed_dim;
  Tensor x = images;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string p = "backbone." + std::to_string(i);
    x = o::relu(o::conv2d(x, w.at(p + ".weight"), w.at(p + ".bias"), 2, 1));
  }
  const std::size_t gh = x.dim(2), gw = x.dim(3), tokens = gh * gw;
  x = o::permute(o::reshape(x, {b, c.backbone[3], tokens}), {0, 2, 1});
  Tensor memory = o::add_bias(dense(w, "input_proj", x), sine_position_encoding(gh, gw, d));
  for (std::size_t i = 0; i < c.encoder_layers; ++i) {
    const std::string p = "encoder." + std::to_string(i);
    memory = o::add(memory, self_attention(w, p + ".self_attn", layer_norm(w, p + ".norm1", memory), c.num_heads));
    memory = o::add(memory, ffn(w, p + ".ffn", layer_norm(w, p + ".norm2", memory)));
  }
  memory = layer_norm(w, "encoder_norm", memory);

  std::vector<Tensor> copies(b, o::reshape(w.at("query_embed"), {1, c.num_queries, d}));
  Tensor tgt = b == 1 ? copies.front() : o::concat(copies, 0);
  DetrOutput out;
  for (std::size_t i = 0; i < c.decoder_layers; ++i) {
    const std::string p = "decoder." + std::to_string(i);
    tgt = o::add(tgt, self_attention(w, p + ".self_attn", layer_norm(w, p + ".norm1", tgt), c.num_heads));
    MhsaResult ca = cross_attention(w, p + ".cross_attn", layer_norm(w, p + ".norm2", tgt), memory, c.num_heads);
    tgt = o::add(tgt, ca.output);
    tgt = o::add(tgt, ffn(w, p + ".ffn", layer_norm(w, p + ".norm3", tgt)));
    out.cross_attention.push_back(ca.attention);
  }
  tgt = layer_norm(w, "decoder_norm", tgt);
  out.class_logits = dense(w, "class_head", tgt);
  Tensor box = o::relu(dense(w, "box_head.fc1", tgt));
  box = o::relu(dense(w, "box_head.fc2", box));
  out.pred_boxes = o::sigmoid(dense(w, "box_head.fc3", box));
  return out;
}

std::size_t detr_param_count(const DetrConfig& config) {
  std::size_t n = 0;
  for (const auto& [name, shape] : DetrLite::layout(config)) n += shape_numel(shape);
  return n;
}

void save_detr(const std::string& path, const DetrLite& model) {
  save_checkpoint(path, kDetrKind, model.config().to_kv(), model.weights());
}

DetrLite load_detr(const std::string& path) {
  Checkpoint ck = load_checkpoint(path, kDetrKind);
  return DetrLite(DetrConfig::from_kv(ck.config), std::move(ck.weights));
}

}  // namespace dfkd
