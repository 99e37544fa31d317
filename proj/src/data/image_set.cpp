#include "dfkd/data/image_set.hpp"

#include <cmath>

#include "dfkd/data/checkpoint.hpp"

namespace dfkd {

void save_image_set(const std::string& path, const LabeledImages& images, const std::string& provenance) {
  if (images.size() == 0) throw ContractError("image set: nothing to save");
  KeyValues kv;
  kv.set("count", images.size());
  kv.set("channels", images.channels);
  kv.set("height", images.height);
  kv.set("width", images.width);
  kv.set("provenance", provenance);
  ModelWeights w;
  w.add("pixels", Tensor::from({images.size(), images.channels, images.height, images.width}, images.pixels), false);
  std::vector<double> labels(images.labels.begin(), images.labels.end());
  w.add("labels", Tensor::from({images.size()}, std::move(labels)), false);
  save_checkpoint(path, kImageSetKind, kv, w);
}

StoredImageSet load_image_set(const std::string& path) {
  Checkpoint ck = load_checkpoint(path, kImageSetKind);
  StoredImageSet out;
  LabeledImages& im = out.images;
  const std::size_t n = ck.config.get_size("count");
  im.channels = ck.config.get_size("channels");
  im.height = ck.config.get_size("height");
  im.width = ck.config.get_size("width");
  out.provenance = ck.config.get("provenance", std::string());
  if (!ck.weights.contains("pixels") || !ck.weights.contains("labels"))
    throw CheckpointError(CheckpointError::Code::malformed, path + ": image set lacks pixels or labels");
  const Tensor& px = ck.weights.at("pixels");
  const Tensor& lb = ck.weights.at("labels");
  if (px.shape() != Shape{n, im.channels, im.height, im.width} || lb.shape() != Shape{n})
    throw CheckpointError(CheckpointError::Code::malformed, path + ": image set shapes disagree with its header");
  im.pixels.assign(px.data().begin(), px.data().end());
  for (double v : lb.data()) {
    if (v < 0.0 || v != std::floor(v))
      throw CheckpointError(CheckpointError::Code::malformed, path + ": label is not a class index");
    im.labels.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace dfkd
