#include "dfkd/models/vit_io.hpp"

#include "dfkd/data/checkpoint.hpp"

namespace dfkd {

void save_vit(const std::string& path, const VisionTransformer& model) {
  save_checkpoint(path, kVitKind, model.config().to_kv(), model.weights());
}

VisionTransformer load_vit(const std::string& path) {
  Checkpoint ck = load_checkpoint(path, kVitKind);
  return VisionTransformer(ViTConfig::from_kv(ck.config), std::move(ck.weights));
}

}  // namespace dfkd
