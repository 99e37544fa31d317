#pragma once

#include <string>

#include "dfkd/data/images.hpp"

namespace dfkd {

// Labeled float images stored bit-exactly in the checkpoint container
// (kind "image-set": tensors "pixels" [N,C,H,W] and "labels" [N]).
inline constexpr const char* kImageSetKind = "image-set";

struct StoredImageSet {
  LabeledImages images;
  std::string provenance;
};

void save_image_set(const std::string& path, const LabeledImages& images, const std::string& provenance = "");
StoredImageSet load_image_set(const std::string& path);

}  // namespace dfkd
