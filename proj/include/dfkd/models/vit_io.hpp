#pragma once

#include <string>

#include "dfkd/models/vit.hpp"

namespace dfkd {

inline constexpr const char* kVitKind = "vit";

void save_vit(const std::string& path, const VisionTransformer& model);
VisionTransformer load_vit(const std::string& path);

}  // namespace dfkd
