#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dfkd/data/datasets.hpp"

namespace dfkd {

using ordered_json = nlohmann::ordered_json;

// Fields not consumed by the toolkit are kept in `extra` and written back
// unchanged.
struct CocoImage {
  std::int64_t id = 0;
  std::string file_name;
  std::int64_t width = 0;
  std::int64_t height = 0;
  ordered_json extra = ordered_json::object();
  bool operator==(const CocoImage&) const = default;
};

struct CocoAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  BoxXYWH bbox{};
  double area = 0.0;
  std::int64_t iscrowd = 0;
  ordered_json extra = ordered_json::object();
  bool operator==(const CocoAnnotation&) const = default;
};

struct CocoCategory {
  std::int64_t id = 0;
  std::string name;
  ordered_json extra = ordered_json::object();
  bool operator==(const CocoCategory&) const = default;
};

struct CocoDataset {
  std::vector<CocoImage> images;
  std::vector<CocoAnnotation> annotations;
  std::vector<CocoCategory> categories;
  ordered_json extra = ordered_json::object();  // top-level keys such as "info"
  bool operator==(const CocoDataset&) const = default;

  std::vector<const CocoAnnotation*> annotations_for(std::int64_t image_id) const;
};

// Throws ParseError with line/column or field path context.
CocoDataset parse_coco(const std::string& text);
CocoDataset read_coco(const std::string& path);
std::string dump_coco(const CocoDataset& ds);
void write_coco(const std::string& path, const CocoDataset& ds);

// Category ids are class index + 1; image ids are sample index + 1.
CocoDataset to_coco(const std::vector<DetectionSample>& samples, const std::vector<std::string>& class_names,
                    const std::string& file_prefix);
// Inverse of to_coco: images are read from image_dir/file_name. Class index
// is the category's position in the categories table.
std::vector<DetectionSample> from_coco(const CocoDataset& ds, const std::string& image_dir);

}  // namespace dfkd
