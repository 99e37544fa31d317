#include "dfkd/data/coco.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "dfkd/core/error.hpp"

namespace dfkd {

namespace {

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

const ordered_json& field(const ordered_json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ParseError("coco: " + path + " is not an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError("coco: " + path + " is missing field '" + key + "'");
  return *it;
}

std::int64_t int_field(const ordered_json& obj, const char* key, const std::string& path) {
  const auto& v = field(obj, key, path);
  if (!v.is_number_integer()) throw ParseError("coco: " + path + "." + key + " must be an integer");
  return v.get<std::int64_t>();
}

double number_field(const ordered_json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError("coco: " + path + " must be a number");
  return v.get<double>();
}

ordered_json leftovers(const ordered_json& obj, std::initializer_list<const char*> known) {
  ordered_json extra = ordered_json::object();
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool consumed = false;
    for (const char* k : known) consumed = consumed || it.key() == k;
    if (!consumed) extra[it.key()] = it.value();
  }
  return extra;
}

const ordered_json& array_field(const ordered_json& root, const char* key) {
  const auto& v = field(root, key, "root");
  if (!v.is_array()) throw ParseError(std::string("coco: '") + key + "' must be an array");
  return v;
}

}  // namespace

std::vector<const CocoAnnotation*> CocoDataset::annotations_for(std::int64_t image_id) const {
  std::vector<const CocoAnnotation*> out;
  for (const auto& a : annotations)
    if (a.image_id == image_id) out.push_back(&a);
  return out;
}

CocoDataset parse_coco(const std::string& text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("coco: malformed JSON at " + line_col(text, e.byte ? e.byte - 1 : 0) + ": " + e.what());
  }
  if (!root.is_object()) throw ParseError("coco: top level must be an object");
  CocoDataset ds;
  const auto& images = array_field(root, "images");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string p = "images[" + std::to_string(i) + "]";
    const auto& o = images[i];
    CocoImage im;
    im.id = int_field(o, "id", p);
    const auto& fn = field(o, "file_name", p);
    if (!fn.is_string()) throw ParseError("coco: " + p + ".file_name must be a string");
    im.file_name = fn.get<std::string>();
    im.width = int_field(o, "width", p);
    im.height = int_field(o, "height", p);
    im.extra = leftovers(o, {"id", "file_name", "width", "height"});
    ds.images.push_back(std::move(im));
  }
  const auto& anns = array_field(root, "annotations");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string p = "annotations[" + std::to_string(i) + "]";
    const auto& o = anns[i];
    CocoAnnotation a;
    a.id = int_field(o, "id", p);
    a.image_id = int_field(o, "image_id", p);
    a.category_id = int_field(o, "category_id", p);
    const auto& bb = field(o, "bbox", p);
    if (!bb.is_array() || bb.size() != 4) throw ParseError("coco: " + p + ".bbox must be an array of 4 numbers");
    for (std::size_t k = 0; k < 4; ++k) a.bbox[k] = number_field(bb[k], p + ".bbox[" + std::to_string(k) + "]");
    a.area = o.contains("area") ? number_field(o["area"], p + ".area") : a.bbox[2] * a.bbox[3];
    a.iscrowd = o.contains("iscrowd") ? int_field(o, "iscrowd", p) : 0;
    a.extra = leftovers(o, {"id", "image_id", "category_id", "bbox", "area", "iscrowd"});
    ds.annotations.push_back(std::move(a));
  }
  const auto& cats = array_field(root, "categories");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string p = "categories[" + std::to_string(i) + "]";
    const auto& o = cats[i];
    CocoCategory c;
    c.id = int_field(o, "id", p);
    const auto& nm = field(o, "name", p);
    if (!nm.is_string()) throw ParseError("coco: " + p + ".name must be a string");
    c.name = nm.get<std::string>();
    c.extra = leftovers(o, {"id", "name"});
    ds.categories.push_back(std::move(c));
  }
  ds.extra = leftovers(root, {"images", "annotations", "categories"});
  return ds;
}

CocoDataset read_coco(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_coco(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string dump_coco(const CocoDataset& ds) {
  ordered_json root = ordered_json::object();
  for (auto it = ds.extra.begin(); it != ds.extra.end(); ++it) root[it.key()] = it.value();
  ordered_json images = ordered_json::array();
  for (const auto& im : ds.images) {
    ordered_json o = ordered_json::object();
    o["id"] = im.id;
    o["file_name"] = im.file_name;
    o["width"] = im.width;
    o["height"] = im.height;
    for (auto it = im.extra.begin(); it != im.extra.end(); ++it) o[it.key()] = it.value();
    images.push_back(std::move(o));
  }
  ordered_json anns = ordered_json::array();
  for (const auto& a : ds.annotations) {
    ordered_json o = ordered_json::object();
    o["id"] = a.id;
    o["image_id"] = a.image_id;
    o["category_id"] = a.category_id;
    o["bbox"] = {a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3]};
    o["area"] = a.area;
    o["iscrowd"] = a.iscrowd;
    for (auto it = a.extra.begin(); it != a.extra.end(); ++it) o[it.key()] = it.value();
    anns.push_back(std::move(o));
  }
  ordered_json cats = ordered_json::array();
  for (const auto& c : ds.categories) {
    ordered_json o = ordered_json::object();
    o["id"] = c.id;
    o["name"] = c.name;
    for (auto it = c.extra.begin(); it != c.extra.end(); ++it) o[it.key()] = it.value();
    cats.push_back(std::move(o));
  }
  root["images"] = std::move(images);
  root["annotations"] = std::move(anns);
  root["categories"] = std::move(cats);
  return root.dump(1) + "\n";
}

void write_coco(const std::string& path, const CocoDataset& ds) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << dump_coco(ds);
  if (!f) throw IoError("write failed for '" + path + "'");
}

CocoDataset to_coco(const std::vector<DetectionSample>& samples, const std::vector<std::string>& class_names,
                    const std::string& file_prefix) {
  CocoDataset ds;
  std::int64_t ann_id = 1;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    std::ostringstream name;
    name << file_prefix << std::setw(5) << std::setfill('0') << i << ".ppm";
    const auto id = static_cast<std::int64_t>(i + 1);
    ds.images.push_back({id, name.str(), static_cast<std::int64_t>(s.image.width), static_cast<std::int64_t>(s.image.height),
                         ordered_json::object()});
    for (std::size_t k = 0; k < s.labels.size(); ++k) {
      const auto& b = s.boxes[k];
      ds.annotations.push_back({ann_id++, id, s.labels[k] + 1, b, b[2] * b[3], 0, ordered_json::object()});
    }
  }
  for (std::size_t c = 0; c < class_names.size(); ++c)
    ds.categories.push_back({static_cast<std::int64_t>(c + 1), class_names[c], ordered_json::object()});
  return ds;
}

std::vector<DetectionSample> from_coco(const CocoDataset& ds, const std::string& image_dir) {
  std::map<std::int64_t, int> class_of;
  for (std::size_t c = 0; c < ds.categories.size(); ++c) class_of[ds.categories[c].id] = static_cast<int>(c);
  std::vector<DetectionSample> out;
  for (const CocoImage& im : ds.images) {
    DetectionSample s;
    s.image = read_pnm((std::filesystem::path(image_dir) / im.file_name).string());
    if (static_cast<std::int64_t>(s.image.width) != im.width || static_cast<std::int64_t>(s.image.height) != im.height)
      throw ParseError("coco: image " + im.file_name + " is " + std::to_string(s.image.width) + "x" +
                       std::to_string(s.image.height) + " but the annotation says " + std::to_string(im.width) +
                       "x" + std::to_string(im.height));
    if (s.image.channels != 3) throw ParseError("coco: image " + im.file_name + " is not RGB");
    for (const CocoAnnotation* a : ds.annotations_for(im.id)) {
      const auto it = class_of.find(a->category_id);
      if (it == class_of.end())
        throw ParseError("coco: annotation " + std::to_string(a->id) + " has unknown category " +
                         std::to_string(a->category_id));
      s.labels.push_back(it->second);
      s.boxes.push_back(a->bbox);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dfkd
