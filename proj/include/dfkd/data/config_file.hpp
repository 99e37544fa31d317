#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfkd/core/keyvalue.hpp"

namespace dfkd {

// Flat `key = value` lines grouped under `[section]` headers. Lines starting
// with '#' or ';' are comments. Keys before the first header belong to the
// unnamed section "".
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& origin = "<config>");
  static ConfigFile read(const std::string& path);
  std::string dump() const;
  void write(const std::string& path) const;

  bool has_section(std::string_view name) const;
  // Empty KeyValues when absent.
  const KeyValues& section(std::string_view name) const;
  KeyValues& section(std::string_view name);  // creates on demand
  const std::vector<std::pair<std::string, KeyValues>>& sections() const { return sections_; }

 private:
  std::vector<std::pair<std::string, KeyValues>> sections_;
};

}  // namespace dfkd
