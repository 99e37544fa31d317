#include "dfkd/data/config_file.hpp"

#include <fstream>
#include <sstream>

#include "dfkd/core/error.hpp"

namespace dfkd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile cf;
  std::istringstream is(text);
  std::string raw, current;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
      current = trim(line.substr(1, line.size() - 2));
      cf.section(current);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cf.section(current).set(key, trim(line.substr(eq + 1)));
  }
  return cf;
}

ConfigFile ConfigFile::read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path);
}

std::string ConfigFile::dump() const {
  std::string out;
  for (const auto& [name, kv] : sections_) {
    if (!name.empty()) out += (out.empty() ? "" : "\n") + std::string("[") + name + "]\n";
    for (const auto& [k, v] : kv.items()) out += k + " = " + v + "\n";
  }
  return out;
}

void ConfigFile::write(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << dump();
  if (!f) throw IoError("write failed for '" + path + "'");
}

bool ConfigFile::has_section(std::string_view name) const {
  for (const auto& s : sections_)
    if (s.first == name) return true;
  return false;
}

const KeyValues& ConfigFile::section(std::string_view name) const {
  static const KeyValues empty;
  for (const auto& s : sections_)
    if (s.first == name) return s.second;
  return empty;
}

KeyValues& ConfigFile::section(std::string_view name) {
  for (auto& s : sections_)
    if (s.first == name) return s.second;
  // The unnamed section always comes first so dump() can omit its header.
  if (name.empty()) return sections_.insert(sections_.begin(), {std::string(), KeyValues{}})->second;
  sections_.emplace_back(std::string(name), KeyValues{});
  return sections_.back().second;
}

}  // namespace dfkd
