#include "dfkd/cli/run_support.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "dfkd/core/error.hpp"

#ifndef DFKD_VERSION
#define DFKD_VERSION "unknown"
#endif

namespace dfkd::cli {

std::string version_string() { return DFKD_VERSION; }

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

OutDirLock::OutDirLock(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  path_ = dir / kFileName;
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) {
    const std::string p = path_.string();
    path_.clear();
    throw IoError("output directory is in use: " + p +
                  " exists (another dfkd process, or a stale lock from a crashed run that can be deleted)");
  }
  std::fprintf(f, "%s\n", utc_timestamp().c_str());
  std::fclose(f);
}

OutDirLock::~OutDirLock() {
  if (path_.empty()) return;
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

ConfigFile RunManifest::to_file() const {
  ConfigFile f;
  KeyValues& run = f.section("run");
  run.set("subcommand", subcommand);
  run.set("seed", std::to_string(seed));
  run.set("version", version);
  run.set("started", started);
  run.set("finished", finished);
  f.section("inputs") = inputs;
  f.section("outputs") = outputs;
  for (const auto& [name, kv] : config) f.section(name) = kv;
  return f;
}

RunManifest RunManifest::from_file(const ConfigFile& file) {
  if (!file.has_section("run")) throw ConfigError("manifest: missing [run] section");
  RunManifest m;
  const KeyValues& run = file.section("run");
  m.subcommand = run.get("subcommand");
  m.seed = run.get_size("seed");
  m.version = run.get("version", std::string());
  m.started = run.get("started", std::string());
  m.finished = run.get("finished", std::string());
  m.inputs = file.section("inputs");
  m.outputs = file.section("outputs");
  for (const auto& [name, kv] : file.sections())
    if (name != "run" && name != "inputs" && name != "outputs" && !name.empty()) m.config.emplace_back(name, kv);
  return m;
}

void MetricsTable::add(const std::string& name, double value) { rows_.emplace_back(name, csv_double(value)); }

void MetricsTable::add_text(const std::string& name, const std::string& value) {
  if (value.find_first_of(",\n\"") != std::string::npos)
    throw ContractError("metrics: value for " + name + " contains a separator");
  rows_.emplace_back(name, value);
}

std::string MetricsTable::csv() const {
  std::string out = "metric,value\n";
  for (const auto& [k, v] : rows_) out += k + "," + v + "\n";
  return out;
}

KeyValues read_metrics_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  KeyValues kv;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "metric,value") throw ParseError(path + ": line 1: expected header 'metric,value'");
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError(path + ": line " + std::to_string(lineno) + ": expected 'metric,value'");
    kv.set(line.substr(0, comma), line.substr(comma + 1));
  }
  return kv;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dfkd::cli
