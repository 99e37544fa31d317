#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dfkd/core/keyvalue.hpp"
#include "dfkd/data/config_file.hpp"

namespace dfkd::cli {

// git-describe style string fixed at configure time.
std::string version_string();
// UTC, ISO 8601 with seconds.
std::string utc_timestamp();

// Exclusive claim on an output directory for one process. The directory is
// created if needed; an existing lock throws IoError.
class OutDirLock {
 public:
  explicit OutDirLock(const std::filesystem::path& dir);
  ~OutDirLock();
  OutDirLock(const OutDirLock&) = delete;
  OutDirLock& operator=(const OutDirLock&) = delete;
  static constexpr const char* kFileName = ".dfkd.lock";

 private:
  std::filesystem::path path_;
};

struct RunManifest {
  std::string subcommand;
  std::uint64_t seed = 0;
  std::string version;
  std::string started;
  std::string finished;
  KeyValues inputs;                                   // role -> path
  KeyValues outputs;                                  // role -> file name inside the run dir
  std::vector<std::pair<std::string, KeyValues>> config;  // resolved sections

  ConfigFile to_file() const;
  static RunManifest from_file(const ConfigFile& file);
  static constexpr const char* kFileName = "manifest.cfg";
};

// Two-column "metric,value" CSV; numbers use csv_double.
class MetricsTable {
 public:
  void add(const std::string& name, double value);
  void add_text(const std::string& name, const std::string& value);
  std::string csv() const;
  const std::vector<std::pair<std::string, std::string>>& rows() const { return rows_; }

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

KeyValues read_metrics_csv(const std::string& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace dfkd::cli
