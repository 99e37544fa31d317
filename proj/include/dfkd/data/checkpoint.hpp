#pragma once

#include <cstdint>
#include <string>

#include "dfkd/core/error.hpp"
#include "dfkd/core/keyvalue.hpp"
#include "dfkd/core/weights.hpp"

namespace dfkd {

// Layout: "DFKD" | u32 LE version | u64 LE header length | header text |
// payload of LE doubles in manifest order | u64 LE FNV-1a of the payload.
// The header holds `kind=`, `config.<key>=` lines and one
// `tensor=<name>|<trainable 0/1>|<d0,d1,...>|<byte offset>` line per tensor.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public IoError {
 public:
  enum class Code { bad_magic, bad_version, bad_checksum, malformed };
  CheckpointError(Code code, const std::string& what) : IoError(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct Checkpoint {
  std::string kind;
  KeyValues config;
  ModelWeights weights;
  std::uint32_t version = kCheckpointVersion;
};

std::uint64_t fnv1a64(const void* data, std::size_t size);

std::string encode_checkpoint(const std::string& kind, const KeyValues& config, const ModelWeights& weights);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const std::string& kind, const KeyValues& config,
                     const ModelWeights& weights);
Checkpoint load_checkpoint(const std::string& path);
// Throws ConfigError when the stored kind differs from the expected one.
Checkpoint load_checkpoint(const std::string& path, const std::string& expected_kind);

}  // namespace dfkd
