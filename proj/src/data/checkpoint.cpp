#include "dfkd/data/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dfkd {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using Code = CheckpointError::Code;

template <class T>
void put(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t at) {
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  return v;
}

void check_text(const std::string& s, const char* what) {
  if (s.find_first_of("\n|=") != std::string::npos)
    throw ContractError(std::string("checkpoint: ") + what + " '" + s + "' contains a reserved character");
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string encode_checkpoint(const std::string& kind, const KeyValues& config, const ModelWeights& weights) {
  check_text(kind, "kind");
  std::string header = "kind=" + kind + "\n";
  for (const auto& [k, v] : config.items()) {
    check_text(k, "config key");
    if (v.find('\n') != std::string::npos) throw ContractError("checkpoint: config value contains a newline");
    header += "config." + k + "=" + v + "\n";
  }
  std::size_t offset = 0;
  for (const auto& e : weights.entries()) {
    check_text(e.name, "tensor name");
    header += "tensor=" + e.name + "|" + (e.trainable ? "1" : "0") + "|" + format_sizes(e.tensor.shape()) + "|" +
              std::to_string(offset) + "\n";
    offset += e.tensor.numel() * sizeof(double);
  }
  std::string out = "DFKD";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header.size());
  out += header;
  const std::size_t payload_start = out.size();
  for (const auto& e : weights.entries()) {
    const auto d = e.tensor.data();
    out.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
  }
  put<std::uint64_t>(out, fnv1a64(out.data() + payload_start, out.size() - payload_start));
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "DFKD") != 0) throw CheckpointError(Code::bad_magic, "checkpoint: bad magic");
  if (bytes.size() < 16) throw CheckpointError(Code::bad_checksum, "checkpoint: truncated before header");
  Checkpoint ck;
  ck.version = get<std::uint32_t>(bytes, 4);
  if (ck.version != kCheckpointVersion)
    throw CheckpointError(Code::bad_version, "checkpoint: unsupported version " + std::to_string(ck.version));
  const std::uint64_t hlen = get<std::uint64_t>(bytes, 8);
  if (hlen > bytes.size() - 16) throw CheckpointError(Code::bad_checksum, "checkpoint: truncated header");
  const std::string header = bytes.substr(16, hlen);

  struct Entry {
    std::string name;
    bool trainable;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> manifest;
  std::istringstream hs(header);
  std::string line;
  bool have_kind = false;
  while (std::getline(hs, line)) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError(Code::malformed, "checkpoint: malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "kind") {
      ck.kind = value;
      have_kind = true;
    } else if (key.rfind("config.", 0) == 0) {
      ck.config.set(key.substr(7), value);
    } else if (key == "tensor") {
      std::vector<std::string> f;
      std::size_t start = 0;
      for (std::size_t bar; (bar = value.find('|', start)) != std::string::npos; start = bar + 1)
        f.push_back(value.substr(start, bar - start));
      f.push_back(value.substr(start));
      if (f.size() != 4) throw CheckpointError(Code::malformed, "checkpoint: malformed tensor line '" + line + "'");
      try {
        manifest.push_back({f[0], f[1] == "1", parse_sizes(f[2], f[0]), parse_sizes(f[3], f[0]).at(0)});
      } catch (const Error&) {
        throw CheckpointError(Code::malformed, "checkpoint: malformed tensor line '" + line + "'");
      }
    } else {
      throw CheckpointError(Code::malformed, "checkpoint: unknown header key '" + key + "'");
    }
  }
  if (!have_kind) throw CheckpointError(Code::malformed, "checkpoint: header has no kind");

  std::size_t payload_size = 0;
  for (const auto& e : manifest) {
    if (e.offset != payload_size) throw CheckpointError(Code::malformed, "checkpoint: tensor offsets are not contiguous");
    payload_size += shape_numel(e.shape) * sizeof(double);
  }
  const std::size_t payload_start = 16 + hlen;
  if (bytes.size() != payload_start + payload_size + 8)
    throw CheckpointError(Code::bad_checksum, "checkpoint: file size does not match manifest (truncated or padded)");
  const std::uint64_t stored = get<std::uint64_t>(bytes, payload_start + payload_size);
  if (stored != fnv1a64(bytes.data() + payload_start, payload_size))
    throw CheckpointError(Code::bad_checksum, "checkpoint: payload checksum mismatch");

  for (const auto& e : manifest) {
    std::vector<double> v(shape_numel(e.shape));
    std::memcpy(v.data(), bytes.data() + payload_start + e.offset, v.size() * sizeof(double));
    ck.weights.add(e.name, Tensor::from(e.shape, std::move(v)), e.trainable);
  }
  return ck;
}

void save_checkpoint(const std::string& path, const std::string& kind, const KeyValues& config,
                     const ModelWeights& weights) {
  const std::string bytes = encode_checkpoint(kind, config, weights);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.code(), path + ": " + e.what());
  }
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_kind) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != expected_kind)
    throw ConfigError("checkpoint '" + path + "' holds a '" + ck.kind + "' model, expected '" + expected_kind + "'");
  return ck;
}

}  // namespace dfkd
