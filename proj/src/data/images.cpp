#include "dfkd/data/images.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dfkd/core/error.hpp"

namespace dfkd {

std::span<const double> LabeledImages::image(std::size_t i) const {
  if (i >= size()) throw IndexError("image index " + std::to_string(i) + " out of range");
  return std::span<const double>(pixels).subspan(i * image_numel(), image_numel());
}

void LabeledImages::append(std::span<const double> img, int label) {
  if (img.size() != image_numel()) throw ShapeError("append: image size mismatch");
  pixels.insert(pixels.end(), img.begin(), img.end());
  labels.push_back(label);
}

Tensor LabeledImages::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("batch: no indices");
  std::vector<double> v;
  v.reserve(indices.size() * image_numel());
  for (std::size_t i : indices) {
    const auto im = image(i);
    v.insert(v.end(), im.begin(), im.end());
  }
  return Tensor::from({indices.size(), channels, height, width}, std::move(v));
}

Tensor LabeledImages::all() const {
  std::vector<std::size_t> idx(size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return batch(idx);
}

LabeledImages LabeledImages::subset(std::span<const std::size_t> indices) const {
  LabeledImages out{channels, height, width, {}, {}};
  out.pixels.reserve(indices.size() * image_numel());
  for (std::size_t i : indices) out.append(image(i), labels[i]);
  return out;
}

std::string encode_pnm(const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw ShapeError("pnm: only 1 or 3 channels supported");
  if (r.bytes.size() != r.width * r.height * r.channels) throw ShapeError("pnm: byte count mismatch");
  std::ostringstream os;
  os << (r.channels == 1 ? "P5" : "P6") << '\n' << r.width << ' ' << r.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(r.bytes.data()), static_cast<std::streamsize>(r.bytes.size()));
  return os.str();
}

Raster decode_pnm(const std::string& data) {
  std::istringstream is(data);
  std::string magic;
  is >> magic;
  Raster r;
  if (magic == "P5")
    r.channels = 1;
  else if (magic == "P6")
    r.channels = 3;
  else
    throw ParseError("pnm: unsupported magic '" + magic + "'");
  const auto next_int = [&]() {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string comment;
      std::getline(is, comment);
      is >> std::ws;
    }
    long v = -1;
    if (!(is >> v) || v <= 0) throw ParseError("pnm: malformed header");
    return static_cast<std::size_t>(v);
  };
  r.width = next_int();
  r.height = next_int();
  if (next_int() != 255) throw ParseError("pnm: only maxval 255 supported");
  is.get();
  r.bytes.resize(r.width * r.height * r.channels);
  is.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(r.bytes.size()));
  if (static_cast<std::size_t>(is.gcount()) != r.bytes.size()) throw ParseError("pnm: truncated pixel data");
  return r;
}

void write_pnm(const std::string& path, const Raster& raster) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  const std::string s = encode_pnm(raster);
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw IoError("write failed for '" + path + "'");
}

Raster read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_pnm(ss.str());
}

Raster to_raster(std::span<const double> chw, std::size_t c, std::size_t h, std::size_t w, double lo, double hi) {
  if (chw.size() != c * h * w) throw ShapeError("to_raster: size mismatch");
  Raster r{w, h, c, std::vector<std::uint8_t>(c * h * w)};
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double t = std::clamp((chw[(ch * h + y) * w + x] - lo) / (hi - lo), 0.0, 1.0);
        r.at(x, y, ch) = static_cast<std::uint8_t>(std::lround(t * 255.0));
      }
  return r;
}

Raster tile_rasters(const std::vector<Raster>& tiles, std::size_t columns) {
  if (tiles.empty() || columns == 0) throw ContractError("tile_rasters: nothing to tile");
  const Raster& f = tiles.front();
  const std::size_t rows = (tiles.size() + columns - 1) / columns;
  Raster out{columns * (f.width + 1) + 1, rows * (f.height + 1) + 1, f.channels, {}};
  out.bytes.assign(out.width * out.height * out.channels, 0);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const Raster& t = tiles[i];
    if (t.width != f.width || t.height != f.height || t.channels != f.channels)
      throw ShapeError("tile_rasters: tiles differ in size");
    const std::size_t ox = 1 + (i % columns) * (f.width + 1), oy = 1 + (i / columns) * (f.height + 1);
    for (std::size_t y = 0; y < t.height; ++y)
      for (std::size_t x = 0; x < t.width; ++x)
        for (std::size_t c = 0; c < t.channels; ++c) out.at(ox + x, oy + y, c) = t.at(x, y, c);
  }
  return out;
}

namespace {

std::uint32_t read_be32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ParseError("idx: truncated header in '" + path + "'");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

}  // namespace

LabeledImages read_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream fi(images_path, std::ios::binary), fl(labels_path, std::ios::binary);
  if (!fi) throw IoError("cannot open '" + images_path + "'");
  if (!fl) throw IoError("cannot open '" + labels_path + "'");
  if (read_be32(fi, images_path) != 0x00000803) throw ParseError("idx: '" + images_path + "' is not an image file");
  if (read_be32(fl, labels_path) != 0x00000801) throw ParseError("idx: '" + labels_path + "' is not a label file");
  const std::size_t n = read_be32(fi, images_path), rows = read_be32(fi, images_path),
                    cols = read_be32(fi, images_path);
  if (read_be32(fl, labels_path) != n) throw ParseError("idx: image and label counts differ");
  std::vector<unsigned char> px(n * rows * cols), lb(n);
  if (!fi.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size())))
    throw ParseError("idx: truncated pixel data");
  if (!fl.read(reinterpret_cast<char*>(lb.data()), static_cast<std::streamsize>(lb.size())))
    throw ParseError("idx: truncated label data");
  LabeledImages out{1, rows, cols, {}, {}};
  out.pixels.resize(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) out.pixels[i] = px[i] / 127.5 - 1.0;
  out.labels.assign(lb.begin(), lb.end());
  return out;
}

}  // namespace dfkd
