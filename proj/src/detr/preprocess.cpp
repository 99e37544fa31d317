#include "dfkd/detr/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "dfkd/core/error.hpp"

namespace dfkd {

PreprocessConfig PreprocessConfig::full_scale() {
  PreprocessConfig c;
  c.shortest = 800;
  c.longest = 1333;
  return c;
}

void PreprocessConfig::validate() const {
  if (shortest == 0 || longest < shortest) throw ConfigError("preprocess: need 0 < shortest <= longest");
  for (double s : std) if (!(s > 0.0)) throw ConfigError("preprocess: std entries must be positive");
}

std::array<std::size_t, 2> resized_size(std::size_t height, std::size_t width, const PreprocessConfig& config) {
  if (height == 0 || width == 0) throw ContractError("preprocess: empty image");
  const double shortest = static_cast<double>(std::min(height, width));
  const double longest = static_cast<double>(std::max(height, width));
  double scale = static_cast<double>(config.shortest) / shortest;
  if (longest * scale > static_cast<double>(config.longest)) scale = static_cast<double>(config.longest) / longest;
  const auto h = static_cast<std::size_t>(std::llround(static_cast<double>(height) * scale));
  const auto w = static_cast<std::size_t>(std::llround(static_cast<double>(width) * scale));
  return {std::max<std::size_t>(h, 1), std::max<std::size_t>(w, 1)};
}

Raster resize_bilinear(const Raster& image, std::size_t height, std::size_t width) {
  if (image.width == 0 || image.height == 0) throw ContractError("resize: empty image");
  if (height == image.height && width == image.width) return image;
  Raster out{width, height, image.channels, std::vector<std::uint8_t>(width * height * image.channels)};
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  const auto coord = [](double pos, std::size_t limit, std::size_t& i0, std::size_t& i1, double& frac) {
    pos = std::clamp(pos, 0.0, static_cast<double>(limit - 1));
    i0 = static_cast<std::size_t>(std::floor(pos));
    i1 = std::min(i0 + 1, limit - 1);
    frac = pos - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double fy;
    coord((static_cast<double>(y) + 0.5) * sy - 0.5, image.height, y0, y1, fy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double fx;
      coord((static_cast<double>(x) + 0.5) * sx - 0.5, image.width, x0, x1, fx);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double top = image.at(x0, y0, c) * (1.0 - fx) + image.at(x1, y0, c) * fx;
        const double bottom = image.at(x0, y1, c) * (1.0 - fx) + image.at(x1, y1, c) * fx;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(top * (1.0 - fy) + bottom * fy, 0.0, 255.0)));
      }
    }
  }
  return out;
}

double normalize_pixel(std::uint8_t value, std::size_t channel, const PreprocessConfig& config) {
  return (static_cast<double>(value) * config.rescale - config.mean[channel]) / config.std[channel];
}

PreprocessedSample preprocess_detection(const Raster& image, const std::vector<int>& labels,
                                        const std::vector<BoxXYWH>& boxes, const PreprocessConfig& config) {
  config.validate();
  if (image.channels != 3) throw ShapeError("preprocess: expected an RGB image");
  if (labels.size() != boxes.size()) throw ContractError("preprocess: labels and boxes differ in length");
  const auto [h, w] = resized_size(image.height, image.width, config);
  const Raster resized = resize_bilinear(image, h, w);
  std::vector<double> px(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) px[(c * h + y) * w + x] = normalize_pixel(resized.at(x, y, c), c, config);

  PreprocessedSample out;
  out.input = Tensor::from({3, h, w}, std::move(px));
  out.original_height = image.height;
  out.original_width = image.width;
  const double iw = static_cast<double>(image.width), ih = static_cast<double>(image.height);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BoxXYWH& b = boxes[i];
    const double x0 = std::clamp(b[0], 0.0, iw), y0 = std::clamp(b[1], 0.0, ih);
    const double x1 = std::clamp(b[0] + b[2], 0.0, iw), y1 = std::clamp(b[1] + b[3], 0.0, ih);
    if (!(x1 - x0 > 0.0) || !(y1 - y0 > 0.0)) {
      out.warnings.push_back("box " + std::to_string(i) + " is degenerate after clipping; dropped");
      continue;
    }
    out.target.labels.push_back(labels[i]);
    out.target.boxes.push_back(to_normalized_cxcywh({x0, y0, x1 - x0, y1 - y0}, iw, ih));
  }
  return out;
}

PreprocessedSample preprocess_detection(const DetectionSample& sample, const PreprocessConfig& config) {
  return preprocess_detection(sample.image, sample.labels, sample.boxes, config);
}

std::vector<BoxXYWH> unnormalize_boxes(const DetectionTarget& target, std::size_t original_height,
                                       std::size_t original_width) {
  std::vector<BoxXYWH> out;
  for (const auto& b : target.boxes)
    out.push_back(from_normalized_cxcywh(b, static_cast<double>(original_width), static_cast<double>(original_height)));
  return out;
}

}  // namespace dfkd
