#include "malcnn/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "malcnn/errors.hpp"
#include "malcnn/imaging.hpp"

namespace malcnn {

namespace {

// Index of the ReLU following the second fully connected layer.
std::size_t feature_tap_index(const Network& net) {
  const auto& specs = net.specs();
  std::vector<std::size_t> fc;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].kind == LayerKind::kFullyConnected) fc.push_back(i);
  }
  if (fc.size() < 3) {
    throw std::invalid_argument("extract_features: network needs three fully connected layers, has " +
                                std::to_string(fc.size()));
  }
  const std::size_t second = fc[1];
  if (second + 1 >= specs.size() || specs[second + 1].kind != LayerKind::kReLU) {
    throw std::invalid_argument(
        "extract_features: expected relu directly after the second fully connected layer");
  }
  return second + 1;
}

}  // namespace

Tensor extract_features(Network& net, const std::vector<Tensor>& images, std::size_t batch_size) {
  if (images.empty()) throw std::invalid_argument("extract_features: no images");
  if (batch_size == 0) throw std::invalid_argument("extract_features: batch_size must be >= 1");
  const std::size_t tap = feature_tap_index(net);
  const std::size_t dim = net.specs()[tap - 1].out_features;
  const std::size_t h = net.in_height(), w = net.in_width();

  Tensor out({images.size(), dim});
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, images.size());
    Tensor batch({end - start, net.in_channels(), h, w});
    for (std::size_t i = start; i < end; ++i) {
      const Tensor& img = images[i];
      if (img.numel() != net.in_channels() * h * w) {
        throw ShapeError("extract_features: image " + std::to_string(i) + " has shape " +
                         shape_str(img.shape()));
      }
      std::copy(img.data(), img.data() + img.numel(),
                batch.data() + (i - start) * img.numel());
    }
    const Tensor acts = net.forward_to(batch, tap);
    std::copy(acts.data(), acts.data() + acts.numel(), out.data() + start * dim);
  }
  return out;
}

FeatureMap make_feature_map(const std::string& class_name, const Tensor& features) {
  if (features.rank() != 2) {
    throw std::invalid_argument("feature map: features must be [n,D], got " +
                                shape_str(features.shape()));
  }
  FeatureMap fm;
  fm.class_name = class_name;
  fm.n = features.dim(0);
  fm.dim = features.dim(1);
  fm.values.assign(features.data(), features.data() + features.numel());
  const auto [lo, hi] = std::minmax_element(fm.values.begin(), fm.values.end());
  fm.min_value = *lo;
  fm.max_value = *hi;
  return fm;
}

FeatureExportResult export_feature_map(const FeatureMap& fm, const std::string& path) {
  if (fm.values.size() != fm.n * fm.dim || fm.values.empty()) {
    throw std::invalid_argument("feature map: inconsistent matrix");
  }
  GrayImage img;
  img.width = fm.dim;
  img.height = fm.n;
  img.pixels.assign(fm.values.size(), 0);
  FeatureExportResult result;
  const double range = fm.max_value - fm.min_value;
  if (range <= 0.0) {
    result.degenerate = true;  // constant matrix, exported as all zeros
  } else {
    for (std::size_t i = 0; i < fm.values.size(); ++i) {
      const double scaled = 255.0 * (fm.values[i] - fm.min_value) / range;
      img.pixels[i] = static_cast<std::uint8_t>(std::floor(scaled + 0.5));
    }
  }
  write_pgm(img, path);
  return result;
}

}  // namespace malcnn
