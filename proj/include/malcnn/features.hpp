#pragma once

#include <string>
#include <vector>

#include "malcnn/network.hpp"
#include "malcnn/tensor.hpp"

namespace malcnn {

/// All feature vectors of one class stacked into an n x D matrix, plus the
/// value range used for display scaling.
struct FeatureMap {
  std::string class_name;
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // row-major n*dim
  double min_value = 0.0;
  double max_value = 0.0;
};

/// Penultimate features: the activation after the ReLU that follows the
/// second of the three fully connected layers, in eval mode. Returns [n,D].
Tensor extract_features(Network& net, const std::vector<Tensor>& images,
                        std::size_t batch_size = 64);

FeatureMap make_feature_map(const std::string& class_name, const Tensor& features);

/// Affine min-max scaling to 0..255 (rounded half up), written as an n x D
/// PGM. A constant matrix exports as all zeros and reports degenerate=true.
struct FeatureExportResult {
  bool degenerate = false;
};
FeatureExportResult export_feature_map(const FeatureMap& fm, const std::string& path);

}  // namespace malcnn
