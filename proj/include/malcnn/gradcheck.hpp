#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "malcnn/network.hpp"
#include "malcnn/tensor.hpp"

namespace malcnn {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string to_string() const;
};

/// Central-difference verification of every parameter gradient of `net` under
/// the weighted softmax loss head. Steps are h = 1e-5 * max(1, |theta|).
/// Dropout masks are pinned by reseeding before each forward and batch-norm
/// running statistics are left untouched, so repeated evaluations see the
/// exact same function. With `check_input` the gradient wrt the input batch
/// is verified too (reported as "input").
GradCheckReport finite_diff_check(Network& net, const Tensor& input,
                                  const std::vector<int>& labels,
                                  const std::vector<double>& weights, double tolerance,
                                  bool check_input = false,
                                  std::uint64_t dropout_seed = 0x9e1ul);

}  // namespace malcnn
