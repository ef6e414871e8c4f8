#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "malcnn/tensor.hpp"

namespace malcnn {

/// Per-class size and the loss weight derived from it.
struct ClassStats {
  std::size_t class_id = 0;  // 1..K
  std::string name;
  std::size_t size = 0;      // S_k
  double weight = 1.0;       // omega_k
};

struct LossOutput {
  double loss = 0.0;
  Tensor probabilities;  // [N,K], rows sum to 1
  Tensor grad_logits;    // [N,K], rows sum to 0
};

/// Row-wise softmax with max-shift: exp(a - max(a)) / sum. Rejects non-finite
/// logits and is invariant to adding a constant per row.
Tensor softmax_probs(const Tensor& logits);

/// Plain entropy loss -(1/m) sum_i log p_{y(i)} over normalized rows.
/// Labels are 1-based (1..K).
double cross_entropy_loss(const Tensor& probs, const std::vector<int>& labels);

/// Class weights omega_k = 1 + (S_max - S_k) / (beta * S_max). The largest
/// class gets exactly 1; smaller classes get more, bounded below 1 + 1/beta.
std::vector<double> class_weights(const std::vector<std::size_t>& sizes, double beta);

/// Loss -(1/m) sum_i omega_{y(i)} log p_{y(i)} with its analytic gradient
/// omega_{y(i)} * (p - onehot(y(i))) / m per row. Log-probabilities come from
/// log-sum-exp of the logits, never from log of the normalized probabilities.
LossOutput weighted_softmax_loss(const Tensor& logits, const std::vector<int>& labels,
                                 const std::vector<double>& weights);

/// One weight vector per beta, for side-by-side scaling studies.
std::vector<std::vector<double>> weight_sensitivity_table(const std::vector<std::size_t>& sizes,
                                                          const std::vector<double>& betas);

/// CSV `class_id,name,size,omega` with omega at nine decimal places.
void write_weights_csv(std::ostream& os, const std::vector<ClassStats>& stats);

}  // namespace malcnn
