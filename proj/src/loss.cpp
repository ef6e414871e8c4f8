#include "malcnn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "malcnn/errors.hpp"

namespace malcnn {

namespace {

void check_logits_matrix(const Tensor& t, const char* who) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(who) + ": expected [N,K], got " + shape_str(t.shape()));
  }
}

void check_labels(const std::vector<int>& labels, std::size_t n, std::size_t k, const char* who) {
  if (labels.size() != n) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  }
  for (int y : labels) {
    if (y < 1 || static_cast<std::size_t>(y) > k) {
      throw std::invalid_argument(std::string(who) + ": label " + std::to_string(y) +
                                  " outside 1.." + std::to_string(k));
    }
  }
}

}  // namespace

Tensor softmax_probs(const Tensor& logits) {
  check_logits_matrix(logits, "softmax_probs");
  if (!logits.all_finite()) {
    throw std::invalid_argument("softmax_probs: logits must be finite");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor probs({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = logits.data() + i * k;
    double* p = probs.data() + i * k;
    const double shift = *std::max_element(a, a + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(a[j] - shift);
      z += p[j];
    }
    for (std::size_t j = 0; j < k; ++j) p[j] /= z;
  }
  return probs;
}

double cross_entropy_loss(const Tensor& probs, const std::vector<int>& labels) {
  check_logits_matrix(probs, "cross_entropy_loss");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  check_labels(labels, n, k, "cross_entropy_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += std::log(probs[i * k + static_cast<std::size_t>(labels[i] - 1)]);
  }
  return -total / static_cast<double>(n);
}

std::vector<double> class_weights(const std::vector<std::size_t>& sizes, double beta) {
  if (sizes.empty()) throw std::invalid_argument("class_weights: empty size list");
  if (!(beta > 0.0)) {
    throw std::invalid_argument("class_weights: beta must be positive, got " +
                                std::to_string(beta));
  }
  std::size_t s_max = 0;
  for (std::size_t s : sizes) {
    if (s == 0) throw std::invalid_argument("class_weights: class sizes must be >= 1");
    s_max = std::max(s_max, s);
  }
  std::vector<double> w(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    w[i] = 1.0 + static_cast<double>(s_max - sizes[i]) / (beta * static_cast<double>(s_max));
  }
  return w;
}

LossOutput weighted_softmax_loss(const Tensor& logits, const std::vector<int>& labels,
                                 const std::vector<double>& weights) {
  check_logits_matrix(logits, "weighted_softmax_loss");
  if (!logits.all_finite()) {
    throw std::invalid_argument("weighted_softmax_loss: logits must be finite");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  check_labels(labels, n, k, "weighted_softmax_loss");
  if (weights.size() != k) {
    throw std::invalid_argument("weighted_softmax_loss: " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(k) + " classes");
  }

  LossOutput out;
  out.probabilities = Tensor({n, k});
  out.grad_logits = Tensor({n, k});
  const double inv_m = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = logits.data() + i * k;
    double* p = out.probabilities.data() + i * k;
    double* g = out.grad_logits.data() + i * k;
    const std::size_t y = static_cast<std::size_t>(labels[i] - 1);
    const double w = weights[y];

    const double shift = *std::max_element(a, a + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(a[j] - shift);
    const double log_z = std::log(z);
    // log p_y = (a_y - shift) - log z, kept in the log domain throughout.
    total += w * ((a[y] - shift) - log_z);
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp((a[j] - shift) - log_z);
      g[j] = w * inv_m * (p[j] - (j == y ? 1.0 : 0.0));
    }
  }
  out.loss = -total * inv_m;
  return out;
}

std::vector<std::vector<double>> weight_sensitivity_table(const std::vector<std::size_t>& sizes,
                                                          const std::vector<double>& betas) {
  std::vector<std::vector<double>> table;
  table.reserve(betas.size());
  for (double beta : betas) table.push_back(class_weights(sizes, beta));
  return table;
}

void write_weights_csv(std::ostream& os, const std::vector<ClassStats>& stats) {
  os << "class_id,name,size,omega\n";
  char buf[40];
  for (const ClassStats& s : stats) {
    std::snprintf(buf, sizeof(buf), "%.9f", s.weight);
    os << s.class_id << "," << s.name << "," << s.size << "," << buf << "\n";
  }
}

}  // namespace malcnn
