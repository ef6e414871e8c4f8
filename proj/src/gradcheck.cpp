#include "malcnn/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "malcnn/loss.hpp"

namespace malcnn {

namespace {

double rel_error(double analytic, double numeric) {
  const double denom = std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
  return std::fabs(analytic - numeric) / denom;
}

}  // namespace

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  char buf[64];
  for (const GradCheckEntry& e : entries) {
    std::snprintf(buf, sizeof(buf), "max %.3e mean %.3e", e.max_rel_error, e.mean_rel_error);
    os << e.name << ": " << buf << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%.3e", max_rel_error);
  os << "worst " << buf << (passed ? " <= " : " > ");
  std::snprintf(buf, sizeof(buf), "%.3e", tolerance);
  os << buf << (passed ? " (pass)" : " (FAIL)") << "\n";
  return os.str();
}

GradCheckReport finite_diff_check(Network& net, const Tensor& input,
                                  const std::vector<int>& labels,
                                  const std::vector<double>& weights, double tolerance,
                                  bool check_input, std::uint64_t dropout_seed) {
  auto loss_at = [&](const Tensor& x) {
    net.reseed_dropout(dropout_seed);
    Tensor logits = net.forward_frozen(x);
    return weighted_softmax_loss(logits, labels, weights).loss;
  };

  // Analytic gradients from one caching forward/backward with the same masks.
  net.zero_grads();
  net.reseed_dropout(dropout_seed);
  Tensor logits = net.forward_frozen(input);
  LossOutput lo = weighted_softmax_loss(logits, labels, weights);
  Tensor grad_input = net.backward(lo.grad_logits);

  GradCheckReport report;
  report.tolerance = tolerance;

  Tensor probe = input;
  auto check_tensor = [&](const std::string& name, Tensor& value, const Tensor& analytic,
                          bool is_input) {
    GradCheckEntry entry;
    entry.name = name;
    double sum = 0.0;
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double saved = value[i];
      const double h = 1e-5 * std::max(1.0, std::fabs(saved));
      value[i] = saved + h;
      const double up = loss_at(is_input ? value : probe);
      value[i] = saved - h;
      const double down = loss_at(is_input ? value : probe);
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = rel_error(analytic[i], numeric);
      entry.max_rel_error = std::max(entry.max_rel_error, err);
      sum += err;
    }
    entry.mean_rel_error = value.numel() ? sum / static_cast<double>(value.numel()) : 0.0;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  };

  for (ParamRef p : net.params()) {
    check_tensor(p.name, *p.value, *p.grad, false);
  }
  if (check_input) {
    check_tensor("input", probe, grad_input, true);
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace malcnn
