#include <cmath>

#include "doctest.h"
#include "malcnn/gradcheck.hpp"
#include "malcnn/network.hpp"
#include "support/testutil.hpp"

using namespace malcnn;
using testutil::random_tensor;

TEST_CASE("a single affine layer checks out to 1e-9") {
  Network net({LayerSpec::fully_connected(4, 3)}, 1, 2, 2);
  net.init_params(3);
  Rng rng(4);
  Tensor input = random_tensor({2, 1, 2, 2}, rng, 0.5);
  GradCheckReport report = finite_diff_check(net, input, {1, 3}, {1.0, 1.0, 1.0}, 1e-9);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-9);
  CHECK(report.entries.size() == 2);  // weight and bias
  for (const GradCheckEntry& e : report.entries) CHECK(e.mean_rel_error <= e.max_rel_error);
}

TEST_CASE("relu away from its kink checks out to 1e-6 including the input") {
  Network net({LayerSpec::fully_connected(4, 4), LayerSpec::relu(),
               LayerSpec::fully_connected(4, 2)},
              1, 2, 2);
  net.init_params(8);
  // Push pre-activations away from zero.
  for (ParamRef p : net.params()) {
    if (p.name == "fully_connected0.bias") p.value->fill(0.75);
  }
  Rng rng(9);
  Tensor input = random_tensor({2, 1, 2, 2}, rng, 0.5);
  GradCheckReport report =
      finite_diff_check(net, input, {1, 2}, {1.0, 1.0}, 1e-6, /*check_input=*/true);
  CHECK(report.passed);
  CHECK(report.entries.back().name == "input");
}

TEST_CASE("the full toy stack with the weighted loss head passes at 1e-4") {
  std::vector<LayerSpec> specs = {
      LayerSpec::conv3x3(1, 2),   LayerSpec::relu(),          LayerSpec::maxpool2x2(),
      LayerSpec::conv3x3(2, 3),   LayerSpec::batchnorm(3),    LayerSpec::relu(),
      LayerSpec::maxpool2x2(),    LayerSpec::fully_connected(3 * 2 * 2, 5),
      LayerSpec::relu(),          LayerSpec::dropout(0.5),    LayerSpec::fully_connected(5, 4),
      LayerSpec::relu(),          LayerSpec::dropout(0.5),    LayerSpec::fully_connected(4, 3),
  };
  Network net(std::move(specs), 1, 8, 8);
  net.init_params(21);
  Rng rng(22);
  Tensor input = random_tensor({2, 1, 8, 8}, rng);
  GradCheckReport report = finite_diff_check(net, input, {1, 3}, {1.0, 1.01, 1.04}, 1e-4);
  INFO(report.to_string());
  CHECK(report.passed);
}

TEST_CASE("the checker leaves batch-norm running statistics untouched") {
  std::vector<LayerSpec> specs = {
      LayerSpec::conv3x3(1, 2), LayerSpec::relu(), LayerSpec::batchnorm(2),
      LayerSpec::fully_connected(2 * 4 * 4, 2),
  };
  Network net(std::move(specs), 1, 4, 4);
  net.init_params(31);
  std::vector<double> before;
  for (ParamRef b : net.buffers()) {
    for (std::size_t i = 0; i < b.value->numel(); ++i) before.push_back((*b.value)[i]);
  }
  Rng rng(32);
  Tensor input = random_tensor({2, 1, 4, 4}, rng);
  finite_diff_check(net, input, {1, 2}, {1.0, 1.0}, 1e-4);
  std::size_t k = 0;
  for (ParamRef b : net.buffers()) {
    for (std::size_t i = 0; i < b.value->numel(); ++i) CHECK((*b.value)[i] == before[k++]);
  }
}

TEST_CASE("the report flags a broken gradient") {
  Network net({LayerSpec::fully_connected(4, 2)}, 1, 2, 2);
  net.init_params(41);
  Rng rng(42);
  Tensor input = random_tensor({2, 1, 2, 2}, rng);
  GradCheckReport report = finite_diff_check(net, input, {1, 2}, {1.0, 1.0}, 1e-15);
  CHECK_FALSE(report.passed);  // an impossible tolerance must not pass
}
