#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "malcnn/errors.hpp"
#include "malcnn/layers.hpp"
#include "support/testutil.hpp"

using namespace malcnn;
using testutil::max_rel_err;
using testutil::numeric_grad;
using testutil::random_tensor;

namespace {

// Scalar probe sum(R .* y) so FD of the probe checks backward with grad_out=R.
double probe(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
  return s;
}

}  // namespace

// ---- conv3x3 ----------------------------------------------------------

TEST_CASE("conv3x3 identity kernel reproduces the input") {
  Rng rng(1);
  Tensor x = random_tensor({2, 1, 5, 4}, rng);
  Tensor w({1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;
  Tensor b({1});
  Tensor y = conv3x3_forward(x, w, b);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv3x3 all-ones kernel sums the window") {
  Tensor x = Tensor::full({1, 1, 4, 4}, 2.5);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor b({1});
  Tensor y = conv3x3_forward(x, w, b);
  CHECK(y.at(0, 0, 1, 1) == 9.0 * 2.5);  // interior pixel
  CHECK(y.at(0, 0, 0, 0) == 4.0 * 2.5);  // corner sees a 2x2 window
}

TEST_CASE("conv3x3 rejects channel mismatch") {
  Tensor x({1, 2, 4, 4});
  Tensor w({3, 1, 3, 3});
  Tensor b({3});
  CHECK_THROWS_AS(conv3x3_forward(x, w, b), ShapeError);
}

TEST_CASE("conv3x3 backward matches finite differences") {
  Rng rng(7);
  Tensor x = random_tensor({1, 1, 4, 4}, rng);
  Tensor w = random_tensor({2, 1, 3, 3}, rng, 0.5);
  Tensor b = random_tensor({2}, rng, 0.1);
  Tensor r = random_tensor({1, 2, 4, 4}, rng);

  Conv3x3Grads g = conv3x3_backward(x, w, r);
  Tensor fd_x = numeric_grad([&](const Tensor& t) { return probe(conv3x3_forward(t, w, b), r); }, x);
  Tensor fd_w = numeric_grad([&](const Tensor& t) { return probe(conv3x3_forward(x, t, b), r); }, w);
  Tensor fd_b = numeric_grad([&](const Tensor& t) { return probe(conv3x3_forward(x, w, t), r); }, b);
  CHECK(max_rel_err(g.input, fd_x) < 1e-6);
  CHECK(max_rel_err(g.weights, fd_w) < 1e-6);
  CHECK(max_rel_err(g.bias, fd_b) < 1e-6);
}

TEST_CASE("conv3x3 backward holds over 20 random seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 2, 4, 6}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng, 0.5);
    Tensor b = random_tensor({3}, rng, 0.1);
    Tensor r = random_tensor({2, 3, 4, 6}, rng);
    Conv3x3Grads g = conv3x3_backward(x, w, r);
    Tensor fd_w =
        numeric_grad([&](const Tensor& t) { return probe(conv3x3_forward(x, t, b), r); }, w);
    CHECK(max_rel_err(g.weights, fd_w) < 1e-6);
  }
}

// ---- batchnorm --------------------------------------------------------

namespace {

Tensor bn_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                BatchNormCache* cache = nullptr) {
  Tensor rm({x.dim(1)}), rv({x.dim(1)});
  return batchnorm_forward(x, gamma, beta, 1e-5, true, rm, rv, 0.9, false, cache);
}

}  // namespace

TEST_CASE("batchnorm zero-variance channel maps to zeros") {
  Tensor x = Tensor::full({3, 2, 2, 2}, 4.0);
  Tensor gamma = Tensor::full({2}, 1.0);
  Tensor beta({2});
  Tensor y = bn_train(x, gamma, beta);
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("batchnorm gamma=0 broadcasts the shift") {
  Rng rng(3);
  Tensor x = random_tensor({4, 3, 2, 2}, rng);
  Tensor gamma({3});
  Tensor beta({3}, {0.5, -1.0, 2.0});
  Tensor y = bn_train(x, gamma, beta);
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t s = 0; s < 4; ++s) {
        CHECK(y[(n * 3 + c) * 4 + s] == beta[c]);
      }
    }
  }
}

TEST_CASE("batchnorm train mode rejects a batch of one") {
  Tensor x({1, 2, 2, 2});
  Tensor gamma = Tensor::full({2}, 1.0);
  Tensor beta({2});
  Tensor rm({2}), rv({2});
  CHECK_THROWS_AS(batchnorm_forward(x, gamma, beta, 1e-5, true, rm, rv, 0.9, true, nullptr),
                  StateError);
}

TEST_CASE("batchnorm eval uses running statistics") {
  Tensor x({2, 1, 1, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor gamma = Tensor::full({1}, 2.0);
  Tensor beta = Tensor::full({1}, 0.5);
  Tensor rm({1}, {1.0});
  Tensor rv({1}, {4.0});
  Tensor y = batchnorm_forward(x, gamma, beta, 1e-5, false, rm, rv, 0.9, false, nullptr);
  const double inv = 1.0 / std::sqrt(4.0 + 1e-5);
  CHECK(y[0] == doctest::Approx(2.0 * (1.0 - 1.0) * inv + 0.5));
  CHECK(y[3] == doctest::Approx(2.0 * (4.0 - 1.0) * inv + 0.5));
}

TEST_CASE("batchnorm running stats update once per forward") {
  Tensor x({2, 1, 1, 1}, {1.0, 3.0});  // mean 2, biased var 1
  Tensor gamma = Tensor::full({1}, 1.0);
  Tensor beta({1});
  Tensor rm({1}), rv = Tensor::full({1}, 1.0);
  batchnorm_forward(x, gamma, beta, 1e-5, true, rm, rv, 0.9, true, nullptr);
  CHECK(rm[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
  CHECK(rv[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("batchnorm backward matches finite differences") {
  Rng rng(11);
  Tensor x = random_tensor({4, 3, 2, 2}, rng);
  Tensor gamma = random_tensor({3}, rng, 0.5);
  Tensor beta = random_tensor({3}, rng, 0.5);
  Tensor r = random_tensor({4, 3, 2, 2}, rng);

  BatchNormCache cache;
  bn_train(x, gamma, beta, &cache);
  BatchNormGrads g = batchnorm_backward(r, gamma, cache);

  Tensor fd_x = numeric_grad([&](const Tensor& t) { return probe(bn_train(t, gamma, beta), r); }, x);
  Tensor fd_g =
      numeric_grad([&](const Tensor& t) { return probe(bn_train(x, t, beta), r); }, gamma);
  Tensor fd_b = numeric_grad([&](const Tensor& t) { return probe(bn_train(x, gamma, t), r); }, beta);
  CHECK(max_rel_err(g.input, fd_x) < 1e-5);
  CHECK(max_rel_err(g.gamma, fd_g) < 1e-5);
  CHECK(max_rel_err(g.beta_shift, fd_b) < 1e-5);
}

TEST_CASE("batchnorm backward holds over 20 random seeds") {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    Rng rng(seed);
    Tensor x = random_tensor({3, 2, 2, 3}, rng);
    Tensor gamma = random_tensor({2}, rng, 0.5);
    Tensor beta = random_tensor({2}, rng, 0.5);
    Tensor r = random_tensor({3, 2, 2, 3}, rng);
    BatchNormCache cache;
    bn_train(x, gamma, beta, &cache);
    BatchNormGrads g = batchnorm_backward(r, gamma, cache);
    Tensor fd_x =
        numeric_grad([&](const Tensor& t) { return probe(bn_train(t, gamma, beta), r); }, x);
    CHECK(max_rel_err(g.input, fd_x) < 1e-5);
  }
}

// ---- relu -------------------------------------------------------------

TEST_CASE("relu clamps negatives") {
  Tensor x({3}, {-1.0, 0.0, 2.0});
  Tensor y = relu_forward(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);
}

TEST_CASE("relu all-negative input gives zero output and zero gradient") {
  Tensor x = Tensor::full({2, 3}, -4.0);
  Tensor y = relu_forward(x);
  Tensor g = relu_backward(x, Tensor::full({2, 3}, 1.0));
  for (std::size_t i = 0; i < y.numel(); ++i) {
    CHECK(y[i] == 0.0);
    CHECK(g[i] == 0.0);
  }
}

TEST_CASE("relu backward matches finite differences away from the kink") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Tensor x({2, 8});
    for (std::size_t i = 0; i < x.numel(); ++i) {
      double v = rng.normal();
      while (std::fabs(v) < 0.1) v = rng.normal();  // stay away from 0
      x[i] = v;
    }
    Tensor r = random_tensor({2, 8}, rng);
    Tensor g = relu_backward(x, r);
    Tensor fd = numeric_grad([&](const Tensor& t) { return probe(relu_forward(t), r); }, x);
    CHECK(max_rel_err(g, fd) < 1e-6);
  }
}

// ---- maxpool2x2 -------------------------------------------------------

TEST_CASE("maxpool halves a constant image") {
  Tensor x = Tensor::full({1, 1, 4, 6}, 3.0);
  Tensor y = maxpool2x2_forward(x, nullptr);
  CHECK(y.shape() == std::vector<std::size_t>{1, 1, 2, 3});
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 3.0);
}

TEST_CASE("maxpool picks the max and routes its gradient there") {
  Tensor x({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  std::vector<std::uint32_t> argmax;
  Tensor y = maxpool2x2_forward(x, &argmax);
  CHECK(y[0] == 4.0);
  Tensor g = maxpool2x2_backward(Tensor({1, 1, 1, 1}, {5.0}), {1, 1, 2, 2}, argmax);
  CHECK(g[0] == 0.0);
  CHECK(g[3] == 5.0);
}

TEST_CASE("maxpool tie breaks to the first index in row-major order") {
  Tensor x = Tensor::full({1, 1, 2, 2}, 7.0);
  std::vector<std::uint32_t> argmax;
  maxpool2x2_forward(x, &argmax);
  CHECK(argmax[0] == 0);
}

TEST_CASE("maxpool rejects odd extents") {
  Tensor x({1, 1, 3, 4});
  CHECK_THROWS_AS(maxpool2x2_forward(x, nullptr), ShapeError);
}

TEST_CASE("maxpool backward matches finite differences away from ties") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Tensor x = random_tensor({2, 2, 4, 4}, rng);  // continuous draws, ties null
    std::vector<std::uint32_t> argmax;
    maxpool2x2_forward(x, &argmax);
    Tensor r = random_tensor({2, 2, 2, 2}, rng);
    Tensor g = maxpool2x2_backward(r, {2, 2, 4, 4}, argmax);
    Tensor fd = numeric_grad(
        [&](const Tensor& t) { return probe(maxpool2x2_forward(t, nullptr), r); }, x);
    CHECK(max_rel_err(g, fd) < 1e-6);
  }
}

// ---- fully connected --------------------------------------------------

TEST_CASE("fully connected identity weights reproduce the input") {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor w({3, 3});
  for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = 1.0;
  Tensor b({3});
  Tensor y = fully_connected_forward(x, w, b);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("fully connected zero input yields the bias per row") {
  Tensor x({2, 3});
  Tensor w = Tensor::full({3, 4}, 5.0);
  Tensor b({4}, {1, 2, 3, 4});
  Tensor y = fully_connected_forward(x, w, b);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t u = 0; u < 4; ++u) CHECK(y.at(n, u) == b[u]);
  }
}

TEST_CASE("fully connected rejects width mismatch") {
  Tensor x({2, 3});
  Tensor w({4, 2});
  Tensor b({2});
  CHECK_THROWS_AS(fully_connected_forward(x, w, b), ShapeError);
}

TEST_CASE("fully connected backward matches finite differences at 1e-7") {
  Rng rng(5);
  Tensor x = random_tensor({2, 3}, rng);
  Tensor w = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor r = random_tensor({2, 4}, rng);
  FullyConnectedGrads g = fully_connected_backward(x, w, r);
  Tensor fd_x =
      numeric_grad([&](const Tensor& t) { return probe(fully_connected_forward(t, w, b), r); }, x);
  Tensor fd_w =
      numeric_grad([&](const Tensor& t) { return probe(fully_connected_forward(x, t, b), r); }, w);
  Tensor fd_b =
      numeric_grad([&](const Tensor& t) { return probe(fully_connected_forward(x, w, t), r); }, b);
  CHECK(max_rel_err(g.input, fd_x) < 1e-7);
  CHECK(max_rel_err(g.weights, fd_w) < 1e-7);
  CHECK(max_rel_err(g.bias, fd_b) < 1e-7);
}

TEST_CASE("fully connected backward holds over 20 random seeds") {
  for (std::uint64_t seed = 40; seed < 60; ++seed) {
    Rng rng(seed);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor w = random_tensor({5, 2}, rng);
    Tensor b = random_tensor({2}, rng);
    Tensor r = random_tensor({3, 2}, rng);
    FullyConnectedGrads g = fully_connected_backward(x, w, r);
    Tensor fd_w = numeric_grad(
        [&](const Tensor& t) { return probe(fully_connected_forward(x, t, b), r); }, w);
    CHECK(max_rel_err(g.weights, fd_w) < 1e-7);
  }
}

// ---- dropout ----------------------------------------------------------

TEST_CASE("dropout eval mode is the identity") {
  Rng rng(1);
  Tensor x = random_tensor({4, 4}, rng);
  Rng drop(2);
  Tensor y = dropout_forward(x, 0.5, false, drop, nullptr);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("dropout masks repeat under the same seed") {
  Tensor x = Tensor::full({100}, 1.0);
  Rng a(9), b(9);
  std::vector<std::uint8_t> ma, mb;
  dropout_forward(x, 0.5, true, a, &ma);
  dropout_forward(x, 0.5, true, b, &mb);
  CHECK(ma == mb);
}

TEST_CASE("dropout rejects probabilities outside (0,1)") {
  Tensor x({4});
  Rng rng(1);
  CHECK_THROWS_AS(dropout_forward(x, 0.0, true, rng, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(dropout_forward(x, 1.0, true, rng, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(dropout_forward(x, 1.5, true, rng, nullptr), std::invalid_argument);
}

TEST_CASE("dropout survivor fraction concentrates near 1-p") {
  const std::size_t n = 10000;
  Tensor x = Tensor::full({n}, 1.0);
  Rng rng(33);
  std::vector<std::uint8_t> mask;
  dropout_forward(x, 0.5, true, rng, &mask);
  std::size_t kept = 0;
  for (std::uint8_t m : mask) kept += m;
  const double fraction = static_cast<double>(kept) / static_cast<double>(n);
  CHECK(fraction > 0.48);
  CHECK(fraction < 0.52);
}

TEST_CASE("dropout preserves the mean within three standard errors") {
  const std::size_t n = 10000;
  const double p = 0.5;
  Rng rng(77);
  Tensor x = random_tensor({n}, rng);
  Rng drop(55);
  Tensor y = dropout_forward(x, p, true, drop, nullptr);
  double mean_in = 0.0, mean_out = 0.0, var_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_in += x[i];
    mean_out += y[i];
    var_sum += x[i] * x[i] * p / (1.0 - p);  // Var(x_i * b_i / (1-p))
  }
  mean_in /= n;
  mean_out /= n;
  const double se = std::sqrt(var_sum) / static_cast<double>(n);
  CHECK(std::fabs(mean_out - mean_in) < 3.0 * se);
}

TEST_CASE("dropout backward routes through the stored mask") {
  Rng rng(4);
  Tensor x = random_tensor({6}, rng);
  Rng drop(8);
  std::vector<std::uint8_t> mask;
  dropout_forward(x, 0.25, true, drop, &mask);
  Tensor r = random_tensor({6}, rng);
  Tensor g = dropout_backward(r, 0.25, mask);
  const double scale = 1.0 / (1.0 - 0.25);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(g[i] == (mask[i] ? r[i] * scale : 0.0));
  }
}
