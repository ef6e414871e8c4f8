#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "malcnn/rng.hpp"
#include "malcnn/tensor.hpp"

using malcnn::MsraInit;
using malcnn::Rng;
using malcnn::Tensor;

TEST_CASE("msra stddev follows sqrt(2/fan_in)") {
  CHECK(MsraInit(2, 0).stddev() == 1.0);
  CHECK(MsraInit(144, 0).stddev() == doctest::Approx(0.11785113019775792).epsilon(1e-15));
}

TEST_CASE("msra rejects fan_in 0") {
  CHECK_THROWS_AS(MsraInit(0, 1), std::invalid_argument);
}

TEST_CASE("same seed gives identical value streams") {
  MsraInit a(9, 42), b(9, 42);
  for (int i = 0; i < 100; ++i) CHECK(a.sample() == b.sample());
  Rng r1(7), r2(7);
  for (int i = 0; i < 100; ++i) CHECK(r1.uniform() == r2.uniform());
}

TEST_CASE("different seeds differ") {
  MsraInit a(9, 1), b(9, 2);
  bool any_diff = false;
  for (int i = 0; i < 16; ++i) any_diff |= (a.sample() != b.sample());
  CHECK(any_diff);
}

TEST_CASE("empirical std within 2% and mean near 0 over 1e5 draws") {
  const std::size_t n = 100000;
  MsraInit init(9, 123);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = init.sample();
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sum_sq / n - mean * mean);
  const double expected = std::sqrt(2.0 / 9.0);
  CHECK(std::fabs(stddev - expected) / expected < 0.02);
  // 3 standard errors of the mean.
  CHECK(std::fabs(mean) < 3.0 * expected / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("fill covers the whole tensor deterministically") {
  Tensor t({3, 3});
  MsraInit init(4, 5);
  init.fill(t);
  Tensor u({3, 3});
  MsraInit init2(4, 5);
  init2.fill(u);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    CHECK(t[i] == u[i]);
    CHECK(t[i] != 0.0);
  }
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> w = v;
  Rng a(99), b(99);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}
