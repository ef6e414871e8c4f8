#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "malcnn/tensor.hpp"

namespace malcnn {

/// Deterministic random source. All draws are derived from the mt19937_64
/// stream directly so that identical seeds give identical value streams on
/// every platform (the std distributions make no such promise).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller. Consumes two uniforms per draw.
  double normal();

  /// Uniform index in [0,n).
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

/// Mixes two seeds into one (splitmix64 finalizer over the combination).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Weight filler: zero-mean normal with std sqrt(2 / fan_in).
class MsraInit {
 public:
  MsraInit(std::size_t fan_in, std::uint64_t seed);

  double stddev() const { return stddev_; }
  double sample() { return stddev_ * rng_.normal(); }
  void fill(Tensor& t);

 private:
  double stddev_;
  Rng rng_;
};

}  // namespace malcnn
