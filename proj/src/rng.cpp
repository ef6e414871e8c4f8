#include "malcnn/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace malcnn {

double Rng::normal() {
  // u1 in (0,1] keeps the log finite.
  double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

MsraInit::MsraInit(std::size_t fan_in, std::uint64_t seed)
    : stddev_(0.0), rng_(seed) {
  if (fan_in == 0) throw std::invalid_argument("msra init: fan_in must be >= 1");
  stddev_ = std::sqrt(2.0 / static_cast<double>(fan_in));
}

void MsraInit::fill(Tensor& t) {
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = sample();
}

}  // namespace malcnn
