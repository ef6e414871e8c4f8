#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "malcnn/imaging.hpp"
#include "malcnn/rng.hpp"
#include "malcnn/tensor.hpp"

namespace testutil {

/// Self-deleting temporary directory.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "malcnn");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::string& path() const { return path_; }
  std::string sub(const std::string& name) const;

 private:
  std::string path_;
};

/// Central-difference gradient of a scalar function of one tensor,
/// independent of the library's own checker. Default step is
/// h = 1e-5 * max(1, |x|); a positive `fixed_h` overrides it.
malcnn::Tensor numeric_grad(const std::function<double(const malcnn::Tensor&)>& f,
                            malcnn::Tensor x, double fixed_h = 0.0);

/// max over elements of |a-b| / max(floor, |a|+|b|). The floor keeps
/// finite-difference noise on true-zero coordinates from reading as error.
double max_rel_err(const malcnn::Tensor& a, const malcnn::Tensor& b, double floor = 1e-8);

malcnn::Tensor random_tensor(std::vector<std::size_t> shape, malcnn::Rng& rng, double scale = 1.0);

/// <root>/<name>/img_####.pgm class folders. Images come from the generator
/// (class index, image index) -> GrayImage.
void make_corpus(const std::string& root,
                 const std::vector<std::pair<std::string, std::size_t>>& classes,
                 const std::function<malcnn::GrayImage(std::size_t, std::size_t)>& gen);

/// Tiny constant-ish images; enough for split/count logic.
void make_tiny_corpus(const std::string& root,
                      const std::vector<std::pair<std::string, std::size_t>>& classes);

/// Procedural textured corpus: per-class oriented sinusoid gratings plus
/// noise, deterministic in (seed, class, index).
void make_textured_corpus(const std::string& root,
                          const std::vector<std::pair<std::string, std::size_t>>& classes,
                          std::size_t height, std::size_t width, std::uint64_t seed);

/// Two-class linearly separable toy set: dark vs bright images with mild
/// per-pixel noise.
void make_two_intensity_corpus(const std::string& root, std::size_t per_class, std::size_t height,
                               std::size_t width, std::uint64_t seed);

}  // namespace testutil
