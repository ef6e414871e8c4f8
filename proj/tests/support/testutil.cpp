#include "testutil.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <stdexcept>

namespace fs = std::filesystem;

namespace testutil {

TempDir::TempDir(const std::string& tag) {
  static std::uint64_t counter = 0;
  const fs::path base = fs::temp_directory_path();
  for (int attempt = 0; attempt < 100; ++attempt) {
    fs::path candidate =
        base / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::error_code ec;
    if (fs::create_directory(candidate, ec)) {
      path_ = candidate.string();
      return;
    }
  }
  throw std::runtime_error("TempDir: could not create a temporary directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string TempDir::sub(const std::string& name) const {
  return (fs::path(path_) / name).string();
}

malcnn::Tensor numeric_grad(const std::function<double(const malcnn::Tensor&)>& f,
                            malcnn::Tensor x, double fixed_h) {
  malcnn::Tensor g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double saved = x[i];
    const double h = fixed_h > 0.0 ? fixed_h : 1e-5 * std::max(1.0, std::fabs(saved));
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_rel_err(const malcnn::Tensor& a, const malcnn::Tensor& b, double floor) {
  if (!a.same_shape(b)) throw std::runtime_error("max_rel_err: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double denom = std::max(floor, std::fabs(a[i]) + std::fabs(b[i]));
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

malcnn::Tensor random_tensor(std::vector<std::size_t> shape, malcnn::Rng& rng, double scale) {
  malcnn::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

void make_corpus(const std::string& root,
                 const std::vector<std::pair<std::string, std::size_t>>& classes,
                 const std::function<malcnn::GrayImage(std::size_t, std::size_t)>& gen) {
  fs::create_directories(root);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const fs::path dir = fs::path(root) / classes[c].first;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < classes[c].second; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "img_%05zu.pgm", i);
      malcnn::write_pgm(gen(c, i), (dir / name).string());
    }
  }
}

void make_tiny_corpus(const std::string& root,
                      const std::vector<std::pair<std::string, std::size_t>>& classes) {
  make_corpus(root, classes, [](std::size_t c, std::size_t i) {
    malcnn::GrayImage img;
    img.width = 2;
    img.height = 2;
    img.pixels = {static_cast<std::uint8_t>(c * 37 + i), static_cast<std::uint8_t>(i),
                  static_cast<std::uint8_t>(c), 0};
    return img;
  });
}

void make_textured_corpus(const std::string& root,
                          const std::vector<std::pair<std::string, std::size_t>>& classes,
                          std::size_t height, std::size_t width, std::uint64_t seed) {
  make_corpus(root, classes, [&](std::size_t c, std::size_t i) {
    malcnn::Rng rng(malcnn::mix_seed(seed, malcnn::mix_seed(c, i)));
    // Class signature: grating frequency and orientation.
    const double freq = 0.05 + 0.09 * static_cast<double>(c);
    const double angle = 0.5 * static_cast<double>(c);
    const double fx = freq * std::cos(angle);
    const double fy = freq * std::sin(angle);
    const double phase = rng.uniform() * 2.0 * std::numbers::pi;
    const double offset = 110.0 + 35.0 * rng.uniform();
    malcnn::GrayImage img;
    img.width = width;
    img.height = height;
    img.pixels.resize(width * height);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double wave = std::sin(2.0 * std::numbers::pi *
                                         (fx * static_cast<double>(x) + fy * static_cast<double>(y)) +
                                     phase);
        const double noise = 24.0 * rng.normal();
        double v = offset + 45.0 * wave + noise;
        v = std::clamp(v, 0.0, 255.0);
        img.pixels[y * width + x] = static_cast<std::uint8_t>(std::floor(v + 0.5));
      }
    }
    return img;
  });
}

void make_two_intensity_corpus(const std::string& root, std::size_t per_class, std::size_t height,
                               std::size_t width, std::uint64_t seed) {
  make_corpus(root, {{"dark", per_class}, {"bright", per_class}}, [&](std::size_t c, std::size_t i) {
    malcnn::Rng rng(malcnn::mix_seed(seed ^ 0xabcdULL, malcnn::mix_seed(c, i)));
    const double base = (c == 0 ? 60.0 : 190.0);
    malcnn::GrayImage img;
    img.width = width;
    img.height = height;
    img.pixels.resize(width * height);
    for (std::size_t p = 0; p < img.pixels.size(); ++p) {
      const double v = std::clamp(base + 12.0 * rng.normal(), 0.0, 255.0);
      img.pixels[p] = static_cast<std::uint8_t>(std::floor(v + 0.5));
    }
    return img;
  });
}

}  // namespace testutil
