#include "malcnn/imaging.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "malcnn/errors.hpp"
#include "malcnn/util.hpp"

namespace malcnn {

WidthTable WidthTable::standard() {
  WidthTable t;
  t.brackets = {
      {10 * 1024, 32},  {30 * 1024, 64},   {60 * 1024, 128},  {100 * 1024, 256},
      {200 * 1024, 384}, {500 * 1024, 512}, {1000 * 1024, 768},
  };
  t.fallback = 1024;
  return t;
}

WidthTable WidthTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open width table " + path);
  WidthTable t;
  t.brackets.clear();
  bool have_default = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream is(line);
    std::string first;
    if (!(is >> first)) continue;
    std::size_t width = 0;
    if (!(is >> width) || width == 0) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected \"<kb> <width>\"");
    }
    if (first == "default") {
      t.fallback = width;
      have_default = true;
    } else {
      std::uint64_t kb = 0;
      try {
        kb = std::stoull(first);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": bad bound \"" + first + "\"");
      }
      t.brackets.emplace_back(kb * 1024, width);
    }
  }
  if (!have_default) throw DataError(path + ": missing \"default <width>\" line");
  for (std::size_t i = 1; i < t.brackets.size(); ++i) {
    if (t.brackets[i].first <= t.brackets[i - 1].first) {
      throw DataError(path + ": bracket bounds must be strictly ascending");
    }
  }
  return t;
}

std::size_t WidthTable::width_for_size(std::uint64_t filesize_bytes) const {
  for (const auto& [bound, width] : brackets) {
    if (filesize_bytes < bound) return width;
  }
  return fallback;
}

std::size_t width_for_size(std::uint64_t filesize_bytes) {
  static const WidthTable table = WidthTable::standard();
  return table.width_for_size(filesize_bytes);
}

GrayImage binary_to_image(const std::vector<std::uint8_t>& bytes, std::size_t width) {
  if (width == 0) throw std::invalid_argument("binary_to_image: width must be >= 1");
  if (bytes.empty()) throw std::invalid_argument("binary_to_image: empty input");
  GrayImage img;
  img.width = width;
  img.height = (bytes.size() + width - 1) / width;
  img.pixels.assign(img.width * img.height, 0);
  std::copy(bytes.begin(), bytes.end(), img.pixels.begin());
  return img;
}

GrayImage resize_bilinear(const GrayImage& img, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0) {
    throw std::invalid_argument("resize: target extents must be >= 1");
  }
  if (img.width == 0 || img.height == 0) throw std::invalid_argument("resize: empty image");
  if (target_h == img.height && target_w == img.width) return img;

  GrayImage out;
  out.width = target_w;
  out.height = target_h;
  out.pixels.resize(target_w * target_h);

  // Corner-aligned source coordinate; a singleton target axis maps to the
  // source center.
  auto src_coord = [](std::size_t dst, std::size_t dst_n, std::size_t src_n) {
    if (dst_n == 1) return (static_cast<double>(src_n) - 1.0) / 2.0;
    return static_cast<double>(dst) * (static_cast<double>(src_n) - 1.0) /
           (static_cast<double>(dst_n) - 1.0);
  };

  for (std::size_t y = 0; y < target_h; ++y) {
    const double sy = src_coord(y, target_h, img.height);
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < target_w; ++x) {
      const double sx = src_coord(x, target_w, img.width);
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - static_cast<double>(x0);
      const double v00 = img.pixels[y0 * img.width + x0];
      const double v01 = img.pixels[y0 * img.width + x1];
      const double v10 = img.pixels[y1 * img.width + x0];
      const double v11 = img.pixels[y1 * img.width + x1];
      const double top = v00 + (v01 - v00) * fx;
      const double bottom = v10 + (v11 - v10) * fx;
      const double v = top + (bottom - top) * fy;
      out.pixels[y * target_w + x] = static_cast<std::uint8_t>(std::floor(v + 0.5));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height) {
    throw std::invalid_argument("encode_pgm: inconsistent image");
  }
  std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                       "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), img.pixels.begin(), img.pixels.end());
  return bytes;
}

namespace {

// Whitespace/comment skipper for the PGM header; advances `pos`.
void skip_pgm_space(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (std::isspace(b[pos])) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      return;
    }
  }
}

std::uint64_t parse_pgm_number(const std::vector<std::uint8_t>& b, std::size_t& pos,
                               const char* what) {
  skip_pgm_space(b, pos);
  if (pos >= b.size() || !std::isdigit(b[pos])) {
    throw FormatError(std::string("pgm: expected ") + what, pos);
  }
  std::uint64_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + static_cast<std::uint64_t>(b[pos] - '0');
    if (v > 1'000'000'000ULL) throw FormatError(std::string("pgm: ") + what + " out of range", pos);
    ++pos;
  }
  return v;
}

}  // namespace

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("pgm: bad magic, expected P5", 0);
  }
  std::size_t pos = 2;
  const std::uint64_t width = parse_pgm_number(bytes, pos, "width");
  const std::uint64_t height = parse_pgm_number(bytes, pos, "height");
  const std::uint64_t maxval = parse_pgm_number(bytes, pos, "maxval");
  if (width == 0 || height == 0) throw FormatError("pgm: zero extent", pos);
  if (maxval != 255) throw FormatError("pgm: only maxval 255 is supported", pos);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError("pgm: expected single whitespace after maxval", pos);
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(width * height);
  if (bytes.size() - pos < need) {
    throw FormatError("pgm: truncated payload, need " + std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size() - pos),
                      bytes.size());
  }
  if (bytes.size() - pos > need) {
    throw FormatError("pgm: trailing bytes after payload", pos + need);
  }
  GrayImage img;
  img.width = width;
  img.height = height;
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

void write_pgm(const GrayImage& img, const std::string& path) {
  const std::vector<std::uint8_t> bytes = encode_pgm(img);
  write_file_bytes(path, bytes.data(), bytes.size());
}

GrayImage read_pgm(const std::string& path) {
  try {
    return decode_pgm(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what(), e.byte_offset());
  }
}

MeanImage compute_mean_image(const std::vector<GrayImage>& training_images,
                             std::uint64_t split_fingerprint) {
  if (training_images.empty()) {
    throw StateError("compute_mean_image: empty training set");
  }
  const std::size_t w = training_images.front().width;
  const std::size_t h = training_images.front().height;
  MeanImage mean;
  mean.width = w;
  mean.height = h;
  mean.values.assign(w * h, 0.0);
  mean.split_fingerprint = split_fingerprint;
  mean.n_images = training_images.size();
  for (const GrayImage& img : training_images) {
    if (img.width != w || img.height != h) {
      throw ShapeError("compute_mean_image: images must share the network input size");
    }
    for (std::size_t i = 0; i < mean.values.size(); ++i) {
      mean.values[i] += static_cast<double>(img.pixels[i]);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(training_images.size());
  for (double& v : mean.values) v *= inv_n;
  return mean;
}

Tensor subtract_mean(const GrayImage& img, const MeanImage& mean) {
  if (img.width != mean.width || img.height != mean.height) {
    throw ShapeError("subtract_mean: image " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + " vs mean " + std::to_string(mean.width) + "x" +
                     std::to_string(mean.height));
  }
  Tensor out({1, img.height, img.width});
  for (std::size_t i = 0; i < mean.values.size(); ++i) {
    out[i] = static_cast<double>(img.pixels[i]) - mean.values[i];
  }
  return out;
}

}  // namespace malcnn
