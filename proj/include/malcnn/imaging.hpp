#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "malcnn/tensor.hpp"

namespace malcnn {

/// 8-bit grayscale image, row-major. pixel[i] carries byte[i] for images
/// produced from binaries (zero padding past the end of the file).
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const GrayImage&) const = default;
};

/// Filesize bracket -> image width map. Brackets are (exclusive upper bound
/// in bytes, width), ascending; sizes past the last bracket get `fallback`.
struct WidthTable {
  std::vector<std::pair<std::uint64_t, std::size_t>> brackets;
  std::size_t fallback = 1024;

  static WidthTable standard();
  /// Text file, one "<kb_upper_bound> <width>" per line plus a final
  /// "default <width>"; '#' starts a comment. Bounds are in KB (1024 bytes).
  static WidthTable load(const std::string& path);

  std::size_t width_for_size(std::uint64_t filesize_bytes) const;
};

/// Standard-table width for a file of the given size.
std::size_t width_for_size(std::uint64_t filesize_bytes);

/// Lays file bytes out row-major at the given width; the final partial row is
/// zero padded. Height is ceil(len/width). Empty input is rejected.
GrayImage binary_to_image(const std::vector<std::uint8_t>& bytes, std::size_t width);

/// Deterministic bilinear resample (corner-aligned). Resizing to the source
/// size reproduces it exactly.
GrayImage resize_bilinear(const GrayImage& img, std::size_t target_h, std::size_t target_w);

/// Binary PGM ("P5", maxval 255). Reading back what was written is bitwise
/// identity; malformed input fails with the offending byte offset.
void write_pgm(const GrayImage& img, const std::string& path);
GrayImage read_pgm(const std::string& path);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes);

/// Per-pixel mean over a training split, tagged with a fingerprint of the
/// split it was computed from so downstream use can assert provenance.
struct MeanImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;
  std::uint64_t split_fingerprint = 0;
  std::size_t n_images = 0;
};

MeanImage compute_mean_image(const std::vector<GrayImage>& training_images,
                             std::uint64_t split_fingerprint);

/// Centered single-channel tensor [1,H,W]: pixel - mean, in doubles.
Tensor subtract_mean(const GrayImage& img, const MeanImage& mean);

}  // namespace malcnn
