#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace malcnn {

/// Tensor/layer dimension mismatch.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Operation attempted in a state that does not admit it (mode unset,
/// batch of one in train-mode batch norm, empty split, ...).
class StateError : public std::runtime_error {
 public:
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed file contents. Carries the byte offset where parsing stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Unusable input data: missing files, empty class directories, bad corpora.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training produced a non-finite loss. Carries the (epoch, batch) coordinates.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& msg, std::size_t epoch, std::size_t batch)
      : std::runtime_error(msg + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace malcnn
