#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace malcnn {

/// FNV-1a over a byte range, chainable via the seed parameter.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, std::size_t len);

/// Shortest-width formatting that round-trips a double exactly ("%.17g").
std::string fmt_double(double v);

}  // namespace malcnn
