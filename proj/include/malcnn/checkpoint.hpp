#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "malcnn/network.hpp"

namespace malcnn {

struct Checkpoint {
  std::unique_ptr<Network> net;
  std::uint64_t seed = 0;
};

/// Single self-describing binary container: version tag, the ordered layer
/// specs, every parameter tensor and batch-norm running stat (shape +
/// little-endian 64-bit floats), and the run seed. Identical network state
/// always serializes to identical bytes.
void save_checkpoint(Network& net, std::uint64_t seed, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace malcnn
