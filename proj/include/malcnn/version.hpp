#pragma once

namespace malcnn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace malcnn
