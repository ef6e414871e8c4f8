#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace malcnn {

/// Entry point behind the malcnn binary. `args` excludes the program name.
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace malcnn
