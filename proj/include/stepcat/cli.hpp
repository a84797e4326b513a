#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace stepcat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // bad flags, config or input data
inline constexpr int kExitFailure = 2;  // I/O, numeric or other runtime failure

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stepcat::cli
