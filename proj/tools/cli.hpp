#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace l4gs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFormat = 2;
inline constexpr int kExitVerification = 3;

/// Runs one command. `args` excludes the program name. Reports go to `out`,
/// one-line diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace l4gs::cli
