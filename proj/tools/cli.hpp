#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dcrl::cli {

/// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitInfeasible = 2;

/// Parses `args` (without the program name) and runs one of
/// run | oracle | convert | sweep. Returns the process exit code.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dcrl::cli
