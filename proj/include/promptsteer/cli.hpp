#pragma once
// Command-line front end. Exit codes: 0 success, 1 IO/format/compatibility
// errors, 2 usage, 3 internal contract violation.

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

namespace promptsteer {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitContract = 3;

/// `args[0]` is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int exit_code_for(const std::exception& e) noexcept;

}  // namespace promptsteer
