#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rumfit::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericalError = 4;

// Runs the command line `args` (without the program name). Reports go to
// `out` unless redirected with --out; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_hex(const std::string& bytes);

}  // namespace rumfit::cli
