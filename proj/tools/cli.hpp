#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace usl::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericalFailure = 4;

inline constexpr int kReportVersion = 1;

/// Runs one command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace usl::cli
