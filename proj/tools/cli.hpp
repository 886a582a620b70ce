#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stackvs::cli {

// Process exit codes.
inline constexpr int kOk = 0;
inline constexpr int kSelfcheckFailed = 1;
inline constexpr int kUsage = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericError = 4;

/// Runs one command line (without the program name). Results go to `out`,
/// progress and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stackvs::cli
