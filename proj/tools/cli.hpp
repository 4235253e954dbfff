#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace usim::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kDegenerate = 2;

/// args excludes the program name. Reports go to files or `out`; diagnostics
/// go to `err` prefixed with a machine-readable code ("E_PARSE_ERROR: ...").
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace usim::cli
