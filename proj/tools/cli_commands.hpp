#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace meco::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

// Runs one `meco` invocation. `args` excludes the program name.
int run(const std::vector<std::string> & args, std::ostream & out, std::ostream & err);

} // namespace meco::cli
