#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ftcn::cli {

/// Runs one ftcnkit invocation; `args` excludes the program name.
/// Returns 0 on success, 1 after a failure (one "error: ..." line on `err`)
/// and 2 on a usage error (the message followed by usage text on `err`).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ftcn::cli
