#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ltqr::cli {

/// Runs the ltqr command line. args[0] is the program name. On failure a
/// JSON object {"error": {...}} is written to `err` and a nonzero code returned.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ltqr::cli
