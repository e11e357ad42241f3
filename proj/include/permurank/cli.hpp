#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace permurank::cli {

/// Runs the command line `args` (args[0] is the program name) and returns
/// the process exit code: 0 success, 1 usage error, 2 data error, 3 gateway error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace permurank::cli
