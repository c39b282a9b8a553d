#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tfl::cli {

// Runs one `tfl` invocation. args[0] is the program name. Returns the process
// exit status: 0 success, 1 runtime failure, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tfl::cli
