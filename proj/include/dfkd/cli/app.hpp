#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dfkd::cli {

enum ExitCode : int { kExitOk = 0, kExitContract = 1, kExitIo = 2 };

// args excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dfkd::cli
