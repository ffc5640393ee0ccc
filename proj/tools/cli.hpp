#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace bigr::cli {

// Runs one command line. Output goes to `out`, diagnostics to `err`; the
// return value is the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace bigr::cli
