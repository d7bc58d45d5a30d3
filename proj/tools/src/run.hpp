#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace esh::cli {

/// Parses arguments (without the program name) and runs one subcommand.
/// Prints a JSON summary to out; failures print {"error": {...}} to err and
/// return a nonzero exit code.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace esh::cli
