#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nkca {

/// Runs one `nkca` subcommand. `args` excludes the program name. Returns 0
/// on success, 2 on configuration or schedule errors and 1 on runtime
/// faults or failed validation.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cli_main(int argc, char** argv);

}  // namespace nkca
