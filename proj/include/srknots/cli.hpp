#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace srknots {

/// Parses `args` (without the program name), runs the subcommand and writes
/// a JSON object to `out`. Returns 0 on success, 2 on usage errors and 1 on
/// computation errors; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace srknots
