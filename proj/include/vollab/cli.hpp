#pragma once

#include <string>
#include <vector>

namespace vollab {

/// Runs one CLI invocation (argv without the program name). Returns the
/// process exit code: 0 ok, 2 config error, 3 numerical failure,
/// 4 acceptance-threshold failure in --check mode.
int run_cli(const std::vector<std::string>& args);

}  // namespace vollab
