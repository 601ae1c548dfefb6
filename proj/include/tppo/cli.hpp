#pragma once

#include <string>
#include <vector>

namespace tppo {

/// Runs one `tppo` subcommand. `args` excludes the program name. Returns 0
/// on success, 2 on usage errors and 1 on runtime failures.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace tppo
