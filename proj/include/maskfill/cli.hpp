// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace maskfill {

/// Process exit statuses of the maskfill tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1, ///< anything not covered below, e.g. a replay mismatch
  kExitConfig = 2,  ///< bad flags, config keys or values
  kExitIo = 3,      ///< unreadable, truncated or unsupported files
  kExitNumeric = 4, ///< non-finite loss during optimization
  kExitNoData = 5,  ///< nothing to process (e.g. eval with no matching pairs)
};

/// Runs one command line (args excludes the program name).
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace maskfill
