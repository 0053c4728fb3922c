#pragma once

#include <string>

#include "mfc/config.hpp"

namespace mfc {

// Executes one parsed configuration: runs the requested subcommand, writes
// its CSV artifacts plus summary.txt under config.output_dir, and returns
// the process exit code (0 on success). Errors are reported on stderr.
int run(const RunConfig& config);

// 12-significant-digit decimal rendering shared by every CSV writer.
std::string format_number(double v);

}  // namespace mfc
