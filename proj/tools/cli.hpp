#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace drhg::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kRuntime = 1, kUsage = 2 };

/// Runs one command line (args excludes the program name) and returns its
/// exit code. Tables and summaries go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// SVG of one solution: nodes plus one <line class="edge"> per tour or route
/// edge.
std::string render_solution_svg(const std::vector<std::pair<double, double>>& coords,
                                const std::vector<std::vector<int>>& paths, int depot = -1);

}  // namespace drhg::cli
