#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace tthjb::cli {

/// Process exit codes.
enum ExitCode : int { kSuccess = 0, kValidation = 1, kSolverFailure = 2, kIoFailure = 3 };

/// Runs the backward recursion; writes the schedule and the per-slice report CSV.
int cmd_solve(const RunConfig& config, std::ostream& log);

/// Evaluates LQR, every configured schedule and optionally the full-horizon optimum on polynomial
/// initial values; writes one table row per controller.
int cmd_benchmark(const RunConfig& config, std::ostream& log);

/// Costs of every controller for initial values [x, ..., x] on a uniform grid of x.
int cmd_sweep_uniform(const RunConfig& config, std::ostream& log);

/// Differential Riccati solution of the linearized problem on the ODE grid.
int cmd_riccati(const RunConfig& config, std::ostream& log);

/// Quick invariant suite; prints one PASS/FAIL line per check.
int cmd_check(std::ostream& log);

/// Header line shared by every CSV output.
std::string csv_header(const RunConfig& config);

}  // namespace tthjb::cli
