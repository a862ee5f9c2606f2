#pragma once

#include <string>
#include <vector>

namespace tqe::cli {

/// Entry point behind the tqe binary. args excludes the program name.
/// Subcommands: train, evaluate, predict, attention, agreement, describe,
/// analyze-errors, gen-synthetic.
/// Exit codes: 0 success, 1 runtime/numeric failure, 2 usage or config error,
/// 3 file/parse error.
int run(const std::vector<std::string>& args);

}  // namespace tqe::cli
