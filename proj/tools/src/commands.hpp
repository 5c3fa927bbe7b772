#pragma once

#include <iosfwd>
#include <string>

#include "config.hpp"

namespace gpenkf::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitDesign = 2,
    kExitEmulation = 3,
    kExitCalibration = 4,
};

struct CommandContext {
    RunConfig config;
    bool dry_run = false;
    std::ostream* out = nullptr;  ///< progress and summaries
    std::ostream* err = nullptr;  ///< diagnostics
};

int cmd_design(const CommandContext& ctx);
int cmd_emulate(const CommandContext& ctx);
int cmd_calibrate(const CommandContext& ctx);
int cmd_mcmc(const CommandContext& ctx);
int cmd_study(const CommandContext& ctx);
/// Re-checks the config hash and content hash of every file listed in the
/// run records of the output directory.
int cmd_verify(const CommandContext& ctx);

/// Dispatches by name and maps library errors to exit codes; diagnostics
/// name the error type.
int run_command(const std::string& name, const CommandContext& ctx);

}  // namespace gpenkf::cli
