#pragma once

#include "lowrank/sim.hpp"

#include <string>
#include <vector>

namespace lowrank::cli {

/// Exit codes of the `lowrank` binary.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

struct BiasPlan {
  BiasConfig config;
  int reps = 100;
};

struct MsepPlan {
  std::vector<MsepConfig> configs;
  int reps = 20;
};

/// INI experiment configs; unknown sections or keys raise InputError.
BiasPlan load_bias_config(const std::string& path);
MsepPlan load_msep_config(const std::string& path);

/// "1", "1,1.5,2" or an inclusive range "start:stop:step".
std::vector<double> parse_double_list(const std::string& text);

/// Parses arguments, runs one subcommand and returns the process exit code.
/// Diagnostics go to stderr; results go to stdout or files.
int run_cli(int argc, char** argv);

}  // namespace lowrank::cli
