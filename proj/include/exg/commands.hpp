#pragma once

#include <cstdint>
#include <string>

#include "exg/config.hpp"

namespace exg::cmd {

struct Options {
  std::string config_path;
  std::string out_dir;     // overrides the config's out_dir when nonempty
  std::string checkpoint;  // pretrain checkpoint or trained task model
  std::int64_t n_seeds = 1;
  bool has_seed_override = false;
  std::uint64_t seed_override = 0;
};

// Dispatches one subcommand; returns the process exit code
// (0 ok, 2 validation failure, 3 runtime/training failure).
int run_command(const std::string& name, const Options& opts);

}  // namespace exg::cmd
