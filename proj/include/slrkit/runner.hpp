#pragma once

#include "slrkit/config.hpp"
#include "slrkit/stream.hpp"

#include <string>
#include <vector>

namespace slrkit {

/// Executes one CLI command against a validated config. Returns the exit
/// status (0 success, 1 config error, 2 runtime error) and prints
/// diagnostics to stderr. Every run writes run_manifest.json next to its
/// outputs with the resolved config, seed, input/output content hashes
/// and status.
int run_command(const std::string& command, const std::string& config_path,
                const std::vector<std::string>& overrides);

/// The commands run_command accepts.
const std::vector<std::string>& command_names();

/// Builds the frozen inference bundle used by predict/serve/benchmark:
/// checkpoint weights + model config + skeleton + labels + the eval
/// normalization pipeline.
FrozenModel load_frozen_model(const RunConfig& config, const std::string& checkpoint_path);

}  // namespace slrkit
