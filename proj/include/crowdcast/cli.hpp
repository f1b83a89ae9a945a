#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "crowdcast/dataio.hpp"
#include "crowdcast/loss.hpp"
#include "crowdcast/model.hpp"
#include "crowdcast/pipeline.hpp"
#include "crowdcast/train.hpp"

namespace crowdcast {

// Resolved configuration for every command; each key has a documented
// default, is settable from a JSON config file, and is overridable with
// `--set section.key=value`.
struct RunConfig {
    SynthConfig synth;
    SplitSpec split;
    ModelConfig model;
    LossConfig loss;
    TrainConfig train;
    std::uint64_t seed = 0;
};

// Loads and validates a config file (unknown keys rejected); `path` empty
// means defaults only.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path);

// Applies one `section.key=value` override.
void apply_override(RunConfig& cfg, const std::string& assignment);

std::string run_config_json(const RunConfig& cfg);

// Full CLI: generate, prepare, train, eval, sweep, radius-report.
// Returns the process exit code; errors print one line to stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace crowdcast
