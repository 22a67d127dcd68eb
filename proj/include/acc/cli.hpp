#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "acc/data.hpp"
#include "acc/training.hpp"

namespace acc::cli {

// Fully resolved experiment description: training hyperparameters, dataset
// spec and orchestration knobs. Defaults mirror the reference configuration;
// a config file overrides defaults and command-line flags override the file.
struct Experiment {
    TrainConfig train;
    MiSpec data;
    std::string out_dir = "out";
    bool trace = false;
    std::size_t steps = 0;  // 0 = run epochs as configured
    std::size_t coverage_steps = 300;
    std::vector<std::size_t> coverage_batch_sizes = {32, 64, 128};
    std::vector<std::string> samplers;  // empty = per-command default list
    std::string checkpoint;             // probe input; empty = <out>/checkpoint.bin
    std::string probe_modality = "visual";

    Experiment();
};

// Flag values as strings keyed by flag name; only present keys override.
using Overrides = std::map<std::string, std::string>;

// Resolution pipeline shared by every command. config_path may point at a
// plain config file or at a previously written manifest (whose embedded
// config is then used). Throws std::invalid_argument / std::runtime_error
// with the offending field or line on malformed input.
Experiment parse_config(const std::string& config_path, const Overrides& overrides);

// Entry point used by the binary and by tests; returns the process exit code.
int run_cli(int argc, const char* const* argv);

extern const char* kCodeVersion;

}  // namespace acc::cli
