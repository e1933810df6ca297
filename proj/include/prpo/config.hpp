#pragma once

#include <string>

#include "prpo/env.hpp"
#include "prpo/trainer.hpp"

namespace prpo {

// Flat configuration: dotted keys, one `key = value` per line, '#' comments.
// Every field has a default; an empty file is the paper-default run
// (G=8, T=4, alpha=1.0, beta=0.005, l_max=1024, batch=16).
struct RunConfig {
    EpisodeSpec env;
    TrainConfig train;
    uint64_t master_seed = 0;
    std::string run_name = "run";
    std::string checkpoint;  // policy checkpoint consumed by the scaling command
};

// Applies one override; throws ConfigError naming the offending key/value.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig parse_run_config(std::istream& is);
RunConfig load_run_config(const std::string& path);

// Canonical echo of every field, one per line, in override syntax.
std::string run_config_to_string(const RunConfig& cfg);

}  // namespace prpo
