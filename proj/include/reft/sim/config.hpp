// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "reft/fl/experiment.hpp"

namespace reft::sim {

struct SimConfig {
    fl::ExperimentConfig experiment;
    std::string output_dir; // empty: must come from --out

    bool operator==(const SimConfig &) const = default;
};

// Parses and validates a JSON config. Unknown keys are rejected. On failure
// throws ConfigError whose message lists every violation, one per line, each
// prefixed with "<source>:<line>:" when the key can be located in the text.
SimConfig parse_config_text(std::string_view text, const std::string &source = "<config>");
SimConfig parse_config(const std::filesystem::path &path);

// Every field with defaults filled in; parse_config_text(dump) gives back an
// equal SimConfig.
nlohmann::json resolved_config(const SimConfig &config);

} // namespace reft::sim
