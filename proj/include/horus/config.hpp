#pragma once

#include "horus/sim.hpp"

#include <json.hpp>

#include <string>

namespace horus {

struct RunConfig {
  SimConfig sim;
  std::string output_dir = "horus_out";
};

/// Parses a JSON run configuration. Every key is optional (defaults from SimConfig); unknown keys,
/// wrong types and out-of-range values raise ConfigError naming the JSON path, or the line and
/// column for syntax errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Full configuration with every field spelled out; parse_config(dump) reproduces it.
nlohmann::json config_to_json(const RunConfig& cfg);

}  // namespace horus
