#pragma once

#include "sdfa/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdfa {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat JSON object with one dotted key per field, e.g. "weights.lambda1".
nlohmann::json to_json(const TrainConfig& config);
/// Every key must be known; missing keys keep the values of `base`.
TrainConfig train_config_from_json(const nlohmann::json& flat, const TrainConfig& base = paper_profile());

nlohmann::json to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const nlohmann::json& flat, const NetworkConfig& base = {});

nlohmann::json to_json(const SyntheticDatasetSpec& spec);
SyntheticDatasetSpec synthetic_spec_from_json(const nlohmann::json& flat, const SyntheticDatasetSpec& base = {});

/// Nested objects become dotted keys; arrays are kept as values.
nlohmann::json flatten(const nlohmann::json& doc);

/// Applies "key=value"; the value is parsed as JSON and falls back to a
/// plain string.
void apply_override(nlohmann::json& flat, const std::string& assignment);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace sdfa
