#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mature/experiment.hpp"
#include "mature/synthetic.hpp"

namespace mature {

/// Learning rate and gamma presets per sparse transport mode.
struct ModeProfile {
  std::string name;
  double learning_rate;
  double gamma;
};

const std::vector<ModeProfile>& mode_profiles();
/// Throws ContractError for an unknown profile name.
const ModeProfile& find_profile(const std::string& name);

/// File layout:
///   {
///     "profile": "train" | "light_rail" | "ferry",
///     "model":   { kind, hidden, tau, segments, segment_size, align_dim,
///                  gamma, epsilon, mode, mlp_layers },
///     "train":   { learning_rate, weight_decay, batch_size, epochs, seed,
///                  patience, clip_norm, shuffle },
///     "data":    { path, test_days, validation_fraction, filter_threshold },
///     "synthetic": { ...SyntheticConfig keys... }
///   }
/// Every key is optional. learning_rate and gamma default to the profile's.
/// Unknown keys at any level are rejected.
struct ExperimentConfig {
  std::string profile = "train";
  ModelSpec model;
  TrainConfig train;
  DataConfig data;
  std::string data_path;
  SyntheticConfig synthetic;

  /// The config with profile defaults applied to everything not set explicitly.
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig default_config();

}  // namespace mature
