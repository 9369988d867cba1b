#include "mature/config.hpp"

#include <fstream>

namespace mature {

const std::vector<ModeProfile>& mode_profiles() {
  static const std::vector<ModeProfile> profiles{
      {"train", 0.002, 0.3},
      {"light_rail", 0.0008, 0.4},
      {"ferry", 0.0016, 0.4},
  };
  return profiles;
}

const ModeProfile& find_profile(const std::string& name) {
  for (const auto& p : mode_profiles()) {
    if (p.name == name) return p;
  }
  throw ContractError("unknown profile '" + name + "' (expected train, light_rail or ferry)");
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ContractError("config must be a JSON object");
  for (const auto& item : j.items()) {
    const auto& k = item.key();
    if (k != "profile" && k != "model" && k != "train" && k != "data" && k != "synthetic") {
      throw ContractError("unknown config key: " + k);
    }
  }
  ExperimentConfig c;
  c.profile = j.value("profile", c.profile);
  const ModeProfile& profile = find_profile(c.profile);
  c.model.gamma = profile.gamma;
  c.train.learning_rate = profile.learning_rate;

  if (j.contains("model")) mature::from_json(j.at("model"), c.model);
  if (j.contains("train")) mature::from_json(j.at("train"), c.train);
  if (j.contains("data")) {
    nlohmann::json data = j.at("data");
    if (data.contains("path")) {
      c.data_path = data.at("path").get<std::string>();
      data.erase("path");
    }
    mature::from_json(data, c.data);
  }
  if (j.contains("synthetic")) mature::from_json(j.at("synthetic"), c.synthetic);
  c.model.validate();
  c.train.validate();
  c.data.validate();
  c.synthetic.validate();
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json data = this->data;
  data["path"] = data_path;
  return {{"profile", profile}, {"model", model}, {"train", train}, {"data", data}, {"synthetic", synthetic}};
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

ExperimentConfig default_config() { return ExperimentConfig::from_json(nlohmann::json::object()); }

}  // namespace mature
