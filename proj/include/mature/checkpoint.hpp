#pragma once

#include <string>

#include <json.hpp>

#include "mature/experiment.hpp"

namespace mature {

/// Checkpoint layout (JSON):
///   format, version, spec, spec_hash, seed, data_fingerprint,
///   stations {intensive, sparse}, normalization {intensive, sparse},
///   parameters [{name, rows, cols, values (row-major)}], ha, linear
/// Doubles are written with round-trip precision, so save/load is bit-exact.
nlohmann::json checkpoint_to_json(const TrainedModel& model);

/// Rebuilds the model from its spec and seed, then overwrites every
/// parameter. Throws SpecError when the stored spec hash does not match the
/// stored spec, or a parameter is missing or misshapen.
TrainedModel checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

std::string spec_hash(const ModelSpec& spec);

}  // namespace mature
