#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mature/baselines.hpp"
#include "mature/data.hpp"
#include "mature/model.hpp"
#include "mature/training.hpp"

namespace mature {

struct DataConfig {
  Index test_days = 27;
  double validation_fraction = 0.2;
  double filter_threshold = 5.0;  // applied to the intensive mode only

  void validate() const;
};

void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);

/// A dataset after filtering, splitting, scaling and windowing.
struct PreparedData {
  DataConfig config;
  ModePairDataset data;  // filtered, raw units
  std::vector<std::string> dropped_intensive;
  NormalizationState norm_intensive;
  NormalizationState norm_sparse;
  DataSplits splits;
  WindowSet train;
  WindowSet validation;  // empty when the validation split is empty
  WindowSet test;

  Index tau() const { return train.tau(); }
  StationCounts counts() const {
    return {data.intensive.station_count(), data.sparse.station_count()};
  }
};

/// Throws ContractError if the two modes do not share a time axis or a split
/// is too short for `tau`.
PreparedData prepare_data(const ModePairDataset& dataset, Index tau, const DataConfig& config);

/// A fitted forecaster of any kind together with what it needs to map
/// between raw and scaled units.
struct TrainedModel {
  ModelSpec spec;
  std::uint64_t seed = 0;
  std::optional<Forecaster> network;
  std::optional<HistoricalAverage> ha;
  std::optional<LinearBaseline> linear;
  NormalizationState norm_intensive;
  NormalizationState norm_sparse;
  std::vector<std::string> stations_intensive;
  std::vector<std::string> stations_sparse;
  std::string data_fingerprint;
  DataConfig data_config;  // how the training data was prepared

  bool forecasts(Mode mode) const;
  /// Raw-unit predictions for `batch`; `slots` gives the slot of day of each
  /// target (used by HA). Throws ContractError if a needed normalization
  /// state is missing.
  ForecastValues predict(const WindowedBatch& batch, const std::vector<Index>& slots) const;
};

/// Station counts a model of `spec` is built with: both modes for multi-task
/// kinds, only the target mode otherwise.
StationCounts model_counts(const ModelSpec& spec, StationCounts available);

/// Fits `spec` on the training split. HA and LR are solved in closed form;
/// network kinds are trained with `config` (its seed replaced by `seed`).
TrainedModel fit_model(const ModelSpec& spec, const PreparedData& data, const TrainConfig& config,
                       std::uint64_t seed, TrainResult* history = nullptr);

/// Hex digest of a JSON value's compact dump.
std::string json_hash(const nlohmann::json& value);

}  // namespace mature
