#include "mature/experiment.hpp"

#include <iomanip>
#include <sstream>

#include "mature/init.hpp"

namespace mature {

void DataConfig::validate() const {
  if (test_days <= 0) throw ContractError("test_days must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ContractError("validation_fraction must lie in [0, 1)");
  }
  if (filter_threshold < 0.0) throw ContractError("filter_threshold must be non-negative");
}

void to_json(nlohmann::json& j, const DataConfig& c) {
  j = nlohmann::json{{"test_days", c.test_days},
                     {"validation_fraction", c.validation_fraction},
                     {"filter_threshold", c.filter_threshold}};
}

void from_json(const nlohmann::json& j, DataConfig& c) {
  for (const auto& item : j.items()) {
    const auto& k = item.key();
    if (k != "test_days" && k != "validation_fraction" && k != "filter_threshold") {
      throw ContractError("unknown data key: " + k);
    }
  }
  c.test_days = j.value("test_days", c.test_days);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.filter_threshold = j.value("filter_threshold", c.filter_threshold);
}

PreparedData prepare_data(const ModePairDataset& dataset, Index tau, const DataConfig& config) {
  config.validate();
  dataset.validate();
  PreparedData out;
  out.config = config;
  FilterResult filtered = filter_low_demand(dataset.intensive, config.filter_threshold);
  out.data.intensive = std::move(filtered.series);
  out.data.sparse = dataset.sparse;
  out.dropped_intensive = std::move(filtered.dropped);

  const DemandSeries& axis = out.data.sparse;
  out.splits = split_by_days(axis.steps(), axis.steps_per_day(), config.test_days, config.validation_fraction);
  const SplitRange tr = out.splits.train;
  if (tr.size() == 0) throw ContractError("prepare: empty training split");

  out.norm_intensive = NormalizationState::fit(out.data.intensive.values.middleRows(tr.begin, tr.size()));
  out.norm_sparse = NormalizationState::fit(out.data.sparse.values.middleRows(tr.begin, tr.size()));
  const Matrix r = out.norm_intensive.apply(out.data.intensive.values);
  const Matrix s = out.norm_sparse.apply(out.data.sparse.values);

  out.train = WindowSet(r, s, out.splits.train, tau);
  if (out.splits.validation.size() > 0) out.validation = WindowSet(r, s, out.splits.validation, tau);
  out.test = WindowSet(r, s, out.splits.test, tau);
  return out;
}

bool TrainedModel::forecasts(Mode mode) const {
  return is_multi_task(spec.kind) || spec.mode == mode;
}

namespace {

// batch x (tau * N): row b lists the window's steps in order.
Matrix flatten_batch(const std::vector<Matrix>& steps) {
  const Index n = steps.front().rows();
  const Index batch = steps.front().cols();
  Matrix out(batch, n * static_cast<Index>(steps.size()));
  for (std::size_t t = 0; t < steps.size(); ++t) {
    out.middleCols(static_cast<Index>(t) * n, n) = steps[t].transpose();
  }
  return out;
}

const NormalizationState& norm_for(const TrainedModel& m, Mode mode) {
  const NormalizationState& n = mode == Mode::kIntensive ? m.norm_intensive : m.norm_sparse;
  if (n.min.size() == 0) throw ContractError("model has no normalization state for the " + to_string(mode) + " mode");
  return n;
}

}  // namespace

ForecastValues TrainedModel::predict(const WindowedBatch& batch, const std::vector<Index>& slots) const {
  ForecastValues out;
  auto assign = [&](Mode mode, Matrix values) {
    (mode == Mode::kIntensive ? out.intensive : out.sparse) = std::move(values);
  };
  switch (spec.kind) {
    case ModelKind::kHA: {
      if (!ha) throw ContractError("HA model is not fitted");
      if (slots.size() != batch.target_rows.size()) throw DimensionError("HA: one slot per target is required");
      Matrix values(ha->means().cols(), static_cast<Index>(slots.size()));
      for (std::size_t b = 0; b < slots.size(); ++b) values.col(static_cast<Index>(b)) = ha->predict(slots[b]);
      assign(spec.mode, std::move(values));
      break;
    }
    case ModelKind::kLR: {
      if (!linear) throw ContractError("LR model is not fitted");
      const auto& steps = spec.mode == Mode::kIntensive ? batch.inputs.intensive : batch.inputs.sparse;
      const Matrix scaled = linear->predict(flatten_batch(steps)).transpose();
      assign(spec.mode, norm_for(*this, spec.mode).invert_columns(scaled));
      break;
    }
    default: {
      if (!network) throw ContractError(to_string(spec.kind) + " model has no network");
      ForecastValues scaled = network->predict(batch.inputs);
      if (forecasts(Mode::kIntensive)) out.intensive = norm_for(*this, Mode::kIntensive).invert_columns(scaled.intensive);
      if (forecasts(Mode::kSparse)) out.sparse = norm_for(*this, Mode::kSparse).invert_columns(scaled.sparse);
      break;
    }
  }
  return out;
}

StationCounts model_counts(const ModelSpec& spec, StationCounts available) {
  if (is_multi_task(spec.kind)) return available;
  return spec.mode == Mode::kIntensive ? StationCounts{available.intensive, 0} : StationCounts{0, available.sparse};
}

TrainedModel fit_model(const ModelSpec& spec, const PreparedData& data, const TrainConfig& config,
                       std::uint64_t seed, TrainResult* history) {
  spec.validate();
  if (spec.tau != data.tau()) {
    throw ContractError("model tau " + std::to_string(spec.tau) + " differs from the windowed data's tau " +
                        std::to_string(data.tau()));
  }
  TrainedModel model;
  model.spec = spec;
  model.seed = seed;
  model.norm_intensive = data.norm_intensive;
  model.norm_sparse = data.norm_sparse;
  model.stations_intensive = data.data.intensive.station_ids();
  model.stations_sparse = data.data.sparse.station_ids();
  model.data_fingerprint = dataset_fingerprint(data.data);
  model.data_config = data.config;

  const DemandSeries& series = spec.mode == Mode::kIntensive ? data.data.intensive : data.data.sparse;
  switch (spec.kind) {
    case ModelKind::kHA: {
      const SplitRange tr = data.splits.train;
      model.ha = HistoricalAverage::fit(series.values.middleRows(tr.begin, tr.size()), series.slot_of_day(tr.begin),
                                        series.steps_per_day());
      break;
    }
    case ModelKind::kLR:
      model.linear = LinearBaseline::fit(data.train.flat_inputs(spec.mode), data.train.flat_targets(spec.mode));
      break;
    default: {
      Forecaster net = Forecaster::build(spec, model_counts(spec, data.counts()), seed);
      TrainConfig cfg = config;
      cfg.seed = seed;
      TrainResult result = train(net, data.train, data.validation, cfg);
      if (history) *history = std::move(result);
      model.network.emplace(std::move(net));
      break;
    }
  }
  return model;
}

std::string json_hash(const nlohmann::json& value) {
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << stable_hash(value.dump());
  return hex.str();
}

}  // namespace mature
