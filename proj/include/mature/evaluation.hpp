#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mature/experiment.hpp"

namespace mature {

/// Mean absolute error over every entry. Throws ContractError on empty input,
/// DimensionError on a shape mismatch.
double mae(const Matrix& pred, const Matrix& truth);
double rmse(const Matrix& pred, const Matrix& truth);

struct StationMetrics {
  std::string station;
  double mae = 0.0;
  double rmse = 0.0;
};

struct ModeMetrics {
  Mode mode = Mode::kSparse;
  double mae = 0.0;
  double rmse = 0.0;
  std::vector<StationMetrics> stations;
};

struct MetricsReport {
  std::string spec;  // label of the evaluated spec
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<ModeMetrics> modes;

  const ModeMetrics* find(Mode mode) const;
};

struct PredictionRow {
  std::int64_t timestamp = 0;
  std::string station;
  double truth = 0.0;
  double prediction = 0.0;
};

struct Evaluation {
  MetricsReport report;
  std::vector<PredictionRow> predictions;
};

/// Runs `model` over every test window, maps predictions back to raw units
/// and scores them against the raw series.
Evaluation evaluate(const TrainedModel& model, const PreparedData& data, const std::string& label = {});

/// Columns: spec, mode, seed, MAE, RMSE.
void write_report_csv(const std::vector<MetricsReport>& reports, const std::string& path);
/// Columns: timestamp, station_id, truth, prediction.
void write_predictions_csv(const std::vector<PredictionRow>& rows, const std::string& path);

// --- multi-run comparison ---------------------------------------------------

struct LabeledSpec {
  std::string label;
  ModelSpec spec;
};

/// One (spec, seed) run.
struct RunRecord {
  std::string label;
  std::uint64_t seed = 0;
  bool ok = false;           // false when the run threw
  bool diverged = false;     // training stopped on a non-finite value
  std::string error;
  MetricsReport report;
  TrainResult history;
};

struct SummaryRow {
  std::string label;
  Mode mode = Mode::kSparse;
  double mae_mean = 0.0;
  double mae_std = 0.0;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  Index runs = 0;
  Index failures = 0;
};

struct ComparisonTable {
  std::vector<RunRecord> runs;  // spec-major, then seed, in request order
  std::vector<SummaryRow> rows;

  const SummaryRow* find(const std::string& label, Mode mode) const;
  std::vector<MetricsReport> reports() const;
  /// Columns: spec, mode, MAE_mean, MAE_std, RMSE_mean, RMSE_std, runs, failures.
  void write_csv(const std::string& path) const;
  std::string format() const;
};

/// Trains and evaluates every spec with every seed. Runs are spread over
/// `jobs` threads; results are assembled in request order. A failing or
/// diverging run is recorded in the table, not thrown.
ComparisonTable compare(const std::vector<LabeledSpec>& specs, const ModePairDataset& dataset,
                        const DataConfig& data_config, const TrainConfig& config,
                        const std::vector<std::uint64_t>& seeds, int jobs = 1);

/// Parses "start:stop:step" (inclusive stop) or a comma-separated list.
std::vector<double> parse_grid(const std::string& text);

struct SweepRow {
  double gamma = 0.0;
  SummaryRow summary;
};

struct SweepTable {
  ComparisonTable comparison;
  std::vector<SweepRow> rows;  // gamma-major, then mode

  /// Columns: gamma, mode, MAE_mean, MAE_std, RMSE_mean, RMSE_std, runs, failures.
  void write_csv(const std::string& path) const;
};

/// One run of `base` per (gamma, seed). Gamma values are sorted and
/// de-duplicated; values outside [0, 1] throw ContractError.
SweepTable sweep_gamma(std::vector<double> gammas, const ModelSpec& base, const ModePairDataset& dataset,
                       const DataConfig& data_config, const TrainConfig& config,
                       const std::vector<std::uint64_t>& seeds, int jobs = 1);

std::string gamma_label(double gamma);

}  // namespace mature
