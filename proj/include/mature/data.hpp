#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mature/autodiff.hpp"
#include "mature/model.hpp"

namespace mature {

struct Station {
  std::string id;
  std::optional<double> lon;
  std::optional<double> lat;
};

/// Passenger counts of one transport mode: rows are time steps, columns stations.
struct DemandSeries {
  std::string mode;
  std::vector<Station> stations;
  Matrix values;               // T x N, non-negative
  double step_hours = 1.0;
  std::int64_t start = 0;      // UTC seconds of row 0
  std::vector<std::size_t> gap_counts;  // zero-filled bins per station

  Index steps() const { return values.rows(); }
  Index station_count() const { return values.cols(); }
  Index steps_per_day() const;
  std::int64_t timestamp(Index row) const;
  /// Position of `row` within its day, in steps.
  Index slot_of_day(Index row) const;
  std::vector<std::string> station_ids() const;
  /// Throws ContractError on inconsistent sizes or negative values.
  void validate() const;
};

struct ModePairDataset {
  DemandSeries intensive;
  DemandSeries sparse;

  /// Both series must share start, step and length.
  void validate() const;
};

// --- CSV ingestion ---------------------------------------------------------

struct CsvSchema {
  std::string timestamp_column = "timestamp";
  std::string station_column = "station_id";
  std::string value_column = "boardings";
  double step_hours = 1.0;
  std::string mode = "mode";
};

/// Reads (timestamp, station_id, value) rows, sums them into step_hours bins
/// and sorts stations by id. Missing (station, bin) pairs become 0.
/// Throws DataError naming the line of the first malformed row and
/// ContractError for an empty file.
DemandSeries ingest_csv(const std::string& path, const CsvSchema& schema = {});

/// Parses ISO-8601 "YYYY-MM-DD[T ]HH:MM[:SS][Z]" as UTC seconds.
std::optional<std::int64_t> parse_timestamp(std::string_view text);
std::string format_timestamp(std::int64_t seconds);

/// Writes `series` in the ingest schema (timestamp, station_id, boardings).
void export_csv(const DemandSeries& series, const std::string& path);

// --- station filter --------------------------------------------------------

struct FilterResult {
  DemandSeries series;
  std::vector<std::string> kept;
  std::vector<std::string> dropped;
};

/// Drops stations whose mean hourly demand is strictly below `threshold`.
FilterResult filter_low_demand(const DemandSeries& series, double threshold = 5.0);
/// Keeps exactly the listed stations, in the listed order.
DemandSeries select_stations(const DemandSeries& series, const std::vector<std::string>& ids);

// --- normalisation ---------------------------------------------------------

/// Per-station Min-Max scaling fitted on training rows only. Stations with
/// max == min map to 0 and invert back to their constant value.
struct NormalizationState {
  Vector min;
  Vector max;

  static NormalizationState fit(const Matrix& train_rows);
  /// T x N rows.
  Matrix apply(const Matrix& rows) const;
  Matrix invert(const Matrix& rows) const;
  /// Stations x batch columns (model output layout).
  Matrix invert_columns(const Matrix& columns) const;
};

void to_json(nlohmann::json& j, const NormalizationState& s);
void from_json(const nlohmann::json& j, NormalizationState& s);

// --- splits and windows ----------------------------------------------------

struct SplitRange {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
};

struct DataSplits {
  SplitRange train;
  SplitRange validation;
  SplitRange test;
};

/// The last `test_days` whole days form the test split; the preceding days
/// are divided chronologically, the final `validation_fraction` of them
/// (rounded to whole days) becoming validation.
DataSplits split_by_days(Index steps, Index steps_per_day, Index test_days, double validation_fraction);

struct WindowedBatch {
  WindowInputs inputs;            // tau matrices of stations x B per mode
  Matrix targets_intensive;       // N_R x B
  Matrix targets_sparse;          // N_S x B
  std::vector<Index> target_rows; // absolute series rows of the targets
};

/// One-step-ahead windows that never leave a split: input rows t .. t+tau-1,
/// target row t+tau. A split of length L yields L - tau windows.
class WindowSet {
 public:
  WindowSet() = default;
  /// Either matrix may be empty when a model ignores that mode.
  WindowSet(const Matrix& intensive, const Matrix& sparse, SplitRange range, Index tau);

  Index size() const { return count_; }
  Index tau() const { return tau_; }
  Index target_row(Index window) const { return range_.begin + tau_ + window; }
  SplitRange range() const { return range_; }

  WindowedBatch batch(std::span<const Index> windows) const;
  WindowedBatch all() const;

  /// Flattened inputs of one mode, windows x (tau * N); row i holds steps in order.
  Matrix flat_inputs(Mode mode) const;
  /// windows x N targets of one mode.
  Matrix flat_targets(Mode mode) const;

 private:
  Matrix intensive_;  // rows of this split only
  Matrix sparse_;
  SplitRange range_;
  Index tau_ = 0;
  Index count_ = 0;
};

// --- dataset cache ---------------------------------------------------------

nlohmann::json dataset_to_json(const ModePairDataset& data);
ModePairDataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const ModePairDataset& data, const std::string& path);
ModePairDataset load_dataset(const std::string& path);
/// Stable hash of dimensions, station ids, step, start and raw values.
std::string dataset_fingerprint(const ModePairDataset& data);

}  // namespace mature
