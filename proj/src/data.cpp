#include "mature/data.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "mature/init.hpp"

namespace mature {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::int64_t step_seconds(double step_hours) {
  return static_cast<std::int64_t>(std::llround(step_hours * 3600.0));
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

// --- DemandSeries ----------------------------------------------------------

Index DemandSeries::steps_per_day() const {
  const double per_day = 24.0 / step_hours;
  return std::max<Index>(1, static_cast<Index>(std::llround(per_day)));
}

std::int64_t DemandSeries::timestamp(Index row) const { return start + row * step_seconds(step_hours); }

Index DemandSeries::slot_of_day(Index row) const {
  const std::int64_t seconds_in_day = ((timestamp(row) % 86400) + 86400) % 86400;
  return static_cast<Index>(seconds_in_day / step_seconds(step_hours)) % steps_per_day();
}

std::vector<std::string> DemandSeries::station_ids() const {
  std::vector<std::string> ids;
  ids.reserve(stations.size());
  for (const auto& s : stations) ids.push_back(s.id);
  return ids;
}

void DemandSeries::validate() const {
  if (static_cast<Index>(stations.size()) != values.cols()) {
    throw ContractError("series '" + mode + "': " + std::to_string(stations.size()) +
                        " station ids but " + std::to_string(values.cols()) + " value columns");
  }
  if (!(step_hours > 0.0)) throw ContractError("series '" + mode + "': step_hours must be positive");
  if (values.size() > 0 && (values.array() < 0.0).any()) {
    throw ContractError("series '" + mode + "': negative demand values");
  }
  if (!values.allFinite()) throw ContractError("series '" + mode + "': non-finite demand values");
}

void ModePairDataset::validate() const {
  intensive.validate();
  sparse.validate();
  if (intensive.start != sparse.start || intensive.step_hours != sparse.step_hours ||
      intensive.steps() != sparse.steps()) {
    throw ContractError("intensive and sparse series must cover the same time axis");
  }
}

// --- timestamps ------------------------------------------------------------

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  std::string s(trim(text));
  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.pop_back();
  if (s.size() > 10 && (s[10] == 'T' || s[10] == 't')) s[10] = ' ';
  for (const char* fmt : {"%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"}) {
    std::tm tm{};
    std::istringstream in(s);
    in >> std::get_time(&tm, fmt);
    if (in.fail()) continue;
    in >> std::ws;
    if (!in.eof()) continue;
    return static_cast<std::int64_t>(timegm(&tm));
  }
  return std::nullopt;
}

std::string format_timestamp(std::int64_t seconds) {
  const std::time_t t = static_cast<std::time_t>(seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S");
  return os.str();
}

// --- CSV -------------------------------------------------------------------

DemandSeries ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  if (!(schema.step_hours > 0.0)) throw ContractError("ingest_csv: step_hours must be positive");

  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw ContractError("ingest_csv: " + path + " is empty");
  ++line_no;
  const auto header = split_fields(line);
  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw DataError("header lacks column '" + name + "'", line_no);
  };
  const std::size_t ts_col = column(schema.timestamp_column);
  const std::size_t st_col = column(schema.station_column);
  const std::size_t val_col = column(schema.value_column);
  std::optional<std::size_t> lon_col, lat_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "lon") lon_col = i;
    if (header[i] == "lat") lat_col = i;
  }

  struct Row {
    std::int64_t time;
    std::string station;
    double value;
  };
  std::vector<Row> rows;
  std::map<std::string, Station> stations;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError("expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()), line_no);
    }
    const auto ts = parse_timestamp(fields[ts_col]);
    if (!ts) throw DataError("unparseable timestamp '" + std::string(fields[ts_col]) + "'", line_no);
    const std::string station(fields[st_col]);
    if (station.empty()) throw DataError("empty station id", line_no);
    const auto value = parse_double(fields[val_col]);
    if (!value || *value < 0.0) {
      throw DataError("invalid " + schema.value_column + " value '" + std::string(fields[val_col]) + "'",
                      line_no);
    }
    auto& st = stations[station];
    st.id = station;
    if (lon_col && !fields[*lon_col].empty()) st.lon = parse_double(fields[*lon_col]);
    if (lat_col && !fields[*lat_col].empty()) st.lat = parse_double(fields[*lat_col]);
    rows.push_back({*ts, station, *value});
  }
  if (rows.empty()) throw ContractError("ingest_csv: " + path + " has no data rows");

  const std::int64_t step = step_seconds(schema.step_hours);
  std::int64_t first = rows.front().time;
  std::int64_t last = first;
  for (const auto& r : rows) {
    first = std::min(first, r.time);
    last = std::max(last, r.time);
  }
  const std::int64_t first_bin = floor_div(first, step);
  const std::int64_t bins = floor_div(last, step) - first_bin + 1;

  DemandSeries series;
  series.mode = schema.mode;
  series.step_hours = schema.step_hours;
  series.start = first_bin * step;
  std::map<std::string, Index> column_of;
  for (const auto& [id, st] : stations) {
    column_of[id] = static_cast<Index>(series.stations.size());
    series.stations.push_back(st);
  }
  series.values = Matrix::Zero(bins, static_cast<Index>(series.stations.size()));
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> seen =
      Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(series.values.rows(), series.values.cols(), false);
  for (const auto& r : rows) {
    const Index t = static_cast<Index>(floor_div(r.time, step) - first_bin);
    const Index c = column_of.at(r.station);
    series.values(t, c) += r.value;
    seen(t, c) = true;
  }
  series.gap_counts.resize(series.stations.size());
  for (Index c = 0; c < seen.cols(); ++c) {
    series.gap_counts[static_cast<std::size_t>(c)] = static_cast<std::size_t>((!seen.col(c)).count());
  }
  return series;
}

void export_csv(const DemandSeries& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "timestamp,station_id,boardings\n";
  out << std::setprecision(17);
  for (Index t = 0; t < series.steps(); ++t) {
    const std::string ts = format_timestamp(series.timestamp(t));
    for (Index c = 0; c < series.station_count(); ++c) {
      out << ts << ',' << series.stations[static_cast<std::size_t>(c)].id << ',' << series.values(t, c) << '\n';
    }
  }
  if (!out) throw DataError("write failed for " + path);
}

// --- filter ----------------------------------------------------------------

DemandSeries select_stations(const DemandSeries& series, const std::vector<std::string>& ids) {
  DemandSeries out = series;
  out.stations.clear();
  out.gap_counts.clear();
  out.values.resize(series.steps(), static_cast<Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto it = std::find_if(series.stations.begin(), series.stations.end(),
                                 [&](const Station& s) { return s.id == ids[k]; });
    if (it == series.stations.end()) {
      throw ContractError("series '" + series.mode + "' has no station '" + ids[k] + "'");
    }
    const auto c = static_cast<std::size_t>(it - series.stations.begin());
    out.stations.push_back(*it);
    if (c < series.gap_counts.size()) out.gap_counts.push_back(series.gap_counts[c]);
    out.values.col(static_cast<Index>(k)) = series.values.col(static_cast<Index>(c));
  }
  return out;
}

FilterResult filter_low_demand(const DemandSeries& series, double threshold) {
  if (series.steps() == 0 || series.station_count() == 0) {
    throw ContractError("filter_low_demand: empty series");
  }
  FilterResult result;
  const double hours = static_cast<double>(series.steps()) * series.step_hours;
  for (Index c = 0; c < series.station_count(); ++c) {
    const double hourly = series.values.col(c).sum() / hours;
    const std::string& id = series.stations[static_cast<std::size_t>(c)].id;
    (hourly < threshold ? result.dropped : result.kept).push_back(id);
  }
  if (result.kept.empty()) {
    throw ContractError("filter_low_demand: every station of '" + series.mode +
                        "' falls below threshold " + std::to_string(threshold) + "; lower the threshold");
  }
  result.series = select_stations(series, result.kept);
  return result;
}

// --- normalisation ---------------------------------------------------------

NormalizationState NormalizationState::fit(const Matrix& train_rows) {
  if (train_rows.rows() == 0) throw ContractError("normalization: no training rows");
  NormalizationState s;
  s.min = train_rows.colwise().minCoeff().transpose();
  s.max = train_rows.colwise().maxCoeff().transpose();
  return s;
}

Matrix NormalizationState::apply(const Matrix& rows) const {
  if (rows.cols() != min.size()) {
    throw DimensionError("normalization: fitted on " + std::to_string(min.size()) + " stations, got " +
                         std::to_string(rows.cols()));
  }
  Matrix out(rows.rows(), rows.cols());
  for (Index c = 0; c < rows.cols(); ++c) {
    const Scalar range = max(c) - min(c);
    if (range > 0.0) {
      out.col(c) = (rows.col(c).array() - min(c)) / range;
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

Matrix NormalizationState::invert(const Matrix& rows) const {
  if (rows.cols() != min.size()) {
    throw DimensionError("normalization: fitted on " + std::to_string(min.size()) + " stations, got " +
                         std::to_string(rows.cols()));
  }
  Matrix out(rows.rows(), rows.cols());
  for (Index c = 0; c < rows.cols(); ++c) {
    out.col(c) = rows.col(c).array() * (max(c) - min(c)) + min(c);
  }
  return out;
}

Matrix NormalizationState::invert_columns(const Matrix& columns) const {
  return invert(columns.transpose()).transpose();
}

void to_json(nlohmann::json& j, const NormalizationState& s) {
  j = nlohmann::json{{"min", std::vector<double>(s.min.data(), s.min.data() + s.min.size())},
                     {"max", std::vector<double>(s.max.data(), s.max.data() + s.max.size())}};
}

void from_json(const nlohmann::json& j, NormalizationState& s) {
  const auto lo = j.at("min").get<std::vector<double>>();
  const auto hi = j.at("max").get<std::vector<double>>();
  if (lo.size() != hi.size()) throw DataError("normalization state: min/max length mismatch");
  s.min = Eigen::Map<const Vector>(lo.data(), static_cast<Index>(lo.size()));
  s.max = Eigen::Map<const Vector>(hi.data(), static_cast<Index>(hi.size()));
}

// --- splits and windows ----------------------------------------------------

DataSplits split_by_days(Index steps, Index steps_per_day, Index test_days, double validation_fraction) {
  if (steps_per_day <= 0 || test_days < 0) throw ContractError("split_by_days: bad day geometry");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ContractError("split_by_days: validation_fraction must lie in [0, 1)");
  }
  const Index test_len = test_days * steps_per_day;
  if (test_len >= steps) {
    throw ContractError("split_by_days: " + std::to_string(test_days) + " test days leave no training data");
  }
  const Index rest = steps - test_len;
  const Index rest_days = rest / steps_per_day;
  const auto val_days = static_cast<Index>(std::llround(validation_fraction * static_cast<double>(rest_days)));
  const Index val_len = std::min(val_days * steps_per_day, rest);
  DataSplits s;
  s.train = {0, rest - val_len};
  s.validation = {rest - val_len, rest};
  s.test = {rest, steps};
  return s;
}

WindowSet::WindowSet(const Matrix& intensive, const Matrix& sparse, SplitRange range, Index tau)
    : range_(range), tau_(tau) {
  if (tau <= 0) throw ContractError("window: tau must be positive");
  if (range.size() < tau + 1) {
    throw ContractError("window: split of " + std::to_string(range.size()) + " steps is shorter than tau + 1 = " +
                        std::to_string(tau + 1));
  }
  auto slice = [&](const Matrix& m) -> Matrix {
    if (m.size() == 0) return Matrix();
    if (range.end > m.rows()) throw IndexError("window: split range exceeds series length");
    return m.middleRows(range.begin, range.size());
  };
  intensive_ = slice(intensive);
  sparse_ = slice(sparse);
  count_ = range.size() - tau;
}

WindowedBatch WindowSet::batch(std::span<const Index> windows) const {
  const auto B = static_cast<Index>(windows.size());
  WindowedBatch out;
  out.target_rows.reserve(windows.size());
  for (Index w : windows) {
    if (w < 0 || w >= count_) throw IndexError("window index " + std::to_string(w) + " out of range");
    out.target_rows.push_back(target_row(w));
  }
  auto fill = [&](const Matrix& m, std::vector<Matrix>& steps, Matrix& targets) {
    if (m.size() == 0) return;
    steps.assign(static_cast<std::size_t>(tau_), Matrix(m.cols(), B));
    targets.resize(m.cols(), B);
    for (Index b = 0; b < B; ++b) {
      const Index w = windows[static_cast<std::size_t>(b)];
      for (Index t = 0; t < tau_; ++t) steps[static_cast<std::size_t>(t)].col(b) = m.row(w + t).transpose();
      targets.col(b) = m.row(w + tau_).transpose();
    }
  };
  fill(intensive_, out.inputs.intensive, out.targets_intensive);
  fill(sparse_, out.inputs.sparse, out.targets_sparse);
  return out;
}

WindowedBatch WindowSet::all() const {
  std::vector<Index> idx(static_cast<std::size_t>(count_));
  for (Index i = 0; i < count_; ++i) idx[static_cast<std::size_t>(i)] = i;
  return batch(idx);
}

Matrix WindowSet::flat_inputs(Mode mode) const {
  const Matrix& m = mode == Mode::kIntensive ? intensive_ : sparse_;
  const Index n = m.cols();
  Matrix out(count_, tau_ * n);
  for (Index w = 0; w < count_; ++w) {
    for (Index t = 0; t < tau_; ++t) out.block(w, t * n, 1, n) = m.row(w + t);
  }
  return out;
}

Matrix WindowSet::flat_targets(Mode mode) const {
  const Matrix& m = mode == Mode::kIntensive ? intensive_ : sparse_;
  return m.middleRows(tau_, count_);
}

// --- dataset cache ---------------------------------------------------------

namespace {

nlohmann::json series_to_json(const DemandSeries& s) {
  nlohmann::json stations = nlohmann::json::array();
  for (const auto& st : s.stations) {
    nlohmann::json j{{"id", st.id}};
    if (st.lon) j["lon"] = *st.lon;
    if (st.lat) j["lat"] = *st.lat;
    stations.push_back(std::move(j));
  }
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(s.values.size()));
  for (Index t = 0; t < s.values.rows(); ++t) {
    for (Index c = 0; c < s.values.cols(); ++c) values.push_back(s.values(t, c));
  }
  return {{"mode", s.mode},       {"step_hours", s.step_hours}, {"start", s.start},
          {"steps", s.steps()},   {"stations", stations},       {"gap_counts", s.gap_counts},
          {"values", values}};
}

DemandSeries series_from_json(const nlohmann::json& j) {
  DemandSeries s;
  s.mode = j.at("mode").get<std::string>();
  s.step_hours = j.at("step_hours").get<double>();
  s.start = j.at("start").get<std::int64_t>();
  const auto steps = j.at("steps").get<Index>();
  for (const auto& st : j.at("stations")) {
    Station station;
    station.id = st.at("id").get<std::string>();
    if (st.contains("lon")) station.lon = st.at("lon").get<double>();
    if (st.contains("lat")) station.lat = st.at("lat").get<double>();
    s.stations.push_back(std::move(station));
  }
  if (j.contains("gap_counts")) s.gap_counts = j.at("gap_counts").get<std::vector<std::size_t>>();
  const auto values = j.at("values").get<std::vector<double>>();
  const auto n = static_cast<Index>(s.stations.size());
  if (static_cast<Index>(values.size()) != steps * n) {
    throw DataError("dataset: series '" + s.mode + "' holds " + std::to_string(values.size()) +
                    " values, expected " + std::to_string(steps * n));
  }
  s.values.resize(steps, n);
  for (Index t = 0; t < steps; ++t) {
    for (Index c = 0; c < n; ++c) s.values(t, c) = values[static_cast<std::size_t>(t * n + c)];
  }
  return s;
}

}  // namespace

nlohmann::json dataset_to_json(const ModePairDataset& data) {
  return {{"format", "mature-dataset"},
          {"version", 1},
          {"intensive", series_to_json(data.intensive)},
          {"sparse", series_to_json(data.sparse)}};
}

ModePairDataset dataset_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mature-dataset") throw DataError("not a mature dataset file");
  ModePairDataset d;
  d.intensive = series_from_json(j.at("intensive"));
  d.sparse = series_from_json(j.at("sparse"));
  d.validate();
  return d;
}

void save_dataset(const ModePairDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << dataset_to_json(data).dump() << '\n';
  if (!out) throw DataError("write failed for " + path);
}

ModePairDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return dataset_from_json(j);
}

std::string dataset_fingerprint(const ModePairDataset& data) {
  std::ostringstream os;
  for (const auto* s : {&data.intensive, &data.sparse}) {
    os << s->mode << '|' << s->steps() << '|' << s->step_hours << '|' << s->start << '|';
    for (const auto& st : s->stations) os << st.id << ',';
    os.write(reinterpret_cast<const char*>(s->values.data()),
             static_cast<std::streamsize>(s->values.size() * sizeof(Scalar)));
    os << ';';
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << stable_hash(os.str());
  return hex.str();
}

}  // namespace mature
