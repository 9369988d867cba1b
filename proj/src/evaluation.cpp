#include "mature/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

namespace mature {

namespace {

void check_pair(const Matrix& pred, const Matrix& truth, const char* what) {
  if (pred.size() == 0 || truth.size() == 0) throw ContractError(std::string(what) + ": empty input");
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw DimensionError(std::string(what) + ": prediction " + shape_string(pred) + " vs truth " + shape_string(truth));
  }
}

constexpr Index kEvalBatch = 256;

double mean_of(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::vector<Mode> forecast_modes(const ModelSpec& spec) {
  if (is_multi_task(spec.kind)) return {Mode::kIntensive, Mode::kSparse};
  return {spec.mode};
}

std::string csv_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

double mae(const Matrix& pred, const Matrix& truth) {
  check_pair(pred, truth, "mae");
  return (pred - truth).cwiseAbs().mean();
}

double rmse(const Matrix& pred, const Matrix& truth) {
  check_pair(pred, truth, "rmse");
  return std::sqrt((pred - truth).array().square().mean());
}

const ModeMetrics* MetricsReport::find(Mode mode) const {
  for (const auto& m : modes) {
    if (m.mode == mode) return &m;
  }
  return nullptr;
}

Evaluation evaluate(const TrainedModel& model, const PreparedData& data, const std::string& label) {
  if (model.norm_intensive.min.size() == 0 || model.norm_sparse.min.size() == 0) {
    throw ContractError("evaluate: model carries no normalization state");
  }
  if (model.stations_intensive != data.data.intensive.station_ids() ||
      model.stations_sparse != data.data.sparse.station_ids()) {
    throw ContractError("evaluate: model stations differ from the dataset's");
  }
  auto same = [](const NormalizationState& a, const NormalizationState& b) {
    return a.min.size() == b.min.size() && a.min == b.min && a.max == b.max;
  };
  if (!same(model.norm_intensive, data.norm_intensive) || !same(model.norm_sparse, data.norm_sparse)) {
    throw ContractError("evaluate: the data was scaled with a different normalization than the model's");
  }
  const WindowSet& test = data.test;
  const DemandSeries& axis = data.data.sparse;
  const std::vector<Mode> modes = forecast_modes(model.spec);

  std::map<Mode, Matrix> preds;
  std::map<Mode, Matrix> truths;
  for (Mode mode : modes) {
    const DemandSeries& s = mode == Mode::kIntensive ? data.data.intensive : data.data.sparse;
    preds[mode] = Matrix(s.station_count(), test.size());
    truths[mode] = Matrix(s.station_count(), test.size());
  }
  std::vector<Index> idx(static_cast<std::size_t>(test.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index begin = 0; begin < test.size(); begin += kEvalBatch) {
    const Index count = std::min(kEvalBatch, test.size() - begin);
    const WindowedBatch batch =
        test.batch(std::span<const Index>(idx).subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(count)));
    std::vector<Index> slots;
    for (Index row : batch.target_rows) slots.push_back(axis.slot_of_day(row));
    const ForecastValues values = model.predict(batch, slots);
    for (Mode mode : modes) {
      const DemandSeries& s = mode == Mode::kIntensive ? data.data.intensive : data.data.sparse;
      preds[mode].middleCols(begin, count) = mode == Mode::kIntensive ? values.intensive : values.sparse;
      for (Index b = 0; b < count; ++b) {
        truths[mode].col(begin + b) = s.values.row(batch.target_rows[static_cast<std::size_t>(b)]).transpose();
      }
    }
  }

  Evaluation out;
  out.report.spec = label.empty() ? to_string(model.spec.kind) : label;
  out.report.seed = model.seed;
  for (Mode mode : modes) {
    const DemandSeries& s = mode == Mode::kIntensive ? data.data.intensive : data.data.sparse;
    const Matrix& p = preds[mode];
    const Matrix& t = truths[mode];
    ModeMetrics m;
    m.mode = mode;
    m.mae = mae(p, t);
    m.rmse = rmse(p, t);
    for (Index n = 0; n < p.rows(); ++n) {
      m.stations.push_back({s.stations[static_cast<std::size_t>(n)].id, mae(p.row(n), t.row(n)),
                            rmse(p.row(n), t.row(n))});
    }
    out.report.modes.push_back(std::move(m));
    for (Index w = 0; w < p.cols(); ++w) {
      const std::int64_t ts = s.timestamp(test.target_row(w));
      for (Index n = 0; n < p.rows(); ++n) {
        out.predictions.push_back({ts, s.stations[static_cast<std::size_t>(n)].id, t(n, w), p(n, w)});
      }
    }
  }
  return out;
}

void write_report_csv(const std::vector<MetricsReport>& reports, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "spec,mode,seed,MAE,RMSE\n";
  for (const auto& r : reports) {
    for (const auto& m : r.modes) {
      out << r.spec << ',' << to_string(m.mode) << ',' << r.seed << ',' << csv_double(m.mae) << ','
          << csv_double(m.rmse) << '\n';
    }
  }
}

void write_predictions_csv(const std::vector<PredictionRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "timestamp,station_id,truth,prediction\n";
  for (const auto& r : rows) {
    out << format_timestamp(r.timestamp) << ',' << r.station << ',' << csv_double(r.truth) << ','
        << csv_double(r.prediction) << '\n';
  }
}

const SummaryRow* ComparisonTable::find(const std::string& label, Mode mode) const {
  for (const auto& r : rows) {
    if (r.label == label && r.mode == mode) return &r;
  }
  return nullptr;
}

std::vector<MetricsReport> ComparisonTable::reports() const {
  std::vector<MetricsReport> out;
  for (const auto& run : runs) {
    if (run.ok) out.push_back(run.report);
  }
  return out;
}

namespace {

void write_summary_header(std::ostream& out) { out << "MAE_mean,MAE_std,RMSE_mean,RMSE_std,runs,failures\n"; }

void write_summary_values(std::ostream& out, const SummaryRow& r) {
  out << csv_double(r.mae_mean) << ',' << csv_double(r.mae_std) << ',' << csv_double(r.rmse_mean) << ','
      << csv_double(r.rmse_std) << ',' << r.runs << ',' << r.failures << '\n';
}

}  // namespace

void ComparisonTable::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "spec,mode,";
  write_summary_header(out);
  for (const auto& r : rows) {
    out << r.label << ',' << to_string(r.mode) << ',';
    write_summary_values(out, r);
  }
}

std::string ComparisonTable::format() const {
  std::size_t width = 4;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "spec" << "  " << std::setw(9) << "mode" << std::right
     << std::setw(22) << "MAE" << std::setw(22) << "RMSE" << std::setw(6) << "runs" << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    std::ostringstream mae_cell;
    std::ostringstream rmse_cell;
    mae_cell << std::fixed << std::setprecision(4) << r.mae_mean << " +- " << r.mae_std;
    rmse_cell << std::fixed << std::setprecision(4) << r.rmse_mean << " +- " << r.rmse_std;
    os << std::left << std::setw(static_cast<int>(width)) << r.label << "  " << std::setw(9) << to_string(r.mode)
       << std::right << std::setw(22) << mae_cell.str() << std::setw(22) << rmse_cell.str() << std::setw(6) << r.runs;
    if (r.failures > 0) os << "  (" << r.failures << " failed)";
    os << '\n';
  }
  return os.str();
}

ComparisonTable compare(const std::vector<LabeledSpec>& specs, const ModePairDataset& dataset,
                        const DataConfig& data_config, const TrainConfig& config,
                        const std::vector<std::uint64_t>& seeds, int jobs) {
  if (specs.empty()) throw ContractError("compare: no specs given");
  if (seeds.empty()) throw ContractError("compare: no seeds given");
  for (const auto& s : specs) s.spec.validate();

  std::map<Index, PreparedData> prepared;
  for (const auto& s : specs) {
    if (!prepared.count(s.spec.tau)) prepared.emplace(s.spec.tau, prepare_data(dataset, s.spec.tau, data_config));
  }

  ComparisonTable table;
  table.runs.resize(specs.size() * seeds.size());
  auto run_one = [&](std::size_t i) {
    const LabeledSpec& ls = specs[i / seeds.size()];
    RunRecord& rec = table.runs[i];
    rec.label = ls.label;
    rec.seed = seeds[i % seeds.size()];
    try {
      const PreparedData& data = prepared.at(ls.spec.tau);
      TrainedModel model = fit_model(ls.spec, data, config, rec.seed, &rec.history);
      rec.diverged = rec.history.diverged;
      if (rec.diverged) rec.error = rec.history.divergence;
      rec.report = evaluate(model, data, ls.label).report;
      rec.report.config_hash = json_hash({{"spec", ls.spec}, {"train", config}, {"data", data_config}});
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
  };

  const std::size_t total = table.runs.size();
  if (jobs <= 1) {
    for (std::size_t i = 0; i < total; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < total; i = next++) run_one(i);
      });
    }
    for (auto& t : workers) t.join();
  }

  for (std::size_t s = 0; s < specs.size(); ++s) {
    for (Mode mode : forecast_modes(specs[s].spec)) {
      SummaryRow row;
      row.label = specs[s].label;
      row.mode = mode;
      std::vector<double> maes;
      std::vector<double> rmses;
      for (std::size_t k = 0; k < seeds.size(); ++k) {
        const RunRecord& rec = table.runs[s * seeds.size() + k];
        const ModeMetrics* m = rec.ok ? rec.report.find(mode) : nullptr;
        if (!m || rec.diverged) ++row.failures;
        if (!m) continue;
        maes.push_back(m->mae);
        rmses.push_back(m->rmse);
      }
      row.runs = static_cast<Index>(maes.size());
      row.mae_mean = mean_of(maes);
      row.mae_std = std_of(maes);
      row.rmse_mean = mean_of(rmses);
      row.rmse_std = std_of(rmses);
      table.rows.push_back(row);
    }
  }
  return table;
}

std::vector<double> parse_grid(const std::string& text) {
  auto to_number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ContractError("grid: cannot parse '" + s + "' in '" + text + "'");
    return v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.size() != 3) throw ContractError("grid: expected start:stop:step, got '" + text + "'");
    const double start = to_number(parts[0]);
    const double stop = to_number(parts[1]);
    const double step = to_number(parts[2]);
    if (!(step > 0.0) || stop < start) throw ContractError("grid: need step > 0 and stop >= start in '" + text + "'");
    const auto n = static_cast<Index>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (Index i = 0; i < n; ++i) {
      out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
    }
  } else {
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) out.push_back(to_number(part));
    if (out.empty()) throw ContractError("grid: empty list");
  }
  return out;
}

std::string gamma_label(double gamma) {
  std::ostringstream os;
  os << "gamma=" << gamma;
  return os.str();
}

void SweepTable::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "gamma,mode,";
  write_summary_header(out);
  for (const auto& r : rows) {
    out << csv_double(r.gamma) << ',' << to_string(r.summary.mode) << ',';
    write_summary_values(out, r.summary);
  }
}

SweepTable sweep_gamma(std::vector<double> gammas, const ModelSpec& base, const ModePairDataset& dataset,
                       const DataConfig& data_config, const TrainConfig& config,
                       const std::vector<std::uint64_t>& seeds, int jobs) {
  if (base.kind != ModelKind::kMATURE) throw ContractError("sweep: gamma only applies to MATURE");
  if (gammas.empty()) throw ContractError("sweep: no gamma values");
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) throw ContractError("sweep: gamma " + std::to_string(g) + " outside [0, 1]");
  }
  std::sort(gammas.begin(), gammas.end());
  gammas.erase(std::unique(gammas.begin(), gammas.end()), gammas.end());

  std::vector<LabeledSpec> specs;
  for (double g : gammas) {
    ModelSpec s = base;
    s.gamma = g;
    specs.push_back({gamma_label(g), s});
  }
  SweepTable table;
  table.comparison = compare(specs, dataset, data_config, config, seeds, jobs);
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    for (const auto& row : table.comparison.rows) {
      if (row.label == specs[i].label) table.rows.push_back({gammas[i], row});
    }
  }
  return table;
}

}  // namespace mature
