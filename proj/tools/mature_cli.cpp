// mature: command-line front end.
//
//   mature generate     synthetic mode-pair dataset
//   mature train        fit one model, write checkpoint + history + report
//   mature evaluate     score a checkpoint on a dataset's test split
//   mature predict      one-step forecast from a raw window CSV
//   mature compare      multi-spec, multi-seed comparison table
//   mature sweep-gamma  MATURE over a grid of gamma values
//   mature gradcheck    finite-difference check of the network gradients
//
// Every command that writes files does so into a run directory holding a
// manifest.json (tool version, command, seed, output digests) and the resolved
// config. Existing run directories are only reused with --force.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mature/checkpoint.hpp"
#include "mature/config.hpp"
#include "mature/evaluation.hpp"
#include "mature/init.hpp"
#include "mature/synthetic.hpp"

namespace fs = std::filesystem;
using namespace mature;

namespace {

struct CliError : std::runtime_error {
  CliError(std::string code, const std::string& message) : std::runtime_error(message), code(std::move(code)) {}
  std::string code;
};

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << stable_hash(buf.str());
  return hex.str();
}

std::string run_root() {
  const char* env = std::getenv("MATURE_RUN_ROOT");
  return env && *env ? env : "runs";
}

class RunDir {
 public:
  RunDir(std::string command, const std::string& out, const std::string& default_name, bool force)
      : command_(std::move(command)) {
    path_ = out.empty() ? fs::path(run_root()) / default_name : fs::path(out);
    if (fs::exists(path_) && !fs::is_directory(path_)) {
      throw CliError("E_IO", path_.string() + " exists and is not a directory");
    }
    if (fs::exists(path_) && !fs::is_empty(path_) && !force) {
      throw CliError("E_EXISTS", "run directory " + path_.string() + " is not empty (use --force to overwrite)");
    }
    std::error_code ec;
    fs::create_directories(path_, ec);
    if (ec) throw CliError("E_IO", "cannot create " + path_.string() + ": " + ec.message());
  }

  std::string file(const std::string& name) {
    outputs_.push_back(name);
    return (path_ / name).string();
  }

  void write_json(const std::string& name, const nlohmann::json& j) {
    std::ofstream out(file(name));
    if (!out) throw CliError("E_IO", "cannot write " + (path_ / name).string());
    out << j.dump(2) << '\n';
  }

  /// `config` is echoed as config.json and can be passed back via --config;
  /// `arguments` records the command's remaining inputs in the manifest.
  void finish(const nlohmann::json& config, std::uint64_t seed, const nlohmann::json& arguments = {}) {
    write_json("config.json", config);
    nlohmann::json outputs = nlohmann::json::array();
    for (const auto& name : outputs_) {
      const fs::path p = path_ / name;
      outputs.push_back({{"file", name}, {"bytes", fs::file_size(p)}, {"digest", file_digest(p)}});
    }
    nlohmann::json manifest{{"tool", "mature"},
                            {"version", MATURE_VERSION},
                            {"command", command_},
                            {"seed", seed},
                            {"config_hash", json_hash(config)},
                            {"arguments", arguments},
                            {"outputs", outputs}};
    std::ofstream out(path_ / "manifest.json");
    if (!out) throw CliError("E_IO", "cannot write manifest in " + path_.string());
    out << manifest.dump(2) << '\n';
  }

  const fs::path& path() const { return path_; }

 private:
  std::string command_;
  fs::path path_;
  std::vector<std::string> outputs_;
};

ModePairDataset load_data(const std::string& data, const std::string& intensive_csv, const std::string& sparse_csv) {
  if (!data.empty()) {
    fs::path p(data);
    if (fs::is_directory(p)) p /= "dataset.json";
    if (!fs::exists(p)) throw CliError("E_IO", "no dataset at " + p.string());
    return load_dataset(p.string());
  }
  if (intensive_csv.empty() || sparse_csv.empty()) {
    throw CliError("E_USAGE", "provide --data, or both --intensive-csv and --sparse-csv");
  }
  ModePairDataset d;
  CsvSchema schema;
  schema.mode = "intensive";
  d.intensive = ingest_csv(intensive_csv, schema);
  schema.mode = "sparse";
  d.sparse = ingest_csv(sparse_csv, schema);
  return d;
}

std::vector<std::uint64_t> seed_list(const std::string& text, std::uint64_t fallback) {
  if (text.empty()) return {fallback};
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw CliError("E_USAGE", "bad seed '" + part + "'");
    }
  }
  if (seeds.empty()) throw CliError("E_USAGE", "empty seed list");
  return seeds;
}

std::string hash_name(const std::string& command, const nlohmann::json& config) {
  return command + "-" + json_hash(config).substr(0, 10);
}

/// "KIND" or "KIND:key=value,key=value" with keys of the model config section.
LabeledSpec parse_spec(const std::string& text, const ModelSpec& base) {
  const auto colon = text.find(':');
  nlohmann::json overrides = nlohmann::json::object();
  overrides["kind"] = text.substr(0, colon);
  if (colon != std::string::npos) {
    std::stringstream ss(text.substr(colon + 1));
    for (std::string kv; std::getline(ss, kv, ',');) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw CliError("E_USAGE", "bad spec override '" + kv + "' in " + text);
      const std::string key = kv.substr(0, eq);
      const std::string value = kv.substr(eq + 1);
      if (key == "mode" || key == "kind") {
        overrides[key] = value;
      } else {
        try {
          overrides[key] = nlohmann::json::parse(value);
        } catch (const nlohmann::json::exception&) {
          throw CliError("E_USAGE", "bad value for " + key + " in " + text);
        }
      }
    }
  }
  ModelSpec spec = base;
  from_json(overrides, spec);
  spec.validate();
  return {text, spec};
}

void print_report(const MetricsReport& r) {
  for (const auto& m : r.modes) {
    std::cout << "  " << std::left << std::setw(10) << to_string(m.mode) << std::right << std::fixed
              << std::setprecision(4) << "MAE " << m.mae << "  RMSE " << m.rmse << '\n';
  }
}

// --- shared option groups ----------------------------------------------------

struct DataOptions {
  std::string data;
  std::string intensive_csv;
  std::string sparse_csv;

  void add(CLI::App* app) {
    app->add_option("--data", data, "Dataset JSON (or a generate run directory)");
    app->add_option("--intensive-csv", intensive_csv, "Intensive-mode CSV (timestamp,station_id,boardings)");
    app->add_option("--sparse-csv", sparse_csv, "Sparse-mode CSV");
  }
  ModePairDataset load() const { return load_data(data, intensive_csv, sparse_csv); }
};

struct ConfigOptions {
  std::string config;
  std::string profile;
  std::string model;
  std::optional<Index> hidden, tau, epochs, batch_size, segments, segment_size;
  std::optional<double> lr, gamma, epsilon, weight_decay;
  std::optional<int> patience;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  bool no_clip = false;

  void add(CLI::App* app, bool with_model) {
    app->add_option("--config", config, "Experiment config JSON");
    app->add_option("--profile", profile, "Sparse-mode preset: train, light_rail, ferry");
    if (with_model) app->add_option("--model", model, "Model kind (MATURE, MARN-S, MARN, LSTM, HA, ...)");
    app->add_option("--hidden", hidden, "Hidden size")->check(CLI::PositiveNumber);
    app->add_option("--tau", tau, "Window length")->check(CLI::PositiveNumber);
    app->add_option("--segments", segments, "Memory segments K")->check(CLI::PositiveNumber);
    app->add_option("--segment-size", segment_size, "Memory segment size S")->check(CLI::PositiveNumber);
    app->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
    app->add_option("--batch-size", batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
    app->add_option("--gamma", gamma, "Adaption blend gamma")->check(CLI::Range(0.0, 1.0));
    app->add_option("--epsilon", epsilon, "Intensive-mode loss weight")->check(CLI::Range(0.0, 1.0));
    app->add_option("--weight-decay", weight_decay, "Decoupled weight decay")->check(CLI::NonNegativeNumber);
    app->add_option("--patience", patience, "Early-stopping patience (negative disables)");
    app->add_option("--mode", mode, "Target mode of single-task models: intensive or sparse");
    app->add_option("--seed", seed, "Random seed");
    app->add_flag("--no-clip", no_clip, "Disable gradient clipping");
  }

  ExperimentConfig resolve() const {
    nlohmann::json j = config.empty() ? nlohmann::json::object() : nlohmann::json();
    if (!config.empty()) {
      std::ifstream in(config);
      if (!in) throw CliError("E_IO", "cannot read config " + config);
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw CliError("E_CONFIG", config + ": " + e.what());
      }
    }
    if (!profile.empty()) j["profile"] = profile;
    auto set = [&](const char* section, const char* key, const auto& value) {
      if (value) j[section][key] = *value;
    };
    if (!model.empty()) j["model"]["kind"] = model;
    set("model", "hidden", hidden);
    set("model", "tau", tau);
    set("model", "segments", segments);
    set("model", "segment_size", segment_size);
    set("model", "gamma", gamma);
    set("model", "epsilon", epsilon);
    set("model", "mode", mode);
    set("train", "epochs", epochs);
    set("train", "batch_size", batch_size);
    set("train", "learning_rate", lr);
    set("train", "weight_decay", weight_decay);
    set("train", "patience", patience);
    set("train", "seed", seed);
    if (no_clip) j["train"]["clip_norm"] = 0.0;
    try {
      return ExperimentConfig::from_json(j);
    } catch (const ContractError& e) {
      throw CliError("E_CONFIG", e.what());
    } catch (const SpecError& e) {
      throw CliError("E_CONFIG", e.what());
    } catch (const nlohmann::json::exception& e) {
      throw CliError("E_CONFIG", e.what());
    }
  }
};

// --- commands ----------------------------------------------------------------

struct GenerateOptions {
  std::string out;
  std::string config;
  std::optional<Index> n_intensive, n_sparse, days;
  std::optional<std::uint64_t> seed;
  std::optional<double> coupling, noise;
  bool force = false;
};

int cmd_generate(const GenerateOptions& o) {
  SyntheticConfig c = o.config.empty() ? SyntheticConfig{} : load_config(o.config).synthetic;
  if (o.n_intensive) c.n_intensive = *o.n_intensive;
  if (o.n_sparse) c.n_sparse = *o.n_sparse;
  if (o.days) c.days = *o.days;
  if (o.seed) c.seed = *o.seed;
  if (o.coupling) c.coupling = *o.coupling;
  if (o.noise) c.noise = *o.noise;
  c.validate();
  const nlohmann::json resolved{{"synthetic", c}};

  RunDir run("generate", o.out, hash_name("generate", resolved), o.force);
  const ModePairDataset data = synthesize(c);
  save_dataset(data, run.file("dataset.json"));
  export_csv(data.intensive, run.file("intensive.csv"));
  export_csv(data.sparse, run.file("sparse.csv"));
  run.finish(resolved, c.seed);

  std::cout << "generated " << c.days << " days x " << data.intensive.steps_per_day() << " steps\n"
            << "  intensive: " << data.intensive.station_count() << " stations, mean demand " << std::fixed
            << std::setprecision(3) << data.intensive.values.mean() << '\n'
            << "  sparse:    " << data.sparse.station_count() << " stations, mean demand "
            << data.sparse.values.mean() << '\n'
            << "  coupling " << c.coupling << ", noise " << c.noise << ", seed " << c.seed << '\n'
            << "  fingerprint " << dataset_fingerprint(data) << '\n'
            << "wrote " << run.path().string() << '\n';
  return 0;
}

struct TrainOptions {
  ConfigOptions cfg;
  DataOptions data;
  std::string out;
  bool force = false;
};

int cmd_train(const TrainOptions& o) {
  const ExperimentConfig cfg = o.cfg.resolve();
  DataOptions data_opts = o.data;
  if (data_opts.data.empty() && data_opts.intensive_csv.empty()) data_opts.data = cfg.data_path;
  if (data_opts.data.empty() && data_opts.intensive_csv.empty()) {
    throw CliError("E_USAGE", "train needs --data (or data.path in the config)");
  }
  const ModePairDataset dataset = data_opts.load();
  // Dimension checks happen here, before any epoch.
  const PreparedData prepared = prepare_data(dataset, cfg.model.tau, cfg.data);
  if (is_trainable(cfg.model.kind)) {
    Forecaster::build(cfg.model, model_counts(cfg.model, prepared.counts()), cfg.train.seed);
  }

  nlohmann::json resolved = cfg.to_json();
  if (!data_opts.data.empty()) resolved["data"]["path"] = fs::absolute(data_opts.data).string();
  const nlohmann::json arguments{{"data_fingerprint", dataset_fingerprint(dataset)},
                                 {"intensive_csv", data_opts.intensive_csv},
                                 {"sparse_csv", data_opts.sparse_csv}};
  RunDir run("train", o.out, hash_name("train", {resolved, arguments}), o.force);

  TrainResult history;
  const TrainedModel model = fit_model(cfg.model, prepared, cfg.train, cfg.train.seed, &history);
  save_checkpoint(model, run.file("checkpoint.json"));
  if (is_trainable(cfg.model.kind)) write_history_csv(history, run.file("history.csv"));
  Evaluation ev = evaluate(model, prepared);
  ev.report.config_hash = json_hash(resolved);
  write_report_csv({ev.report}, run.file("report.csv"));
  run.finish(resolved, cfg.train.seed, arguments);

  std::cout << "trained " << to_string(cfg.model.kind) << " (seed " << cfg.train.seed << ")";
  if (is_trainable(cfg.model.kind)) {
    std::cout << ": " << history.history.size() << " epochs, best epoch " << history.best_epoch << ", best loss "
              << std::setprecision(6) << history.best_loss;
  }
  std::cout << '\n';
  if (!prepared.dropped_intensive.empty()) {
    std::cout << "  dropped " << prepared.dropped_intensive.size() << " low-demand intensive stations\n";
  }
  std::cout << "test metrics:\n";
  print_report(ev.report);
  std::cout << "wrote " << run.path().string() << '\n';
  if (history.diverged) throw CliError("E_TRAINING", "training diverged: " + history.divergence);
  return 0;
}

struct EvaluateOptions {
  std::string checkpoint;
  DataOptions data;
  std::string out;
  bool force = false;
};

int cmd_evaluate(const EvaluateOptions& o) {
  const TrainedModel model = load_checkpoint(o.checkpoint);
  const ModePairDataset dataset = o.data.load();
  const PreparedData prepared = prepare_data(dataset, model.spec.tau, model.data_config);
  const std::string fp = dataset_fingerprint(prepared.data);
  if (fp != model.data_fingerprint) {
    throw CliError("E_MISMATCH", "checkpoint was trained on data " + model.data_fingerprint +
                                     ", the given data hashes to " + fp);
  }
  const nlohmann::json resolved{{"checkpoint", fs::absolute(o.checkpoint).string()},
                                {"spec", model.spec},
                                {"spec_hash", spec_hash(model.spec)},
                                {"data_fingerprint", fp},
                                {"data", model.data_config}};
  RunDir run("evaluate", o.out, hash_name("evaluate", resolved), o.force);
  Evaluation ev = evaluate(model, prepared);
  ev.report.config_hash = json_hash(resolved);
  write_report_csv({ev.report}, run.file("report.csv"));
  write_predictions_csv(ev.predictions, run.file("predictions.csv"));
  run.finish(resolved, model.seed);
  std::cout << "evaluated " << to_string(model.spec.kind) << " on " << prepared.test.size() << " test windows\n";
  print_report(ev.report);
  std::cout << "wrote " << run.path().string() << '\n';
  return 0;
}

struct PredictOptions {
  std::string checkpoint;
  std::string window_csv;
  std::string out;
  bool force = false;
};

// Window CSV: mode,timestamp,station_id,value with tau consecutive timestamps
// per mode and one row per (timestamp, station) in raw units.
int cmd_predict(const PredictOptions& o) {
  const TrainedModel model = load_checkpoint(o.checkpoint);
  std::ifstream in(o.window_csv);
  if (!in) throw CliError("E_IO", "cannot read " + o.window_csv);
  std::map<std::string, std::map<std::int64_t, std::map<std::string, double>>> rows;
  std::string line;
  std::getline(in, line);
  if (line.rfind("mode,timestamp,station_id,value", 0) != 0) {
    throw DataError("window CSV header must be mode,timestamp,station_id,value", 1);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 4) throw DataError("expected 4 fields, got " + std::to_string(f.size()), line_no);
    const auto ts = parse_timestamp(f[1]);
    if (!ts) throw DataError("bad timestamp '" + f[1] + "'", line_no);
    double v = 0.0;
    try {
      v = std::stod(f[3]);
    } catch (const std::exception&) {
      throw DataError("bad value '" + f[3] + "'", line_no);
    }
    const std::string mode = to_string(parse_mode(f[0]));
    rows[mode][*ts][f[2]] = v;
  }

  const Index tau = model.spec.tau;
  WindowedBatch batch;
  std::int64_t last_ts = 0;
  std::int64_t step = 0;
  auto build = [&](Mode mode, const std::vector<std::string>& stations, std::vector<Matrix>& steps) {
    const auto& by_ts = rows[to_string(mode)];
    if (static_cast<Index>(by_ts.size()) != tau) {
      throw DataError(to_string(mode) + " window has " + std::to_string(by_ts.size()) + " timestamps, model needs " +
                      std::to_string(tau));
    }
    const NormalizationState& norm = mode == Mode::kIntensive ? model.norm_intensive : model.norm_sparse;
    Matrix raw(tau, static_cast<Index>(stations.size()));
    Index t = 0;
    for (const auto& [ts, values] : by_ts) {
      for (std::size_t n = 0; n < stations.size(); ++n) {
        auto it = values.find(stations[n]);
        if (it == values.end()) {
          throw DataError(to_string(mode) + " window lacks station " + stations[n] + " at " + format_timestamp(ts));
        }
        raw(t, static_cast<Index>(n)) = it->second;
      }
      if (t > 0) step = ts - last_ts;
      last_ts = ts;
      ++t;
    }
    const Matrix scaled = norm.apply(raw);
    for (Index r = 0; r < tau; ++r) steps.push_back(scaled.row(r).transpose());
  };
  const bool need_r = is_multi_task(model.spec.kind) || model.spec.mode == Mode::kIntensive;
  const bool need_s = is_multi_task(model.spec.kind) || model.spec.mode == Mode::kSparse;
  if (need_r) build(Mode::kIntensive, model.stations_intensive, batch.inputs.intensive);
  if (need_s) build(Mode::kSparse, model.stations_sparse, batch.inputs.sparse);
  batch.target_rows.push_back(0);

  std::vector<Index> slots{0};
  if (model.ha) {
    const Index spd = model.ha->slots_per_day();
    if (step <= 0) step = 86400 / spd;
    const std::int64_t target = last_ts + step;
    slots[0] = static_cast<Index>((((target % 86400) + 86400) % 86400) * spd / 86400);
  }
  const ForecastValues values = model.predict(batch, slots);

  const nlohmann::json resolved{{"checkpoint", fs::absolute(o.checkpoint).string()},
                                {"window_csv", fs::absolute(o.window_csv).string()},
                                {"spec_hash", spec_hash(model.spec)}};
  RunDir run("predict", o.out, hash_name("predict", resolved), o.force);
  {
    std::ofstream out(run.file("predictions.csv"));
    out << "mode,station_id,prediction\n" << std::setprecision(17);
    auto dump = [&](Mode mode, const std::vector<std::string>& stations, const Matrix& v) {
      for (std::size_t n = 0; n < stations.size(); ++n) {
        out << to_string(mode) << ',' << stations[n] << ',' << v(static_cast<Index>(n), 0) << '\n';
        std::cout << to_string(mode) << ' ' << stations[n] << ' ' << v(static_cast<Index>(n), 0) << '\n';
      }
    };
    if (model.forecasts(Mode::kIntensive)) dump(Mode::kIntensive, model.stations_intensive, values.intensive);
    if (model.forecasts(Mode::kSparse)) dump(Mode::kSparse, model.stations_sparse, values.sparse);
  }
  run.finish(resolved, model.seed);
  return 0;
}

struct CompareOptions {
  ConfigOptions cfg;
  DataOptions data;
  std::vector<std::string> specs;
  std::string seeds;
  std::string grid = "0:1:0.1";
  int jobs = 1;
  std::string out;
  bool force = false;
};

void print_failures(const ComparisonTable& table) {
  for (const auto& run : table.runs) {
    if (!run.ok || run.diverged) {
      std::cerr << "warning: " << run.label << " seed " << run.seed << ": " << run.error << '\n';
    }
  }
}

int cmd_compare(const CompareOptions& o) {
  const ExperimentConfig cfg = o.cfg.resolve();
  if (o.specs.size() < 2) throw CliError("E_USAGE", "compare needs at least two --specs");
  DataOptions data_opts = o.data;
  if (data_opts.data.empty() && data_opts.intensive_csv.empty()) data_opts.data = cfg.data_path;
  const ModePairDataset dataset = data_opts.load();
  std::vector<LabeledSpec> specs;
  for (const auto& s : o.specs) specs.push_back(parse_spec(s, cfg.model));
  const auto seeds = seed_list(o.seeds, cfg.train.seed);

  nlohmann::json resolved = cfg.to_json();
  if (!data_opts.data.empty()) resolved["data"]["path"] = fs::absolute(data_opts.data).string();
  const nlohmann::json arguments{
      {"specs", o.specs}, {"seeds", seeds}, {"jobs", o.jobs}, {"data_fingerprint", dataset_fingerprint(dataset)}};
  RunDir run("compare", o.out, hash_name("compare", {resolved, arguments}), o.force);
  const ComparisonTable table = compare(specs, dataset, cfg.data, cfg.train, seeds, o.jobs);
  write_report_csv(table.reports(), run.file("report.csv"));
  table.write_csv(run.file("summary.csv"));
  {
    std::ofstream out(run.file("table.txt"));
    out << table.format();
  }
  run.finish(resolved, seeds.front(), arguments);
  std::cout << table.format();
  print_failures(table);
  std::cout << "wrote " << run.path().string() << '\n';
  return 0;
}

int cmd_sweep(const CompareOptions& o) {
  ExperimentConfig cfg = o.cfg.resolve();
  if (cfg.model.kind != ModelKind::kMATURE) throw CliError("E_USAGE", "sweep-gamma applies to MATURE only");
  DataOptions data_opts = o.data;
  if (data_opts.data.empty() && data_opts.intensive_csv.empty()) data_opts.data = cfg.data_path;
  const ModePairDataset dataset = data_opts.load();
  const auto gammas = parse_grid(o.grid);
  const auto seeds = seed_list(o.seeds, cfg.train.seed);

  nlohmann::json resolved = cfg.to_json();
  if (!data_opts.data.empty()) resolved["data"]["path"] = fs::absolute(data_opts.data).string();
  const nlohmann::json arguments{
      {"grid", o.grid}, {"seeds", seeds}, {"jobs", o.jobs}, {"data_fingerprint", dataset_fingerprint(dataset)}};
  RunDir run("sweep-gamma", o.out, hash_name("sweep-gamma", {resolved, arguments}), o.force);
  const SweepTable table = sweep_gamma(gammas, cfg.model, dataset, cfg.data, cfg.train, seeds, o.jobs);
  table.write_csv(run.file("sweep.csv"));
  write_report_csv(table.comparison.reports(), run.file("report.csv"));
  run.finish(resolved, seeds.front(), arguments);
  std::cout << table.comparison.format();
  print_failures(table.comparison);
  std::cout << "wrote " << run.path().string() << '\n';
  return 0;
}

struct GradcheckOptions {
  std::string model = "all";
  std::string dims = "h=6,K=3,S=4,tau=4,NR=3,NS=2";
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  Index batch = 2;
};

int cmd_gradcheck(const GradcheckOptions& o) {
  ModelSpec base;
  base.mlp_layers = {8, 6, 6, 4};
  Index nr = 3;
  Index ns = 2;
  std::stringstream ss(o.dims);
  for (std::string kv; std::getline(ss, kv, ',');) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CliError("E_USAGE", "bad --dims entry '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    Index value = 0;
    try {
      value = std::stol(kv.substr(eq + 1));
    } catch (const std::exception&) {
      throw CliError("E_USAGE", "bad --dims value in '" + kv + "'");
    }
    if (key == "h") base.hidden = value;
    else if (key == "K") base.memory.segments = value;
    else if (key == "S") base.memory.segment_size = value;
    else if (key == "tau") base.tau = value;
    else if (key == "NR") nr = value;
    else if (key == "NS") ns = value;
    else throw CliError("E_USAGE", "unknown --dims key '" + key + "' (h, K, S, tau, NR, NS)");
  }

  std::vector<ModelKind> kinds;
  if (o.model == "all") {
    for (ModelKind k : all_model_kinds()) {
      if (is_trainable(k)) kinds.push_back(k);
    }
  } else {
    kinds.push_back(parse_model_kind(o.model));
    if (!is_trainable(kinds.back())) throw CliError("E_USAGE", to_string(kinds.back()) + " has no gradients");
  }

  bool all_passed = true;
  for (ModelKind kind : kinds) {
    ModelSpec spec = base;
    spec.kind = kind;
    spec.validate();
    const StationCounts counts = model_counts(spec, {nr, ns});
    const GradCheckReport report = grad_check_model(spec, counts, o.seed, o.batch, o.tolerance);
    const bool ok = report.passed();
    all_passed = all_passed && ok;
    std::cout << (ok ? "PASS " : "FAIL ") << to_string(kind) << "  max rel. err " << std::scientific
              << std::setprecision(3) << report.max_error() << '\n';
    if (!report.failure.empty()) std::cout << "  " << report.failure << '\n';
    // Group parameters by the prefix before the first '.'.
    std::map<std::string, double> groups;
    std::vector<std::string> order;
    for (const auto& e : report.entries) {
      const std::string group = e.name.substr(0, e.name.find('.'));
      if (!groups.count(group)) order.push_back(group);
      groups[group] = std::max(groups[group], e.max_relative_error);
    }
    for (const auto& g : order) std::cout << "  " << std::left << std::setw(10) << g << std::right << groups[g] << '\n';
    std::cout << std::defaultfloat;
  }
  if (!all_passed) throw CliError("E_GRADCHECK", "gradient check failed at tolerance " + std::to_string(o.tolerance));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal transit demand forecasting with memory-augmented recurrent networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("mature ") + MATURE_VERSION);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic mode-pair dataset");
  g->add_option("--out", gen.out, "Run directory");
  g->add_option("--config", gen.config, "Config JSON with a synthetic section");
  g->add_option("--n-intensive", gen.n_intensive, "Intensive stations (default 100)")->check(CLI::PositiveNumber);
  g->add_option("--n-sparse", gen.n_sparse, "Sparse stations (default 10)")->check(CLI::PositiveNumber);
  g->add_option("--days", gen.days, "Days of hourly data (default 90)")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Random seed (default 0)");
  g->add_option("--coupling", gen.coupling, "Shared-latent coupling in [0, 1] (default 0.8)")
      ->check(CLI::Range(0.0, 1.0));
  g->add_option("--noise", gen.noise, "Noise scale (default 1)")->check(CLI::NonNegativeNumber);
  g->add_flag("--force", gen.force, "Overwrite an existing run directory");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train one model");
  tr.cfg.add(t, true);
  tr.data.add(t);
  t->add_option("--out", tr.out, "Run directory");
  t->add_flag("--force", tr.force, "Overwrite an existing run directory");

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint.json")->required();
  ev.data.add(e);
  e->add_option("--out", ev.out, "Run directory");
  e->add_flag("--force", ev.force, "Overwrite an existing run directory");

  PredictOptions pr;
  auto* p = app.add_subcommand("predict", "Forecast the step after a window");
  p->add_option("--checkpoint", pr.checkpoint, "checkpoint.json")->required();
  p->add_option("--window-csv", pr.window_csv, "CSV: mode,timestamp,station_id,value")->required();
  p->add_option("--out", pr.out, "Run directory");
  p->add_flag("--force", pr.force, "Overwrite an existing run directory");

  CompareOptions cmp;
  auto* c = app.add_subcommand("compare", "Compare model specs over seeds");
  cmp.cfg.add(c, false);
  cmp.data.add(c);
  c->add_option("--specs", cmp.specs, "Specs: KIND or KIND:key=value,...")->required();
  c->add_option("--seeds", cmp.seeds, "Comma-separated seeds");
  c->add_option("--jobs", cmp.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  c->add_option("--out", cmp.out, "Run directory");
  c->add_flag("--force", cmp.force, "Overwrite an existing run directory");

  CompareOptions sw;
  auto* s = app.add_subcommand("sweep-gamma", "Sweep MATURE's gamma");
  sw.cfg.add(s, false);
  sw.data.add(s);
  s->add_option("--grid", sw.grid, "start:stop:step or a comma list (default 0:1:0.1)");
  s->add_option("--seeds", sw.seeds, "Comma-separated seeds");
  s->add_option("--jobs", sw.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  s->add_option("--out", sw.out, "Run directory");
  s->add_flag("--force", sw.force, "Overwrite an existing run directory");

  GradcheckOptions gc;
  auto* gr = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gr->add_option("--model", gc.model, "Model kind or 'all'");
  gr->add_option("--dims", gc.dims, "Toy dimensions, e.g. h=6,K=3,S=4,tau=4,NR=3,NS=2");
  gr->add_option("--tolerance", gc.tolerance, "Max relative error")->check(CLI::PositiveNumber);
  gr->add_option("--seed", gc.seed, "Random seed");
  gr->add_option("--batch", gc.batch, "Batch size")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "error[E_USAGE]: " << ex.what() << '\n';
    return 2;
  }

  try {
    if (g->parsed()) return cmd_generate(gen);
    if (t->parsed()) return cmd_train(tr);
    if (e->parsed()) return cmd_evaluate(ev);
    if (p->parsed()) return cmd_predict(pr);
    if (c->parsed()) return cmd_compare(cmp);
    if (s->parsed()) {
      sw.cfg.model = "MATURE";
      return cmd_sweep(sw);
    }
    if (gr->parsed()) return cmd_gradcheck(gc);
  } catch (const CliError& ex) {
    std::cerr << "error[" << ex.code << "]: " << ex.what() << '\n';
    return ex.code == "E_USAGE" ? 2 : 1;
  } catch (const SpecError& ex) {
    std::cerr << "error[E_SPEC]: " << ex.what() << '\n';
    return 1;
  } catch (const DataError& ex) {
    std::cerr << "error[E_DATA]: " << ex.what() << '\n';
    return 1;
  } catch (const DimensionError& ex) {
    std::cerr << "error[E_DIMENSION]: " << ex.what() << '\n';
    return 1;
  } catch (const ContractError& ex) {
    std::cerr << "error[E_CONTRACT]: " << ex.what() << '\n';
    return 1;
  } catch (const TrainingError& ex) {
    std::cerr << "error[E_TRAINING]: " << ex.what() << '\n';
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error[E_INTERNAL]: " << ex.what() << '\n';
    return 1;
  }
  return 2;
}
