#include "mature/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

namespace mature {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ContractError("weight_decay must be non-negative");
  if (batch_size <= 0) throw ContractError("batch_size must be positive");
  if (epochs <= 0) throw ContractError("epochs must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
                     {"batch_size", c.batch_size},       {"epochs", c.epochs},
                     {"seed", c.seed},                   {"patience", c.patience},
                     {"clip_norm", c.clip_norm},         {"shuffle", c.shuffle}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  nlohmann::json known;
  to_json(known, TrainConfig{});
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) throw ContractError("unknown train key: " + item.key());
  }
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.patience = j.value("patience", c.patience);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.shuffle = j.value("shuffle", c.shuffle);
}

Var multitask_loss(const Var& pred_intensive, const Var& true_intensive, const Var& pred_sparse,
                   const Var& true_sparse, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("loss: epsilon must lie in [0, 1]");
  Var intensive = scale(mse(pred_intensive, true_intensive), epsilon);
  Var sparse = scale(mse(pred_sparse, true_sparse), 1.0 - epsilon);
  return add(intensive, sparse);
}

Var forecast_loss(Tape& tape, const Forecast& forecast, const WindowedBatch& batch, double epsilon) {
  const bool has_r = forecast.intensive.valid();
  const bool has_s = forecast.sparse.valid();
  if (has_r && has_s) {
    return multitask_loss(forecast.intensive, tape.constant(batch.targets_intensive), forecast.sparse,
                          tape.constant(batch.targets_sparse), epsilon);
  }
  if (has_r) return mse(forecast.intensive, tape.constant(batch.targets_intensive));
  if (has_s) return mse(forecast.sparse, tape.constant(batch.targets_sparse));
  throw ContractError("loss: forecast holds no predictions");
}

void Adam::step(ParameterSet& params, double learning_rate, double weight_decay) {
  for (const Parameter& p : params) {
    if (!p.grad.allFinite()) throw TrainingError("non-finite gradient in parameter " + p.name);
  }
  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double shrink = 1.0 - learning_rate * weight_decay;
  for (Parameter& p : params) {
    auto [it, inserted] = moments_.try_emplace(p.name);
    Moments& m = it->second;
    if (inserted) {
      m.first = Matrix::Zero(p.value.rows(), p.value.cols());
      m.second = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    m.first = b1 * m.first + (1.0 - b1) * p.grad;
    m.second = b2 * m.second + (1.0 - b2) * p.grad.cwiseProduct(p.grad);
    if (weight_decay != 0.0) p.value *= shrink;
    p.value.array() -= learning_rate * (m.first.array() / correction1) /
                       ((m.second.array() / correction2).sqrt() + options_.epsilon);
  }
}

double clip_gradients(ParameterSet& params, double max_norm) {
  double squared = 0.0;
  for (const Parameter& p : params) squared += p.grad.squaredNorm();
  const double norm = std::sqrt(squared);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Parameter& p : params) p.grad *= factor;
  }
  return norm;
}

namespace {

std::vector<Index> range_indices(Index n) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

}  // namespace

double evaluate_loss(const Forecaster& model, const WindowSet& windows, double epsilon, Index batch_size) {
  if (windows.size() == 0) throw ContractError("evaluate_loss: no windows");
  const auto idx = range_indices(windows.size());
  double total = 0.0;
  for (Index begin = 0; begin < windows.size(); begin += batch_size) {
    const Index end = std::min(windows.size(), begin + batch_size);
    const auto batch = windows.batch(std::span<const Index>(idx).subspan(
        static_cast<std::size_t>(begin), static_cast<std::size_t>(end - begin)));
    Tape tape;
    Forecast f = const_cast<Forecaster&>(model).forward(tape, batch.inputs);
    total += forecast_loss(tape, f, batch, epsilon).value()(0, 0) * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(windows.size());
}

TrainResult train(Forecaster& model, const WindowSet& train_windows, const WindowSet& validation,
                  const TrainConfig& config) {
  config.validate();
  if (train_windows.size() == 0) throw ContractError("train: no training windows");
  if (train_windows.tau() != model.spec().tau) {
    throw ContractError("train: windows use tau = " + std::to_string(train_windows.tau()) +
                        " but the model expects " + std::to_string(model.spec().tau));
  }

  TrainResult result;
  ParameterSet& params = model.parameters();
  ParameterSet best = params;
  Adam adam;
  std::mt19937_64 rng(config.seed);
  std::vector<Index> order = range_indices(train_windows.size());
  const double epsilon = model.spec().epsilon;
  int since_improvement = 0;

  auto restore_best = [&] {
    auto src = best.begin();
    for (Parameter& p : params) p.value = (src++)->value;
  };

  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    try {
      for (Index begin = 0; begin < train_windows.size(); begin += config.batch_size) {
        const Index end = std::min(train_windows.size(), begin + config.batch_size);
        const auto batch = train_windows.batch(std::span<const Index>(order).subspan(
            static_cast<std::size_t>(begin), static_cast<std::size_t>(end - begin)));
        params.zero_grad();
        Tape tape;
        Forecast f = model.forward(tape, batch.inputs);
        Var loss = forecast_loss(tape, f, batch, epsilon);
        const double value = loss.value()(0, 0);
        if (!std::isfinite(value)) throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
        tape.backward(loss);
        if (config.clip_norm > 0.0) clip_gradients(params, config.clip_norm);
        adam.step(params, config.learning_rate, config.weight_decay);
        total += value * static_cast<double>(end - begin);
      }
    } catch (const TrainingError& e) {
      result.diverged = true;
      result.divergence = e.what();
      restore_best();
      return result;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.learning_rate = config.learning_rate;
    record.train_loss = total / static_cast<double>(train_windows.size());
    record.val_loss = validation.size() > 0
                          ? evaluate_loss(model, validation, epsilon, config.batch_size)
                          : record.train_loss;
    result.history.push_back(record);

    if (!std::isfinite(record.val_loss)) {
      result.diverged = true;
      result.divergence = "non-finite validation loss at epoch " + std::to_string(epoch);
      restore_best();
      return result;
    }
    if (result.best_epoch < 0 || record.val_loss < result.best_loss) {
      result.best_epoch = epoch;
      result.best_loss = record.val_loss;
      auto dst = best.begin();
      for (const Parameter& p : params) (dst++)->value = p.value;
      since_improvement = 0;
    } else {
      ++since_improvement;
      if (config.patience >= 0 && since_improvement > config.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  restore_best();
  return result;
}

GradCheckReport grad_check_model(const ModelSpec& spec, StationCounts counts, std::uint64_t seed, Index batch,
                                 double tolerance, double step) {
  Forecaster model = Forecaster::build(spec, counts, seed);
  std::mt19937_64 rng(seed ^ 0xC0FFEEull);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random = [&](Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = unit(rng);
    return m;
  };
  WindowedBatch data;
  for (Index t = 0; t < spec.tau; ++t) {
    if (counts.intensive > 0) data.inputs.intensive.push_back(random(counts.intensive, batch));
    if (counts.sparse > 0) data.inputs.sparse.push_back(random(counts.sparse, batch));
  }
  if (counts.intensive > 0) data.targets_intensive = random(counts.intensive, batch);
  if (counts.sparse > 0) data.targets_sparse = random(counts.sparse, batch);
  auto loss = [&](Tape& tape) { return forecast_loss(tape, model.forward(tape, data.inputs), data, spec.epsilon); };
  return grad_check(loss, model.parameters(), tolerance, step);
}

void write_history_csv(const TrainResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "epoch,train_loss,val_loss,lr\n" << std::setprecision(17);
  for (const auto& r : result.history) {
    out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.learning_rate << '\n';
  }
}

}  // namespace mature
