#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mature/autodiff.hpp"
#include "mature/data.hpp"
#include "mature/gradcheck.hpp"
#include "mature/model.hpp"

namespace mature {

struct TrainConfig {
  double learning_rate = 0.002;
  double weight_decay = 1e-4;
  Index batch_size = 64;
  Index epochs = 100;
  std::uint64_t seed = 0;
  int patience = 10;       // negative disables early stopping
  double clip_norm = 5.0;  // global gradient norm cap; <= 0 disables
  bool shuffle = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// epsilon * MSE(intensive) + (1 - epsilon) * MSE(sparse); 1 x 1.
Var multitask_loss(const Var& pred_intensive, const Var& true_intensive, const Var& pred_sparse,
                   const Var& true_sparse, double epsilon);

/// Loss of a forward pass against a batch: the weighted two-mode loss for
/// multi-task forecasts, plain MSE for single-task ones.
Var forecast_loss(Tape& tape, const Forecast& forecast, const WindowedBatch& batch, double epsilon);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction and decoupled weight decay:
///   p <- p * (1 - lr * wd);  p <- p - lr * m_hat / (sqrt(v_hat) + eps)
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// Throws TrainingError naming the first parameter with a non-finite gradient;
  /// no parameter is modified in that case.
  void step(ParameterSet& params, double learning_rate, double weight_decay);

  std::int64_t steps() const { return steps_; }
  const Matrix& first_moment(const std::string& name) const { return moments_.at(name).first; }
  const Matrix& second_moment(const std::string& name) const { return moments_.at(name).second; }

 private:
  struct Moments {
    Matrix first;
    Matrix second;
  };
  AdamOptions options_;
  std::int64_t steps_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradients(ParameterSet& params, double max_norm);

struct EpochRecord {
  Index epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  Index best_epoch = -1;
  double best_loss = 0.0;
  bool stopped_early = false;
  bool diverged = false;
  std::string divergence;  // reason, when diverged
};

/// Mean loss of the model over every window of `windows`, without gradients.
double evaluate_loss(const Forecaster& model, const WindowSet& windows, double epsilon, Index batch_size);

/// Mini-batch training with seeded shuffling. After every epoch the
/// validation loss (training loss if `validation` is empty) decides the best
/// parameters, which are restored before returning. A non-finite loss or
/// gradient stops training, restores the best parameters and sets `diverged`.
TrainResult train(Forecaster& model, const WindowSet& train_windows, const WindowSet& validation,
                  const TrainConfig& config);

/// Gradient check of a freshly built network on random inputs and targets.
GradCheckReport grad_check_model(const ModelSpec& spec, StationCounts counts, std::uint64_t seed, Index batch,
                                 double tolerance, double step = 1e-3);

void write_history_csv(const TrainResult& result, const std::string& path);

}  // namespace mature
