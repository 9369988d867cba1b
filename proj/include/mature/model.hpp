#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mature/adaption.hpp"
#include "mature/autodiff.hpp"
#include "mature/memory.hpp"

namespace mature {

enum class ModelKind { kHA, kLR, kMLP, kLSTM, kCLSTM, kMTLSTM, kMARN, kMARNS, kMARNC, kMATURE };

enum class Mode { kIntensive, kSparse };

std::string to_string(ModelKind kind);
std::string to_string(Mode mode);
/// Accepts the canonical names ("MATURE", "MARN-S", "MT-LSTM", ...) case-insensitively.
ModelKind parse_model_kind(std::string_view name);
Mode parse_mode(std::string_view name);

/// True for the kinds that forecast both modes jointly.
bool is_multi_task(ModelKind kind);
/// True for the kinds trained by gradient descent.
bool is_trainable(ModelKind kind);
const std::vector<ModelKind>& all_model_kinds();

struct ModelSpec {
  ModelKind kind = ModelKind::kMATURE;
  Index hidden = 512;
  Index tau = 12;
  MemoryShape memory{15, 60};
  Index align_dim = 0;  // 0 selects the segment size
  double gamma = 0.3;
  double epsilon = 0.1;
  Mode mode = Mode::kSparse;  // forecast target of single-task kinds
  std::vector<Index> mlp_layers{256, 128, 128, 64};

  Index resolved_align_dim() const { return align_dim > 0 ? align_dim : memory.segment_size; }
  Index head_hidden() const { return std::max<Index>(1, hidden / 2); }
  /// Throws SpecError on non-positive sizes or out-of-range gamma/epsilon.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

struct StationCounts {
  Index intensive = 0;
  Index sparse = 0;
};

/// One window per column: `tau` matrices of shape stations x batch per mode.
/// A mode the model does not consume may be left empty.
struct WindowInputs {
  std::vector<Matrix> intensive;
  std::vector<Matrix> sparse;
};

/// Tape outputs of a forward pass; a mode the model does not forecast is an unbound Var.
struct Forecast {
  Var intensive;
  Var sparse;
};

struct ForecastValues {
  Matrix intensive;
  Matrix sparse;
};

/// Analytic parameter count of a trainable kind.
std::size_t expected_parameter_count(const ModelSpec& spec, StationCounts counts);

/// A trainable forecasting network. Parameter names:
///   single-task     marn.* | lstm.* | mlp.*, head.*
///   multi-task      marn_R.*, marn_S.* (or lstm_R/lstm_S, or lstm for C-LSTM),
///                   head_R.*, head_S.*, plus adapt.* (MATURE) or fuse_mem.* (MARN-C)
/// Every head is [in -> hidden/2 -> stations] with tanh between and a linear output.
class Forecaster {
 public:
  /// Throws SpecError for non-trainable kinds or a mode-arity mismatch.
  static Forecaster build(const ModelSpec& spec, StationCounts counts, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  StationCounts counts() const { return counts_; }
  std::uint64_t seed() const { return seed_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  bool forecasts(Mode mode) const;

  /// Records the network on `tape`; predictions are stations x batch.
  Forecast forward(Tape& tape, const WindowInputs& inputs);
  /// Forward pass without gradients. Parameters are only read.
  ForecastValues predict(const WindowInputs& inputs) const;

 private:
  Forecaster(ModelSpec spec, StationCounts counts, std::uint64_t seed)
      : spec_(std::move(spec)), counts_(counts), seed_(seed) {}

  void check_inputs(const WindowInputs& inputs) const;

  ModelSpec spec_;
  StationCounts counts_;
  std::uint64_t seed_ = 0;
  ParameterSet params_;
};

}  // namespace mature
