#include "mature/model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

#include "mature/init.hpp"
#include "mature/recurrent.hpp"

namespace mature {

namespace {

struct KindName {
  ModelKind kind;
  const char* name;
};

constexpr std::array<KindName, 10> kKindNames{{
    {ModelKind::kHA, "HA"},
    {ModelKind::kLR, "LR"},
    {ModelKind::kMLP, "MLP"},
    {ModelKind::kLSTM, "LSTM"},
    {ModelKind::kCLSTM, "C-LSTM"},
    {ModelKind::kMTLSTM, "MT-LSTM"},
    {ModelKind::kMARN, "MARN"},
    {ModelKind::kMARNS, "MARN-S"},
    {ModelKind::kMARNC, "MARN-C"},
    {ModelKind::kMATURE, "MATURE"},
}};

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

// --- heads -----------------------------------------------------------------

void add_head(ParameterSet& params, std::uint64_t seed, const std::string& prefix, Index in,
              Index hidden, Index out) {
  add_weight(params, seed, prefix + ".W1", hidden, in, in);
  add_bias(params, prefix + ".b1", hidden);
  add_weight(params, seed, prefix + ".W2", out, hidden, hidden);
  add_bias(params, prefix + ".b2", out);
}

std::size_t head_count(Index in, Index hidden, Index out) {
  return static_cast<std::size_t>(hidden * in + hidden + out * hidden + out);
}

Var apply_head(Tape& tape, ParameterSet& params, const std::string& prefix, const Var& z) {
  auto p = [&](const char* s) { return tape.parameter(params.at(prefix + s)); };
  Var hidden = tanh(add(matmul(p(".W1"), z), p(".b1")));
  return add(matmul(p(".W2"), hidden), p(".b2"));
}

// --- MLP -------------------------------------------------------------------

std::size_t mlp_count(const std::vector<Index>& layers, Index in, Index out) {
  std::size_t n = 0;
  Index prev = in;
  for (Index width : layers) {
    n += static_cast<std::size_t>(width * prev + width);
    prev = width;
  }
  return n + static_cast<std::size_t>(out * prev + out);
}

std::vector<Var> constants(Tape& tape, const std::vector<Matrix>& xs) {
  std::vector<Var> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(tape.constant(x));
  return out;
}

Index batch_of(const WindowInputs& in) {
  if (!in.intensive.empty()) return in.intensive.front().cols();
  if (!in.sparse.empty()) return in.sparse.front().cols();
  return 0;
}

const std::string kFuseMemory = "fuse_mem";

}  // namespace

std::string to_string(ModelKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  return "?";
}

std::string to_string(Mode mode) { return mode == Mode::kIntensive ? "intensive" : "sparse"; }

ModelKind parse_model_kind(std::string_view name) {
  const std::string key = upper(name);
  for (const auto& k : kKindNames) {
    if (key == k.name) return k.kind;
  }
  if (key == "CLSTM") return ModelKind::kCLSTM;
  if (key == "MTLSTM") return ModelKind::kMTLSTM;
  if (key == "MARNS") return ModelKind::kMARNS;
  if (key == "MARNC") return ModelKind::kMARNC;
  throw SpecError("unknown model kind: " + std::string(name));
}

Mode parse_mode(std::string_view name) {
  const std::string key = upper(name);
  if (key == "INTENSIVE" || key == "R") return Mode::kIntensive;
  if (key == "SPARSE" || key == "S") return Mode::kSparse;
  throw SpecError("unknown mode: " + std::string(name) + " (expected intensive or sparse)");
}

bool is_multi_task(ModelKind kind) {
  switch (kind) {
    case ModelKind::kCLSTM:
    case ModelKind::kMTLSTM:
    case ModelKind::kMARNS:
    case ModelKind::kMARNC:
    case ModelKind::kMATURE:
      return true;
    default:
      return false;
  }
}

bool is_trainable(ModelKind kind) { return kind != ModelKind::kHA && kind != ModelKind::kLR; }

const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds = [] {
    std::vector<ModelKind> v;
    for (const auto& k : kKindNames) v.push_back(k.kind);
    return v;
  }();
  return kinds;
}

void ModelSpec::validate() const {
  if (hidden <= 0) throw SpecError("hidden size must be positive");
  if (tau <= 0) throw SpecError("window length tau must be positive");
  if (memory.segments <= 0 || memory.segment_size <= 0) {
    throw SpecError("memory segments and segment size must be positive");
  }
  if (align_dim < 0) throw SpecError("align_dim must be non-negative");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw SpecError("gamma must lie in [0, 1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw SpecError("epsilon must lie in [0, 1]");
  for (Index w : mlp_layers) {
    if (w <= 0) throw SpecError("mlp layer widths must be positive");
  }
}

void to_json(nlohmann::json& j, const ModelSpec& spec) {
  j = nlohmann::json{{"kind", to_string(spec.kind)},
                     {"hidden", spec.hidden},
                     {"tau", spec.tau},
                     {"segments", spec.memory.segments},
                     {"segment_size", spec.memory.segment_size},
                     {"align_dim", spec.align_dim},
                     {"gamma", spec.gamma},
                     {"epsilon", spec.epsilon},
                     {"mode", to_string(spec.mode)},
                     {"mlp_layers", spec.mlp_layers}};
}

void from_json(const nlohmann::json& j, ModelSpec& spec) {
  static const std::array<const char*, 10> kKeys{"kind",    "hidden",  "tau",  "segments",
                                                 "segment_size", "align_dim", "gamma",
                                                 "epsilon", "mode",    "mlp_layers"};
  for (const auto& item : j.items()) {
    if (std::find_if(kKeys.begin(), kKeys.end(), [&](const char* k) { return item.key() == k; }) ==
        kKeys.end()) {
      throw SpecError("unknown model key: " + item.key());
    }
  }
  if (j.contains("kind")) spec.kind = parse_model_kind(j.at("kind").get<std::string>());
  if (j.contains("hidden")) spec.hidden = j.at("hidden").get<Index>();
  if (j.contains("tau")) spec.tau = j.at("tau").get<Index>();
  if (j.contains("segments")) spec.memory.segments = j.at("segments").get<Index>();
  if (j.contains("segment_size")) spec.memory.segment_size = j.at("segment_size").get<Index>();
  if (j.contains("align_dim")) spec.align_dim = j.at("align_dim").get<Index>();
  if (j.contains("gamma")) spec.gamma = j.at("gamma").get<double>();
  if (j.contains("epsilon")) spec.epsilon = j.at("epsilon").get<double>();
  if (j.contains("mode")) spec.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("mlp_layers")) spec.mlp_layers = j.at("mlp_layers").get<std::vector<Index>>();
}

std::size_t expected_parameter_count(const ModelSpec& spec, StationCounts counts) {
  const Index h = spec.hidden;
  const Index hh = spec.head_hidden();
  const Index single = spec.mode == Mode::kIntensive ? counts.intensive : counts.sparse;
  const Index R = counts.intensive;
  const Index S = counts.sparse;
  switch (spec.kind) {
    case ModelKind::kMLP:
      return mlp_count(spec.mlp_layers, spec.tau * single, single);
    case ModelKind::kLSTM:
      return lstm_parameter_count(single, h) + head_count(h, hh, single);
    case ModelKind::kMARN:
      return marn_parameter_count(single, h, spec.memory) + head_count(h, hh, single);
    case ModelKind::kCLSTM:
      return lstm_parameter_count(R + S, h) + head_count(h, hh, R) + head_count(h, hh, S);
    case ModelKind::kMTLSTM:
      return lstm_parameter_count(R, h) + lstm_parameter_count(S, h) + head_count(2 * h, hh, R) +
             head_count(2 * h, hh, S);
    case ModelKind::kMARNS:
    case ModelKind::kMARNC:
    case ModelKind::kMATURE: {
      std::size_t n = marn_parameter_count(R, h, spec.memory) + marn_parameter_count(S, h, spec.memory) +
                      head_count(2 * h, hh, R) + head_count(2 * h, hh, S);
      const Index seg = spec.memory.segment_size;
      if (spec.kind == ModelKind::kMARNC) n += static_cast<std::size_t>(seg * 2 * seg + seg);
      if (spec.kind == ModelKind::kMATURE) n += adaption_parameter_count(spec.memory, spec.resolved_align_dim());
      return n;
    }
    default:
      throw SpecError(to_string(spec.kind) + " has no trainable parameters");
  }
}

Forecaster Forecaster::build(const ModelSpec& spec, StationCounts counts, std::uint64_t seed) {
  spec.validate();
  if (!is_trainable(spec.kind)) {
    throw SpecError(to_string(spec.kind) + " is not a trainable forecaster");
  }
  if (counts.intensive < 0 || counts.sparse < 0) throw SpecError("negative station count");
  if (is_multi_task(spec.kind)) {
    if (counts.intensive <= 0 || counts.sparse <= 0) {
      throw SpecError(to_string(spec.kind) + " needs both an intensive and a sparse mode");
    }
  } else {
    const Index wanted = spec.mode == Mode::kIntensive ? counts.intensive : counts.sparse;
    const Index other = spec.mode == Mode::kIntensive ? counts.sparse : counts.intensive;
    if (wanted <= 0 || other != 0) {
      throw SpecError(to_string(spec.kind) + " is single-task and takes exactly one mode (" +
                      to_string(spec.mode) + ")");
    }
  }

  Forecaster f(spec, counts, seed);
  ParameterSet& p = f.params_;
  const Index h = spec.hidden;
  const Index hh = spec.head_hidden();
  const Index R = counts.intensive;
  const Index S = counts.sparse;
  const Index single = spec.mode == Mode::kIntensive ? R : S;

  switch (spec.kind) {
    case ModelKind::kMLP: {
      Index prev = spec.tau * single;
      for (std::size_t i = 0; i < spec.mlp_layers.size(); ++i) {
        const std::string name = "mlp.layer" + std::to_string(i);
        add_weight(p, seed, name + ".W", spec.mlp_layers[i], prev, prev);
        add_bias(p, name + ".b", spec.mlp_layers[i]);
        prev = spec.mlp_layers[i];
      }
      add_weight(p, seed, "mlp.out.W", single, prev, prev);
      add_bias(p, "mlp.out.b", single);
      break;
    }
    case ModelKind::kLSTM:
      add_lstm_parameters(p, seed, "lstm", single, h);
      add_head(p, seed, "head", h, hh, single);
      break;
    case ModelKind::kMARN:
      add_marn_parameters(p, seed, "marn", single, h, spec.memory);
      add_head(p, seed, "head", h, hh, single);
      break;
    case ModelKind::kCLSTM:
      add_lstm_parameters(p, seed, "lstm", R + S, h);
      add_head(p, seed, "head_R", h, hh, R);
      add_head(p, seed, "head_S", h, hh, S);
      break;
    case ModelKind::kMTLSTM:
      add_lstm_parameters(p, seed, "lstm_R", R, h);
      add_lstm_parameters(p, seed, "lstm_S", S, h);
      add_head(p, seed, "head_R", 2 * h, hh, R);
      add_head(p, seed, "head_S", 2 * h, hh, S);
      break;
    case ModelKind::kMARNS:
    case ModelKind::kMARNC:
    case ModelKind::kMATURE: {
      add_marn_parameters(p, seed, "marn_R", R, h, spec.memory);
      add_marn_parameters(p, seed, "marn_S", S, h, spec.memory);
      add_head(p, seed, "head_R", 2 * h, hh, R);
      add_head(p, seed, "head_S", 2 * h, hh, S);
      const Index seg = spec.memory.segment_size;
      if (spec.kind == ModelKind::kMARNC) {
        add_weight(p, seed, kFuseMemory + ".W", seg, 2 * seg, 2 * seg);
        add_bias(p, kFuseMemory + ".b", seg);
      }
      if (spec.kind == ModelKind::kMATURE) {
        add_adaption_parameters(p, seed, "adapt", spec.memory, spec.resolved_align_dim());
      }
      break;
    }
    default:
      break;
  }
  return f;
}

bool Forecaster::forecasts(Mode mode) const {
  if (is_multi_task(spec_.kind)) return true;
  return spec_.mode == mode;
}

void Forecaster::check_inputs(const WindowInputs& inputs) const {
  auto check = [&](const std::vector<Matrix>& xs, Index stations, const char* label) {
    if (xs.size() != static_cast<std::size_t>(spec_.tau)) {
      throw DimensionError(std::string(label) + " window has " + std::to_string(xs.size()) +
                           " steps, model expects tau = " + std::to_string(spec_.tau));
    }
    const Index batch = xs.front().cols();
    for (const auto& x : xs) {
      if (x.rows() != stations || x.cols() != batch) {
        throw DimensionError(std::string(label) + " step is " + shape_string(x) + ", expected [" +
                             std::to_string(stations) + "x" + std::to_string(batch) + "]");
      }
    }
  };
  const bool needs_r = is_multi_task(spec_.kind) || spec_.mode == Mode::kIntensive;
  const bool needs_s = is_multi_task(spec_.kind) || spec_.mode == Mode::kSparse;
  if (needs_r) check(inputs.intensive, counts_.intensive, "intensive");
  if (needs_s) check(inputs.sparse, counts_.sparse, "sparse");
  if (needs_r && needs_s && inputs.intensive.front().cols() != inputs.sparse.front().cols()) {
    throw DimensionError("intensive and sparse windows have different batch sizes");
  }
}

Forecast Forecaster::forward(Tape& tape, const WindowInputs& inputs) {
  check_inputs(inputs);
  ParameterSet& p = params_;
  const Index h = spec_.hidden;
  const Index batch = batch_of(inputs);
  const MemoryShape shape = spec_.memory;
  Forecast out;

  auto assign_single = [&](const Var& y) {
    if (spec_.mode == Mode::kIntensive) {
      out.intensive = y;
    } else {
      out.sparse = y;
    }
  };
  const std::vector<Matrix>& single_inputs =
      spec_.mode == Mode::kIntensive ? inputs.intensive : inputs.sparse;

  switch (spec_.kind) {
    case ModelKind::kMLP: {
      Var z = concat_rows(constants(tape, single_inputs));
      for (std::size_t i = 0; i < spec_.mlp_layers.size(); ++i) {
        const std::string name = "mlp.layer" + std::to_string(i);
        z = tanh(add(matmul(tape.parameter(p.at(name + ".W")), z), tape.parameter(p.at(name + ".b"))));
      }
      assign_single(add(matmul(tape.parameter(p.at("mlp.out.W")), z), tape.parameter(p.at("mlp.out.b"))));
      break;
    }
    case ModelKind::kLSTM: {
      const LstmWeights w = bind_lstm(tape, p, "lstm");
      auto states = lstm_unroll(w, lstm_initial_state(tape, h, batch), constants(tape, single_inputs));
      assign_single(apply_head(tape, p, "head", states.back().h));
      break;
    }
    case ModelKind::kMARN: {
      const MarnWeights w = bind_marn(tape, p, "marn", shape);
      auto states = marn_unroll(w, marn_initial_state(tape, h, shape, batch), constants(tape, single_inputs));
      assign_single(apply_head(tape, p, "head", states.back().lstm.h));
      break;
    }
    case ModelKind::kCLSTM: {
      const LstmWeights w = bind_lstm(tape, p, "lstm");
      std::vector<Var> xs;
      for (std::size_t t = 0; t < inputs.intensive.size(); ++t) {
        xs.push_back(concat_rows({tape.constant(inputs.intensive[t]), tape.constant(inputs.sparse[t])}));
      }
      auto states = lstm_unroll(w, lstm_initial_state(tape, h, batch), xs);
      out.intensive = apply_head(tape, p, "head_R", states.back().h);
      out.sparse = apply_head(tape, p, "head_S", states.back().h);
      break;
    }
    case ModelKind::kMTLSTM: {
      const LstmWeights wr = bind_lstm(tape, p, "lstm_R");
      const LstmWeights ws = bind_lstm(tape, p, "lstm_S");
      auto sr = lstm_unroll(wr, lstm_initial_state(tape, h, batch), constants(tape, inputs.intensive));
      auto ss = lstm_unroll(ws, lstm_initial_state(tape, h, batch), constants(tape, inputs.sparse));
      Var z = concat_rows({sr.back().h, ss.back().h});
      out.intensive = apply_head(tape, p, "head_R", z);
      out.sparse = apply_head(tape, p, "head_S", z);
      break;
    }
    case ModelKind::kMARNS:
    case ModelKind::kMARNC:
    case ModelKind::kMATURE: {
      const MarnWeights wr = bind_marn(tape, p, "marn_R", shape);
      const MarnWeights ws = bind_marn(tape, p, "marn_S", shape);
      MarnState sr = marn_initial_state(tape, h, shape, batch);
      MarnState ss = marn_initial_state(tape, h, shape, batch);

      AdaptionWeights aw;
      AdaptionState gates;
      Var fuse_w, fuse_b;
      if (spec_.kind == ModelKind::kMATURE) {
        aw = bind_adaption(tape, p, "adapt", shape, spec_.gamma);
        gates = adaption_initial_state(tape, shape);
      } else if (spec_.kind == ModelKind::kMARNC) {
        fuse_w = tape.parameter(p.at(kFuseMemory + ".W"));
        fuse_b = tape.parameter(p.at(kFuseMemory + ".b"));
      }

      for (Index t = 0; t < spec_.tau; ++t) {
        const auto step = static_cast<std::size_t>(t);
        Var beta;
        if (spec_.kind == ModelKind::kMATURE) {
          beta = adaption_weights(sr.memory, ss.memory, aw);
          gates = update_gates(gates, aw);
        }
        sr = marn_step(wr, sr, tape.constant(inputs.intensive[step]));
        ss = marn_step(ws, ss, tape.constant(inputs.sparse[step]));
        if (spec_.kind == ModelKind::kMATURE) {
          ss.memory = adapt_memory(sr.memory, ss.memory, gates, beta, aw);
        } else if (spec_.kind == ModelKind::kMARNC) {
          Var joint = concat_rows({segments_to_columns(sr.memory, shape.segments),
                                   segments_to_columns(ss.memory, shape.segments)});
          Var rows = tanh(add(matmul(fuse_w, joint), fuse_b));
          ss.memory = columns_to_segments(rows, shape.segments);
        }
      }
      Var z = concat_rows({sr.lstm.h, ss.lstm.h});
      out.intensive = apply_head(tape, p, "head_R", z);
      out.sparse = apply_head(tape, p, "head_S", z);
      break;
    }
    default:
      throw SpecError(to_string(spec_.kind) + " has no network forward");
  }
  return out;
}

ForecastValues Forecaster::predict(const WindowInputs& inputs) const {
  Tape tape;
  // forward() binds parameters by reference but backward never runs here.
  Forecast f = const_cast<Forecaster*>(this)->forward(tape, inputs);
  ForecastValues v;
  if (f.intensive.valid()) v.intensive = f.intensive.value();
  if (f.sparse.valid()) v.sparse = f.sparse.value();
  return v;
}

}  // namespace mature
