#include "mature/recurrent.hpp"

#include "mature/init.hpp"

namespace mature {

namespace {

constexpr const char* kGates[] = {"i", "f", "o", "cand"};

void check_input(const LstmWeights& w, const Var& h_prev, const Var& x) {
  if (x.rows() != w.input()) {
    throw DimensionError("lstm: input " + shape_string(x.value()) + " but W_i is " +
                         shape_string(w.W_i.value()));
  }
  if (h_prev.rows() != w.hidden()) {
    throw DimensionError("lstm: hidden state " + shape_string(h_prev.value()) + " but U_i is " +
                         shape_string(w.U_i.value()));
  }
}

Var pre_activation(const Var& W, const Var& U, const Var& b, const Var& x, const Var& h_prev) {
  return add(add(matmul(W, x), matmul(U, h_prev)), b);
}

}  // namespace

void add_lstm_parameters(ParameterSet& params, std::uint64_t seed, const std::string& prefix,
                         Index input, Index hidden) {
  for (const char* g : kGates) add_weight(params, seed, prefix + ".W_" + g, hidden, input, hidden);
  for (const char* g : kGates) add_weight(params, seed, prefix + ".U_" + g, hidden, hidden, hidden);
  for (const char* g : kGates) add_bias(params, prefix + ".b_" + g, hidden);
}

LstmWeights bind_lstm(Tape& tape, ParameterSet& params, const std::string& prefix) {
  auto p = [&](const char* suffix) { return tape.parameter(params.at(prefix + suffix)); };
  LstmWeights w;
  w.W_i = p(".W_i");
  w.W_f = p(".W_f");
  w.W_o = p(".W_o");
  w.W_cand = p(".W_cand");
  w.U_i = p(".U_i");
  w.U_f = p(".U_f");
  w.U_o = p(".U_o");
  w.U_cand = p(".U_cand");
  w.b_i = p(".b_i");
  w.b_f = p(".b_f");
  w.b_o = p(".b_o");
  w.b_cand = p(".b_cand");
  return w;
}

std::size_t lstm_parameter_count(Index input, Index hidden) {
  return static_cast<std::size_t>(4 * (hidden * input + hidden * hidden + hidden));
}

LstmState lstm_initial_state(Tape& tape, Index hidden, Index batch) {
  return {tape.constant(Matrix::Zero(hidden, batch)), tape.constant(Matrix::Zero(hidden, batch))};
}

LstmGates lstm_gates(const LstmWeights& w, const Var& h_prev, const Var& x) {
  check_input(w, h_prev, x);
  LstmGates g;
  g.input = sigmoid(pre_activation(w.W_i, w.U_i, w.b_i, x, h_prev));
  g.forget = sigmoid(pre_activation(w.W_f, w.U_f, w.b_f, x, h_prev));
  g.output = sigmoid(pre_activation(w.W_o, w.U_o, w.b_o, x, h_prev));
  g.candidate = tanh(pre_activation(w.W_cand, w.U_cand, w.b_cand, x, h_prev));
  return g;
}

Var lstm_cell(const LstmGates& gates, const Var& c_prev) {
  return add(mul(gates.forget, c_prev), mul(gates.input, gates.candidate));
}

LstmState lstm_step(const LstmWeights& w, const LstmState& state, const Var& x) {
  const LstmGates gates = lstm_gates(w, state.h, x);
  Var c = lstm_cell(gates, state.c);
  Var h = mul(gates.output, tanh(c));
  return {h, c};
}

std::vector<LstmState> lstm_unroll(const LstmWeights& w, const LstmState& initial,
                                   const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("lstm_unroll: empty input sequence");
  std::vector<LstmState> states;
  states.reserve(xs.size());
  LstmState s = initial;
  for (const Var& x : xs) {
    s = lstm_step(w, s, x);
    states.push_back(s);
  }
  return states;
}

}  // namespace mature
