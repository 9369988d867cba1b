#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mature/autodiff.hpp"

namespace mature {

/// Gate weights of one LSTM cell bound to a tape. Input weights are
/// hidden x input, recurrent weights hidden x hidden, biases hidden x 1.
struct LstmWeights {
  Var W_i, W_f, W_o, W_cand;
  Var U_i, U_f, U_o, U_cand;
  Var b_i, b_f, b_o, b_cand;

  Index hidden() const { return U_i.rows(); }
  Index input() const { return W_i.cols(); }
};

struct LstmState {
  Var h;
  Var c;
};

/// Activated gates of one step; kept separate because the memory cell
/// replaces the plain hidden-state output.
struct LstmGates {
  Var input;
  Var forget;
  Var output;
  Var candidate;
};

/// Registers `<prefix>.W_i` ... `<prefix>.b_cand`. Weights are
/// uniform(-1/sqrt(hidden), 1/sqrt(hidden)); biases start at zero.
void add_lstm_parameters(ParameterSet& params, std::uint64_t seed, const std::string& prefix,
                         Index input, Index hidden);
LstmWeights bind_lstm(Tape& tape, ParameterSet& params, const std::string& prefix);

/// Number of scalars in one cell.
std::size_t lstm_parameter_count(Index input, Index hidden);

/// Zero hidden and cell state for `batch` columns.
LstmState lstm_initial_state(Tape& tape, Index hidden, Index batch);

LstmGates lstm_gates(const LstmWeights& w, const Var& h_prev, const Var& x);
/// c_t = f * c_{t-1} + i * candidate.
Var lstm_cell(const LstmGates& gates, const Var& c_prev);

LstmState lstm_step(const LstmWeights& w, const LstmState& state, const Var& x);
/// States after each input; throws ContractError on an empty sequence.
std::vector<LstmState> lstm_unroll(const LstmWeights& w, const LstmState& initial,
                                   const std::vector<Var>& xs);

}  // namespace mature
