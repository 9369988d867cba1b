#include "mature/memory.hpp"

#include "mature/init.hpp"

namespace mature {

void add_marn_parameters(ParameterSet& params, std::uint64_t seed, const std::string& prefix,
                         Index input, Index hidden, MemoryShape shape) {
  const Index S = shape.segment_size;
  add_lstm_parameters(params, seed, prefix + ".lstm", input, hidden);
  for (const char* name : {"k", "e", "a"}) {
    add_weight(params, seed, prefix + ".W_" + name, S, hidden, hidden);
    add_bias(params, prefix + ".b_" + std::string(name), S);
  }
  add_weight(params, seed, prefix + ".W_r", hidden, S, hidden);
  add_weight(params, seed, prefix + ".W_c", hidden, hidden, hidden);
  add_weight(params, seed, prefix + ".W_h", hidden, S, hidden);
}

MarnWeights bind_marn(Tape& tape, ParameterSet& params, const std::string& prefix, MemoryShape shape) {
  auto p = [&](const char* suffix) { return tape.parameter(params.at(prefix + suffix)); };
  MarnWeights w;
  w.lstm = bind_lstm(tape, params, prefix + ".lstm");
  w.W_k = p(".W_k");
  w.b_k = p(".b_k");
  w.W_e = p(".W_e");
  w.b_e = p(".b_e");
  w.W_a = p(".W_a");
  w.b_a = p(".b_a");
  w.W_r = p(".W_r");
  w.W_c = p(".W_c");
  w.W_h = p(".W_h");
  w.shape = shape;
  return w;
}

std::size_t marn_parameter_count(Index input, Index hidden, MemoryShape shape) {
  const Index S = shape.segment_size;
  const Index memory_path = 3 * (S * hidden + S) + 2 * hidden * S + hidden * hidden;
  return lstm_parameter_count(input, hidden) + static_cast<std::size_t>(memory_path);
}

std::vector<std::string> marn_memory_parameter_names(const std::string& prefix) {
  std::vector<std::string> names;
  for (const char* s : {".W_k", ".b_k", ".W_e", ".b_e", ".W_a", ".b_a", ".W_r", ".W_c", ".W_h"}) {
    names.push_back(prefix + s);
  }
  return names;
}

MarnState marn_initial_state(Tape& tape, Index hidden, MemoryShape shape, Index batch) {
  MarnState s;
  s.lstm = lstm_initial_state(tape, hidden, batch);
  s.memory = tape.constant(Matrix::Zero(shape.flat(), batch));
  s.key = tape.constant(Matrix::Zero(shape.segment_size, batch));
  return s;
}

Var emit_key(const MarnWeights& w, const Var& h) { return tanh(add(matmul(w.W_k, h), w.b_k)); }

Var address(const Var& memory_prev, const Var& key_prev, MemoryShape shape) {
  return softmax(cosine_rows(memory_prev, key_prev, shape.segments));
}

Var read_memory(const Var& memory_prev, const Var& alpha, MemoryShape shape) {
  return segment_read(memory_prev, alpha, shape.segments);
}

Var erase_vector(const MarnWeights& w, const Var& h) { return sigmoid(add(matmul(w.W_e, h), w.b_e)); }

Var add_vector(const MarnWeights& w, const Var& h) { return tanh(add(matmul(w.W_a, h), w.b_a)); }

Var write_memory(const Var& memory_prev, const Var& alpha, const Var& erase, const Var& add_v) {
  if (memory_prev.rows() != alpha.rows() * erase.rows()) {
    throw DimensionError("write_memory: memory " + shape_string(memory_prev.value()) +
                         " vs alpha " + shape_string(alpha.value()) + " and erase " +
                         shape_string(erase.value()));
  }
  Var kept = mul(memory_prev, one_minus(outer(alpha, erase)));
  return add(kept, outer(alpha, add_v));
}

Var write_memory(const MarnWeights& w, const Var& memory_prev, const Var& alpha, const Var& h) {
  return write_memory(memory_prev, alpha, erase_vector(w, h), add_vector(w, h));
}

Var fuse_hidden(const MarnWeights& w, const Var& output_gate, const Var& cell, const Var& read) {
  Var gate = sigmoid(add(matmul(w.W_r, read), matmul(w.W_c, cell)));
  Var fused = add(cell, mul(gate, matmul(w.W_h, read)));
  return mul(output_gate, tanh(fused));
}

MarnState marn_step(const MarnWeights& w, const MarnState& state, const Var& x) {
  Var alpha = address(state.memory, state.key, w.shape);
  Var read = read_memory(state.memory, alpha, w.shape);
  const LstmGates gates = lstm_gates(w.lstm, state.lstm.h, x);
  Var c = lstm_cell(gates, state.lstm.c);
  Var h = fuse_hidden(w, gates.output, c, read);
  MarnState next;
  next.lstm = {h, c};
  next.memory = write_memory(w, state.memory, alpha, h);
  next.key = emit_key(w, h);
  return next;
}

std::vector<MarnState> marn_unroll(const MarnWeights& w, const MarnState& initial,
                                   const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("marn_unroll: empty input sequence");
  std::vector<MarnState> states;
  states.reserve(xs.size());
  MarnState s = initial;
  for (const Var& x : xs) {
    s = marn_step(w, s, x);
    states.push_back(s);
  }
  return states;
}

}  // namespace mature
