#pragma once

// Memory-augmented recurrent cell: an LSTM whose hidden output is fused with
// content read from an external K x S memory, which it then rewrites.
//
// Per step t, in this order:
//   1. alpha_t = softmax_k cos(M_{t-1}[k,:], k_{t-1})
//   2. r_t     = M_{t-1}^T alpha_t
//   3. LSTM gates and c_t
//   4. h_t     = o_t * tanh(c_t + sigmoid(W_r r_t + W_c c_t) * (W_h r_t))
//   5. M_t     = M_{t-1} * (1 - alpha_t e_t^T) + alpha_t a_t^T,
//      e_t = sigmoid(W_e h_t + b_e), a_t = tanh(W_a h_t + b_a)
//   6. k_t     = tanh(W_k h_t + b_k)
//
// Memories use the segment layout of autodiff.hpp: (K*S) x B.

#include <cstdint>
#include <string>
#include <vector>

#include "mature/autodiff.hpp"
#include "mature/recurrent.hpp"

namespace mature {

struct MemoryShape {
  Index segments = 15;
  Index segment_size = 60;

  Index flat() const { return segments * segment_size; }
};

struct MarnWeights {
  LstmWeights lstm;
  Var W_k, b_k;  // key emission, S x h
  Var W_e, b_e;  // erase, S x h
  Var W_a, b_a;  // add, S x h
  Var W_r;       // fusion gate on the read vector, h x S
  Var W_c;       // fusion gate on the cell, h x h
  Var W_h;       // fusion projection of the read vector, h x S
  MemoryShape shape;
};

struct MarnState {
  LstmState lstm;
  Var memory;  // M_t, (K*S) x B
  Var key;     // k_t, S x B
};

/// Registers the LSTM gates under `<prefix>.lstm` and the memory path
/// weights under `<prefix>.W_k` etc.
void add_marn_parameters(ParameterSet& params, std::uint64_t seed, const std::string& prefix,
                         Index input, Index hidden, MemoryShape shape);
MarnWeights bind_marn(Tape& tape, ParameterSet& params, const std::string& prefix, MemoryShape shape);
std::size_t marn_parameter_count(Index input, Index hidden, MemoryShape shape);

/// Names of the weights that only feed the memory path.
std::vector<std::string> marn_memory_parameter_names(const std::string& prefix);

/// h = c = 0, M = 0, k = 0.
MarnState marn_initial_state(Tape& tape, Index hidden, MemoryShape shape, Index batch);

Var emit_key(const MarnWeights& w, const Var& h);
/// Content-based addressing weights over segments, K x B.
Var address(const Var& memory_prev, const Var& key_prev, MemoryShape shape);
Var read_memory(const Var& memory_prev, const Var& alpha, MemoryShape shape);
Var erase_vector(const MarnWeights& w, const Var& h);
Var add_vector(const MarnWeights& w, const Var& h);
/// Erase-then-add update with explicit erase/add vectors.
Var write_memory(const Var& memory_prev, const Var& alpha, const Var& erase, const Var& add_v);
/// Erase-then-add update driven by hidden state h.
Var write_memory(const MarnWeights& w, const Var& memory_prev, const Var& alpha, const Var& h);
Var fuse_hidden(const MarnWeights& w, const Var& output_gate, const Var& cell, const Var& read);

MarnState marn_step(const MarnWeights& w, const MarnState& state, const Var& x);
std::vector<MarnState> marn_unroll(const MarnWeights& w, const MarnState& initial,
                                   const std::vector<Var>& xs);

}  // namespace mature
