#pragma once

// Knowledge adaption from the station-intensive memory into the
// station-sparse memory.
//
//   g_k      = v^T tanh(W_g [M^R_k ; M^S_k])          (align score per segment)
//   beta     = softmax_k g_k                          (on the previous step's memories)
//   b_t      = tanh(W_b b_{t-1} + b_b)                (boost)
//   l_t      = sigmoid(W_l l_{t-1} + b_l)             (eliminate)
//   M^new    = M^R * (1 - beta l^T) + beta b^T
//   M^S_t    = gamma * M^S + (1 - gamma) * M^new      (on the current post-write memories)
//
// Adaption flows one way only: the intensive memory is never modified.

#include <cstdint>
#include <string>

#include "mature/autodiff.hpp"
#include "mature/memory.hpp"

namespace mature {

struct AdaptionWeights {
  Var W_g;       // d x 2S
  Var v;         // d x 1
  Var W_b, b_b;  // S x S, S x 1
  Var W_l, b_l;  // S x S, S x 1
  Scalar gamma = 1.0;
  MemoryShape shape;
};

struct AdaptionState {
  Var boost;      // S x 1
  Var eliminate;  // S x 1
};

void add_adaption_parameters(ParameterSet& params, std::uint64_t seed, const std::string& prefix,
                             MemoryShape shape, Index align_dim);
AdaptionWeights bind_adaption(Tape& tape, ParameterSet& params, const std::string& prefix,
                              MemoryShape shape, Scalar gamma);
std::size_t adaption_parameter_count(MemoryShape shape, Index align_dim);

/// b_0 = 0, l_0 = sigmoid(0) = 0.5.
AdaptionState adaption_initial_state(Tape& tape, MemoryShape shape);

/// Align score of one pair of segment rows (each S x 1); 1 x 1.
Var align_score(const Var& row_intensive, const Var& row_sparse, const AdaptionWeights& w);
/// Align scores of all K segment pairs of batched memories; K x B.
Var align_scores(const Var& memory_intensive, const Var& memory_sparse, const AdaptionWeights& w);
/// Softmax of the align scores over segments; K x B.
Var adaption_weights(const Var& memory_intensive_prev, const Var& memory_sparse_prev,
                     const AdaptionWeights& w);

AdaptionState update_gates(const AdaptionState& state, const AdaptionWeights& w);

/// Candidate memory M^new built from the intensive memory.
Var adapted_candidate(const Var& memory_intensive, const AdaptionState& state, const Var& beta);
/// gamma-blend of the sparse memory with M^new.
Var adapt_memory(const Var& memory_intensive_post, const Var& memory_sparse_post,
                 const AdaptionState& state, const Var& beta, const AdaptionWeights& w);

}  // namespace mature
