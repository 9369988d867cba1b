#include "mature/adaption.hpp"

#include "mature/init.hpp"

namespace mature {

void add_adaption_parameters(ParameterSet& params, std::uint64_t seed, const std::string& prefix,
                             MemoryShape shape, Index align_dim) {
  const Index S = shape.segment_size;
  if (align_dim <= 0) throw SpecError("adaption: align dimension must be positive");
  add_weight(params, seed, prefix + ".W_g", align_dim, 2 * S, 2 * S);
  add_weight(params, seed, prefix + ".v", align_dim, 1, align_dim);
  add_weight(params, seed, prefix + ".W_b", S, S, S);
  add_bias(params, prefix + ".b_b", S);
  add_weight(params, seed, prefix + ".W_l", S, S, S);
  add_bias(params, prefix + ".b_l", S);
}

AdaptionWeights bind_adaption(Tape& tape, ParameterSet& params, const std::string& prefix,
                              MemoryShape shape, Scalar gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw SpecError("adaption: gamma must lie in [0, 1], got " + std::to_string(gamma));
  }
  auto p = [&](const char* suffix) { return tape.parameter(params.at(prefix + suffix)); };
  AdaptionWeights w;
  w.W_g = p(".W_g");
  w.v = p(".v");
  w.W_b = p(".W_b");
  w.b_b = p(".b_b");
  w.W_l = p(".W_l");
  w.b_l = p(".b_l");
  w.gamma = gamma;
  w.shape = shape;
  return w;
}

std::size_t adaption_parameter_count(MemoryShape shape, Index align_dim) {
  const Index S = shape.segment_size;
  return static_cast<std::size_t>(align_dim * 2 * S + align_dim + 2 * (S * S + S));
}

AdaptionState adaption_initial_state(Tape& tape, MemoryShape shape) {
  return {tape.constant(Matrix::Zero(shape.segment_size, 1)),
          tape.constant(Matrix::Constant(shape.segment_size, 1, 0.5))};
}

Var align_score(const Var& row_intensive, const Var& row_sparse, const AdaptionWeights& w) {
  if (row_intensive.rows() != row_sparse.rows() || row_intensive.cols() != 1 || row_sparse.cols() != 1) {
    throw DimensionError("align_score: rows " + shape_string(row_intensive.value()) + " and " +
                         shape_string(row_sparse.value()));
  }
  Var joint = concat_rows({row_intensive, row_sparse});
  return matmul(transpose(w.v), tanh(matmul(w.W_g, joint)));
}

Var align_scores(const Var& memory_intensive, const Var& memory_sparse, const AdaptionWeights& w) {
  const Index K = w.shape.segments;
  if (memory_intensive.rows() != w.shape.flat() || memory_sparse.rows() != w.shape.flat() ||
      memory_intensive.cols() != memory_sparse.cols()) {
    throw DimensionError("align_scores: memories " + shape_string(memory_intensive.value()) +
                         " and " + shape_string(memory_sparse.value()));
  }
  const Index batch = memory_intensive.cols();
  Var rows_r = segments_to_columns(memory_intensive, K);  // S x (K*B)
  Var rows_s = segments_to_columns(memory_sparse, K);
  Var joint = concat_rows({rows_r, rows_s});               // 2S x (K*B)
  Var scores = matmul(transpose(w.v), tanh(matmul(w.W_g, joint)));  // 1 x (K*B)
  return reshape(scores, K, batch);
}

Var adaption_weights(const Var& memory_intensive_prev, const Var& memory_sparse_prev,
                     const AdaptionWeights& w) {
  return softmax(align_scores(memory_intensive_prev, memory_sparse_prev, w));
}

AdaptionState update_gates(const AdaptionState& state, const AdaptionWeights& w) {
  return {tanh(add(matmul(w.W_b, state.boost), w.b_b)),
          sigmoid(add(matmul(w.W_l, state.eliminate), w.b_l))};
}

Var adapted_candidate(const Var& memory_intensive, const AdaptionState& state, const Var& beta) {
  Var kept = mul(memory_intensive, one_minus(outer(beta, state.eliminate)));
  return add(kept, outer(beta, state.boost));
}

Var adapt_memory(const Var& memory_intensive_post, const Var& memory_sparse_post,
                 const AdaptionState& state, const Var& beta, const AdaptionWeights& w) {
  if (memory_intensive_post.rows() != memory_sparse_post.rows() ||
      memory_intensive_post.cols() != memory_sparse_post.cols()) {
    throw DimensionError("adapt_memory: memories " + shape_string(memory_intensive_post.value()) +
                         " and " + shape_string(memory_sparse_post.value()));
  }
  Var candidate = adapted_candidate(memory_intensive_post, state, beta);
  return add(scale(memory_sparse_post, w.gamma), scale(candidate, 1.0 - w.gamma));
}

}  // namespace mature
