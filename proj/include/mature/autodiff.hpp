#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// Every value on the tape is a column-major matrix. Vectors are n x 1, and a
// batch of B vectors is an n x B matrix, so the same operation serves a single
// sample and a mini-batch. The tape is append-only and creation order is a
// topological order; backward() walks it once in reverse.

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mature/errors.hpp"

namespace mature {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Index = Eigen::Index;

/// Lower bound applied to each norm in cosine similarity.
inline constexpr Scalar kNormFloor = 1e-8;

std::string shape_string(const Matrix& m);

/// A named trainable tensor. Gradients accumulate into `grad` on backward.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
};

/// Ordered, name-unique collection of parameters with stable addresses.
class ParameterSet {
 public:
  Parameter& add(std::string name, Matrix init);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return items_.size(); }
  /// Total number of scalar weights.
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::deque<Parameter> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  /// Accumulated gradient; a zero matrix of matching shape if none arrived.
  Matrix grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Propagates the output gradient of a node to its inputs via Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  /// Leaf bound to `p`. Repeated calls for the same parameter return the same node.
  Var parameter(Parameter& p);

  /// Appends an operation node. `backward` is dropped when no input needs a gradient.
  Var record(std::string_view op, Matrix value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var record(std::string_view op, Matrix value, const std::vector<Var>& inputs,
             BackwardFn backward);

  /// Adds `g` into the gradient of node `target` if that node requires one.
  void accumulate(const Var& target, const Matrix& g);

  /// Reverse sweep from a 1x1 loss. Parameter gradients are added to Parameter::grad.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }

 private:
  friend class Var;

  struct Node {
    std::string op;
    Matrix value;
    Matrix grad;  // empty until something is accumulated
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* bound = nullptr;
  };

  Var push(Node node);
  void check_owner(const Var& v) const;

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> bound_params_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Operations. Binary element-wise ops accept equal shapes, or an r x 1 operand
// against an r x c operand (column broadcast), or a 1 x 1 operand against any
// shape. The broadcast operand's gradient is reduced accordingly.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Scalar factor);
Var one_minus(const Var& a);

Var tanh(const Var& a);
Var sigmoid(const Var& a);

/// Softmax over each column independently, with max subtraction.
Var softmax(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Mean of squared element differences; 1 x 1.
Var mse(const Var& prediction, const Var& target);

/// Stacks operands vertically; all must share a column count.
Var concat_rows(const std::vector<Var>& parts);
/// Rows [begin, end) of `a`.
Var slice_rows(const Var& a, Index begin, Index end);
/// Column-major reinterpretation to rows x cols.
Var reshape(const Var& a, Index rows, Index cols);

// ---------------------------------------------------------------------------
// Batched segment-matrix operations. A K x S matrix per sample is stored as a
// column of length K*S in column-major order (entry (k, s) at k + K*s), so a
// batch of such matrices is a (K*S) x B tensor.

/// Cosine similarity of every segment row with the sample's key: K x B.
/// `keys` is S x B. Each norm is floored at kNormFloor.
Var cosine_rows(const Var& memory, const Var& keys, Index segments);
/// Single-vector cosine similarity, 1 x 1.
Var cosine_similarity(const Var& x, const Var& y);

/// Batched outer product u v^T. u is K x B (or K x 1), v is S x B (or S x 1);
/// result is (K*S) x B in the segment layout.
Var outer(const Var& u, const Var& v);

/// Weighted combination of segment rows, M^T w per sample: S x B.
Var segment_read(const Var& memory, const Var& weights, Index segments);

/// (K*S) x B -> S x (K*B): each segment row becomes a column (column k + K*b).
Var segments_to_columns(const Var& memory, Index segments);
/// Inverse of segments_to_columns.
Var columns_to_segments(const Var& columns, Index segments);

// Plain (tape-free) helpers used by reference code and tests.
Matrix segment_view(const Matrix& memory_column, Index segments);
Vector flatten_segments(const Matrix& segment_matrix);

}  // namespace mature
