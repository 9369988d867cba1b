#include "mature/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace mature {

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << '[' << m.rows() << 'x' << m.cols() << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// ParameterSet

Parameter& ParameterSet::add(std::string name, Matrix init) {
  if (index_.count(name) != 0) {
    throw SpecError("duplicate parameter name: " + name);
  }
  index_.emplace(name, items_.size());
  Parameter& p = items_.emplace_back();
  p.name = std::move(name);
  p.value = std::move(init);
  p.zero_grad();
  return p;
}

Parameter& ParameterSet::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw IndexError("unknown parameter: " + std::string(name));
  return items_[it->second];
}

const Parameter& ParameterSet::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw IndexError("unknown parameter: " + std::string(name));
  return items_[it->second];
}

bool ParameterSet::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.zero_grad();
}

// ---------------------------------------------------------------------------
// Var / Tape

const Matrix& Var::value() const {
  if (!valid()) throw ContractError("use of an unbound Var");
  return tape_->nodes_[static_cast<std::size_t>(id_)].value;
}

Matrix Var::grad() const {
  const auto& node = tape_->nodes_[static_cast<std::size_t>(id_)];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

bool Var::requires_grad() const {
  return tape_->nodes_[static_cast<std::size_t>(id_)].requires_grad;
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::check_owner(const Var& v) const {
  if (v.tape() != this) throw ContractError("Var belongs to a different tape");
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  auto it = bound_params_.find(&p);
  if (it != bound_params_.end()) return Var(this, it->second);
  Node n;
  n.op = "parameter";
  n.value = p.value;
  n.requires_grad = true;
  n.bound = &p;
  Var v = push(std::move(n));
  bound_params_.emplace(&p, v.id());
  return v;
}

Var Tape::record(std::string_view op, Matrix value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(op, std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(std::string_view op, Matrix value, const std::vector<Var>& inputs,
                 BackwardFn backward) {
  Node n;
  n.op = std::string(op);
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    check_owner(in);
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(in.id())].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::accumulate(const Var& target, const Matrix& g) {
  Node& node = nodes_[static_cast<std::size_t>(target.id())];
  if (!node.requires_grad) return;
  if (g.rows() != node.value.rows() || g.cols() != node.value.cols()) {
    throw DimensionError("gradient " + shape_string(g) + " does not match value " +
                         shape_string(node.value) + " of op '" + node.op + "'");
  }
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(const Var& loss) {
  check_owner(loss);
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward requires a scalar loss, got " + shape_string(loss.value()));
  }
  if (backward_done_) throw ContractError("backward already ran on this tape");
  backward_done_ = true;

  nodes_[static_cast<std::size_t>(loss.id())].grad = Matrix::Ones(1, 1);
  for (int i = loss.id(); i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (!node.requires_grad || node.grad.size() == 0 || !node.backward) continue;
    node.backward(*this, node.grad);
  }
  for (Node& node : nodes_) {
    if (node.bound == nullptr || node.grad.size() == 0) continue;
    Parameter& p = *node.bound;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
    p.grad += node.grad;
  }
}

// ---------------------------------------------------------------------------
// Broadcasting helpers

namespace {

struct Extent {
  Index rows;
  Index cols;
};

Extent broadcast_extent(const Matrix& a, const Matrix& b, std::string_view op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return {a.rows(), a.cols()};
  if (a.rows() == b.rows() && b.cols() == 1) return {a.rows(), a.cols()};
  if (a.rows() == b.rows() && a.cols() == 1) return {b.rows(), b.cols()};
  if (b.size() == 1) return {a.rows(), a.cols()};
  if (a.size() == 1) return {b.rows(), b.cols()};
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                       shape_string(b));
}

Matrix expand(const Matrix& m, Extent e) {
  if (m.rows() == e.rows && m.cols() == e.cols) return m;
  if (m.size() == 1) return Matrix::Constant(e.rows, e.cols, m(0, 0));
  return m.replicate(1, e.cols);
}

Matrix reduce_to(const Matrix& g, const Matrix& like) {
  if (g.rows() == like.rows() && g.cols() == like.cols()) return g;
  if (like.size() == 1) return Matrix::Constant(1, 1, g.sum());
  return g.rowwise().sum();
}

enum class Binary { kAdd, kSub, kMul };

Var binary(const Var& a, const Var& b, Binary kind, std::string_view op) {
  Tape& tape = *a.tape();
  const Extent e = broadcast_extent(a.value(), b.value(), op);
  Matrix av = expand(a.value(), e);
  Matrix bv = expand(b.value(), e);
  Matrix out;
  switch (kind) {
    case Binary::kAdd: out = av + bv; break;
    case Binary::kSub: out = av - bv; break;
    case Binary::kMul: out = av.cwiseProduct(bv); break;
  }
  return tape.record(op, std::move(out), {a, b}, [a, b, kind, e](Tape& t, const Matrix& g) {
    switch (kind) {
      case Binary::kAdd:
        t.accumulate(a, reduce_to(g, a.value()));
        t.accumulate(b, reduce_to(g, b.value()));
        break;
      case Binary::kSub:
        t.accumulate(a, reduce_to(g, a.value()));
        t.accumulate(b, reduce_to(-g, b.value()));
        break;
      case Binary::kMul:
        if (a.requires_grad()) t.accumulate(a, reduce_to(g.cwiseProduct(expand(b.value(), e)), a.value()));
        if (b.requires_grad()) t.accumulate(b, reduce_to(g.cwiseProduct(expand(a.value(), e)), b.value()));
        break;
    }
  });
}

void check_same_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw ContractError("operands live on different tapes");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense algebra

Var matmul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ for " + shape_string(a.value()) + " * " +
                         shape_string(b.value()));
  }
  Matrix out = a.value() * b.value();
  return a.tape()->record("matmul", std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

Var transpose(const Var& a) {
  return a.tape()->record("transpose", a.value().transpose(), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var add(const Var& a, const Var& b) {
  check_same_tape(a, b);
  return binary(a, b, Binary::kAdd, "add");
}

Var sub(const Var& a, const Var& b) {
  check_same_tape(a, b);
  return binary(a, b, Binary::kSub, "sub");
}

Var mul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  return binary(a, b, Binary::kMul, "mul");
}

Var scale(const Var& a, Scalar factor) {
  return a.tape()->record("scale", a.value() * factor, {a},
                          [a, factor](Tape& t, const Matrix& g) { t.accumulate(a, g * factor); });
}

Var one_minus(const Var& a) {
  Matrix out = (1.0 - a.value().array()).matrix();
  return a.tape()->record("one_minus", std::move(out), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, -g); });
}

Var tanh(const Var& a) {
  Matrix y = a.value().array().tanh().matrix();
  const Tape* tape = a.tape();
  const int out_id = static_cast<int>(tape->size());
  return a.tape()->record("tanh", std::move(y), {a}, [a, out_id](Tape& t, const Matrix& g) {
    const Matrix& y = Var(&t, out_id).value();
    t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var sigmoid(const Var& a) {
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const int out_id = static_cast<int>(a.tape()->size());
  return a.tape()->record("sigmoid", std::move(y), {a}, [a, out_id](Tape& t, const Matrix& g) {
    const Matrix& y = Var(&t, out_id).value();
    t.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var softmax(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const Scalar peak = x.col(j).maxCoeff();
    y.col(j) = (x.col(j).array() - peak).exp().matrix();
    y.col(j) /= y.col(j).sum();
  }
  const int out_id = static_cast<int>(a.tape()->size());
  return a.tape()->record("softmax", std::move(y), {a}, [a, out_id](Tape& t, const Matrix& g) {
    const Matrix& y = Var(&t, out_id).value();
    Matrix gx(y.rows(), y.cols());
    for (Index j = 0; j < y.cols(); ++j) {
      const Scalar dot = g.col(j).dot(y.col(j));
      gx.col(j) = (y.col(j).array() * (g.col(j).array() - dot)).matrix();
    }
    t.accumulate(a, gx);
  });
}

Var sum(const Var& a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return a.tape()->record("sum", std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ContractError("mean of an empty tensor");
  const auto n = static_cast<Scalar>(a.value().size());
  Matrix out = Matrix::Constant(1, 1, a.value().sum() / n);
  return a.tape()->record("mean", std::move(out), {a}, [a, n](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var mse(const Var& prediction, const Var& target) {
  check_same_tape(prediction, target);
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    throw DimensionError("mse: prediction " + shape_string(prediction.value()) + " vs target " +
                         shape_string(target.value()));
  }
  Var diff = sub(prediction, target);
  return mean(mul(diff, diff));
}

// ---------------------------------------------------------------------------
// Structural ops

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of no operands");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    check_same_tape(parts.front(), p);
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " + shape_string(parts.front().value()) +
                           " vs " + shape_string(p.value()));
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return parts.front().tape()->record("concat_rows", std::move(out), parts,
                                      [parts](Tape& t, const Matrix& g) {
                                        Index off = 0;
                                        for (const auto& p : parts) {
                                          if (p.requires_grad()) t.accumulate(p, g.middleRows(off, p.rows()));
                                          off += p.rows();
                                        }
                                      });
}

Var slice_rows(const Var& a, Index begin, Index end) {
  if (begin < 0 || end > a.rows() || begin >= end) {
    throw IndexError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of bounds for " + shape_string(a.value()));
  }
  Matrix out = a.value().middleRows(begin, end - begin);
  return a.tape()->record("slice_rows", std::move(out), {a}, [a, begin, end](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(begin, end - begin) = g;
    t.accumulate(a, full);
  });
}

Var reshape(const Var& a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.value()) + " as [" +
                         std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return a.tape()->record("reshape", std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Eigen::Map<const Matrix>(g.data(), a.rows(), a.cols()));
  });
}

// ---------------------------------------------------------------------------
// Segment-matrix ops

namespace {

Index segment_size_of(const Var& memory, Index segments, std::string_view op) {
  if (segments <= 0 || memory.rows() % segments != 0) {
    throw DimensionError(std::string(op) + ": " + shape_string(memory.value()) +
                         " is not a stack of " + std::to_string(segments) + " segments");
  }
  return memory.rows() / segments;
}

Index batch_of(Index u, Index v, std::string_view op) {
  if (u == v) return u;
  if (u == 1) return v;
  if (v == 1) return u;
  throw DimensionError(std::string(op) + ": batch extents " + std::to_string(u) + " and " +
                       std::to_string(v) + " do not broadcast");
}

}  // namespace

Matrix segment_view(const Matrix& memory_column, Index segments) {
  if (memory_column.cols() != 1 || memory_column.rows() % segments != 0) {
    throw DimensionError("segment_view: bad column " + shape_string(memory_column));
  }
  return Eigen::Map<const Matrix>(memory_column.data(), segments, memory_column.rows() / segments);
}

Vector flatten_segments(const Matrix& segment_matrix) {
  return Eigen::Map<const Vector>(segment_matrix.data(), segment_matrix.size());
}

Var cosine_rows(const Var& memory, const Var& keys, Index segments) {
  check_same_tape(memory, keys);
  const Index size = segment_size_of(memory, segments, "cosine_rows");
  if (keys.rows() != size) {
    throw DimensionError("cosine_rows: key " + shape_string(keys.value()) +
                         " does not match segment size " + std::to_string(size));
  }
  const Index batch = batch_of(memory.cols(), keys.cols(), "cosine_rows");
  Matrix out(segments, batch);
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<const Matrix> m(memory.value().col(memory.cols() == 1 ? 0 : b).data(), segments, size);
    const auto q = keys.value().col(keys.cols() == 1 ? 0 : b);
    const Scalar nq = std::max(q.norm(), kNormFloor);
    for (Index k = 0; k < segments; ++k) {
      const Scalar nm = std::max(m.row(k).norm(), kNormFloor);
      out(k, b) = m.row(k).dot(q.transpose()) / (nm * nq);
    }
  }
  const int out_id = static_cast<int>(memory.tape()->size());
  return memory.tape()->record(
      "cosine_rows", std::move(out), {memory, keys},
      [memory, keys, segments, size, batch, out_id](Tape& t, const Matrix& g) {
        const Matrix& s = Var(&t, out_id).value();
        Matrix gm = Matrix::Zero(memory.rows(), memory.cols());
        Matrix gq = Matrix::Zero(keys.rows(), keys.cols());
        for (Index b = 0; b < batch; ++b) {
          const Index mb = memory.cols() == 1 ? 0 : b;
          const Index qb = keys.cols() == 1 ? 0 : b;
          Eigen::Map<const Matrix> m(memory.value().col(mb).data(), segments, size);
          Eigen::Map<Matrix> dm(gm.col(mb).data(), segments, size);
          const Vector q = keys.value().col(qb);
          const Scalar q_norm = q.norm();
          const Scalar nq = std::max(q_norm, kNormFloor);
          const bool q_active = q_norm > kNormFloor;
          for (Index k = 0; k < segments; ++k) {
            const Scalar gk = g(k, b);
            if (gk == 0.0) continue;
            const Vector row = m.row(k).transpose();
            const Scalar m_norm = row.norm();
            const Scalar nm = std::max(m_norm, kNormFloor);
            const bool m_active = m_norm > kNormFloor;
            const Scalar sk = s(k, b);
            Vector d_row = q / (nm * nq);
            if (m_active) d_row -= sk * row / (nm * nm);
            Vector d_key = row / (nm * nq);
            if (q_active) d_key -= sk * q / (nq * nq);
            dm.row(k) += gk * d_row.transpose();
            gq.col(qb) += gk * d_key;
          }
        }
        if (memory.requires_grad()) t.accumulate(memory, gm);
        if (keys.requires_grad()) t.accumulate(keys, gq);
      });
}

Var cosine_similarity(const Var& x, const Var& y) {
  if (x.cols() != 1 || y.cols() != 1 || x.rows() != y.rows()) {
    throw DimensionError("cosine_similarity: " + shape_string(x.value()) + " vs " +
                         shape_string(y.value()));
  }
  return cosine_rows(x, y, 1);
}

Var outer(const Var& u, const Var& v) {
  check_same_tape(u, v);
  const Index segments = u.rows();
  const Index size = v.rows();
  const Index batch = batch_of(u.cols(), v.cols(), "outer");
  Matrix out(segments * size, batch);
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<Matrix> o(out.col(b).data(), segments, size);
    o.noalias() = u.value().col(u.cols() == 1 ? 0 : b) * v.value().col(v.cols() == 1 ? 0 : b).transpose();
  }
  return u.tape()->record("outer", std::move(out), {u, v},
                          [u, v, segments, size, batch](Tape& t, const Matrix& g) {
                            Matrix gu = Matrix::Zero(u.rows(), u.cols());
                            Matrix gv = Matrix::Zero(v.rows(), v.cols());
                            for (Index b = 0; b < batch; ++b) {
                              const Index ub = u.cols() == 1 ? 0 : b;
                              const Index vb = v.cols() == 1 ? 0 : b;
                              Eigen::Map<const Matrix> gb(g.col(b).data(), segments, size);
                              gu.col(ub) += gb * v.value().col(vb);
                              gv.col(vb) += gb.transpose() * u.value().col(ub);
                            }
                            if (u.requires_grad()) t.accumulate(u, gu);
                            if (v.requires_grad()) t.accumulate(v, gv);
                          });
}

Var segment_read(const Var& memory, const Var& weights, Index segments) {
  check_same_tape(memory, weights);
  const Index size = segment_size_of(memory, segments, "segment_read");
  if (weights.rows() != segments) {
    throw DimensionError("segment_read: weights " + shape_string(weights.value()) + " for " +
                         std::to_string(segments) + " segments");
  }
  const Index batch = batch_of(memory.cols(), weights.cols(), "segment_read");
  Matrix out(size, batch);
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<const Matrix> m(memory.value().col(memory.cols() == 1 ? 0 : b).data(), segments, size);
    out.col(b).noalias() = m.transpose() * weights.value().col(weights.cols() == 1 ? 0 : b);
  }
  return memory.tape()->record(
      "segment_read", std::move(out), {memory, weights},
      [memory, weights, segments, size, batch](Tape& t, const Matrix& g) {
        Matrix gm = Matrix::Zero(memory.rows(), memory.cols());
        Matrix gw = Matrix::Zero(weights.rows(), weights.cols());
        for (Index b = 0; b < batch; ++b) {
          const Index mb = memory.cols() == 1 ? 0 : b;
          const Index wb = weights.cols() == 1 ? 0 : b;
          Eigen::Map<const Matrix> m(memory.value().col(mb).data(), segments, size);
          Eigen::Map<Matrix> dm(gm.col(mb).data(), segments, size);
          dm.noalias() += weights.value().col(wb) * g.col(b).transpose();
          gw.col(wb).noalias() += m * g.col(b);
        }
        if (memory.requires_grad()) t.accumulate(memory, gm);
        if (weights.requires_grad()) t.accumulate(weights, gw);
      });
}

Var segments_to_columns(const Var& memory, Index segments) {
  const Index size = segment_size_of(memory, segments, "segments_to_columns");
  const Index batch = memory.cols();
  Matrix out(size, segments * batch);
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<const Matrix> m(memory.value().col(b).data(), segments, size);
    out.middleCols(segments * b, segments) = m.transpose();
  }
  return memory.tape()->record("segments_to_columns", std::move(out), {memory},
                               [memory, segments, size, batch](Tape& t, const Matrix& g) {
                                 Matrix gm(memory.rows(), batch);
                                 for (Index b = 0; b < batch; ++b) {
                                   Eigen::Map<Matrix> dm(gm.col(b).data(), segments, size);
                                   dm = g.middleCols(segments * b, segments).transpose();
                                 }
                                 t.accumulate(memory, gm);
                               });
}

Var columns_to_segments(const Var& columns, Index segments) {
  if (segments <= 0 || columns.cols() % segments != 0) {
    throw DimensionError("columns_to_segments: " + shape_string(columns.value()) +
                         " has no whole number of " + std::to_string(segments) + "-segment groups");
  }
  const Index size = columns.rows();
  const Index batch = columns.cols() / segments;
  Matrix out(segments * size, batch);
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<Matrix> m(out.col(b).data(), segments, size);
    m = columns.value().middleCols(segments * b, segments).transpose();
  }
  return columns.tape()->record("columns_to_segments", std::move(out), {columns},
                                [columns, segments, size, batch](Tape& t, const Matrix& g) {
                                  Matrix gc(size, segments * batch);
                                  for (Index b = 0; b < batch; ++b) {
                                    Eigen::Map<const Matrix> gm(g.col(b).data(), segments, size);
                                    gc.middleCols(segments * b, segments) = gm.transpose();
                                  }
                                  t.accumulate(columns, gc);
                                });
}

}  // namespace mature
