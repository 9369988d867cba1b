#pragma once

#include "mature/autodiff.hpp"

namespace mature {

/// Per-station mean of the training history at each slot of the day.
class HistoricalAverage {
 public:
  HistoricalAverage() = default;

  /// `values` is T x N; row t falls in slot (first_slot + t) % slots_per_day.
  /// Throws ContractError unless every slot of the day has at least one row.
  static HistoricalAverage fit(const Matrix& values, Index first_slot, Index slots_per_day);

  /// Mean demand per station at `slot`; N x 1.
  Vector predict(Index slot) const;

  Index slots_per_day() const { return means_.rows(); }
  const Matrix& means() const { return means_; }  // slots x N
  static HistoricalAverage from_means(Matrix means);

 private:
  Matrix means_;
};

/// Least-squares linear map from a feature vector (plus intercept) to targets.
class LinearBaseline {
 public:
  static constexpr Scalar kRidge = 1e-6;

  LinearBaseline() = default;

  /// Solves the normal equations for rows of `features` (samples x p) against
  /// `targets` (samples x q). Falls back to a ridge term kRidge * I when the
  /// Gram matrix is rank deficient.
  static LinearBaseline fit(const Matrix& features, const Matrix& targets);

  /// samples x q.
  Matrix predict(const Matrix& features) const;

  /// (p + 1) x q, intercept in the last row.
  const Matrix& coefficients() const { return coefficients_; }
  bool used_ridge() const { return used_ridge_; }
  static LinearBaseline from_coefficients(Matrix coefficients, bool used_ridge);

 private:
  Matrix coefficients_;
  bool used_ridge_ = false;
};

}  // namespace mature
