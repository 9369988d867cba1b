#include "mature/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

namespace mature {

HistoricalAverage HistoricalAverage::fit(const Matrix& values, Index first_slot, Index slots_per_day) {
  if (values.rows() == 0 || values.cols() == 0) {
    throw ContractError("historical average: empty training history");
  }
  if (slots_per_day <= 0) throw ContractError("historical average: slots_per_day must be positive");
  Matrix sums = Matrix::Zero(slots_per_day, values.cols());
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(slots_per_day);
  for (Index t = 0; t < values.rows(); ++t) {
    const Index slot = (first_slot + t) % slots_per_day;
    sums.row(slot) += values.row(t);
    ++counts(slot);
  }
  for (Index s = 0; s < slots_per_day; ++s) {
    if (counts(s) == 0) {
      throw ContractError("historical average: slot " + std::to_string(s) +
                          " has no training rows; at least one full day is required");
    }
    sums.row(s) /= static_cast<Scalar>(counts(s));
  }
  return from_means(std::move(sums));
}

HistoricalAverage HistoricalAverage::from_means(Matrix means) {
  HistoricalAverage ha;
  ha.means_ = std::move(means);
  return ha;
}

Vector HistoricalAverage::predict(Index slot) const {
  if (means_.size() == 0) throw ContractError("historical average used before fit");
  if (slot < 0 || slot >= means_.rows()) throw IndexError("historical average: bad slot");
  return means_.row(slot).transpose();
}

LinearBaseline LinearBaseline::fit(const Matrix& features, const Matrix& targets) {
  if (features.rows() == 0) throw ContractError("linear baseline: no training samples");
  if (features.rows() != targets.rows()) {
    throw DimensionError("linear baseline: " + std::to_string(features.rows()) + " feature rows vs " +
                         std::to_string(targets.rows()) + " target rows");
  }
  const Index n = features.rows();
  const Index p = features.cols() + 1;
  Matrix design(n, p);
  design.leftCols(p - 1) = features;
  design.col(p - 1).setOnes();

  Matrix gram = design.transpose() * design;
  const Matrix rhs = design.transpose() * targets;

  Eigen::ColPivHouseholderQR<Matrix> qr(gram);
  LinearBaseline model;
  if (qr.rank() == p) {
    model.coefficients_ = qr.solve(rhs);
  } else {
    gram.diagonal().array() += kRidge;
    model.coefficients_ = gram.ldlt().solve(rhs);
    model.used_ridge_ = true;
  }
  return model;
}

LinearBaseline LinearBaseline::from_coefficients(Matrix coefficients, bool used_ridge) {
  LinearBaseline m;
  m.coefficients_ = std::move(coefficients);
  m.used_ridge_ = used_ridge;
  return m;
}

Matrix LinearBaseline::predict(const Matrix& features) const {
  if (coefficients_.size() == 0) throw ContractError("linear baseline used before fit");
  const Index p = coefficients_.rows() - 1;
  if (features.cols() != p) {
    throw DimensionError("linear baseline: expected " + std::to_string(p) + " features, got " +
                         std::to_string(features.cols()));
  }
  Matrix out = features * coefficients_.topRows(p);
  out.rowwise() += coefficients_.row(p);
  return out;
}

}  // namespace mature
