#include "mature/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mature {

bool GradCheckReport::passed() const {
  if (!failure.empty() || !deterministic) return false;
  return std::all_of(entries.begin(), entries.end(), [this](const GradCheckEntry& e) {
    return e.max_relative_error <= tolerance;
  });
}

double GradCheckReport::max_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_relative_error);
  return worst;
}

std::string GradCheckReport::worst_parameter() const {
  for (const auto& e : entries) {
    if (e.max_relative_error > tolerance) return e.name;
  }
  return {};
}

namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape;
  Var out = loss(tape);
  if (out.rows() != 1 || out.cols() != 1) {
    throw ContractError("grad_check: loss must be 1x1, got " + shape_string(out.value()));
  }
  return out.value()(0, 0);
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, ParameterSet& params, double tolerance,
                           double step, Stencil stencil) {
  GradCheckReport report;
  report.tolerance = tolerance;

  const double first = evaluate(loss);
  const double second = evaluate(loss);
  if (std::memcmp(&first, &second, sizeof(double)) != 0) {
    report.deterministic = false;
    report.failure = "non-deterministic forward: two evaluations differ";
    return report;
  }

  params.zero_grad();
  {
    Tape tape;
    Var out = loss(tape);
    tape.backward(out);
  }

  for (Parameter& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    for (Index i = 0; i < p.value.size(); ++i) {
      const double saved = p.value(i);
      auto at = [&](double offset) {
        p.value(i) = saved + offset;
        return evaluate(loss);
      };
      const double fd =
          stencil == Stencil::kThreePoint
              ? (at(step) - at(-step)) / (2.0 * step)
              : (at(-2.0 * step) - 8.0 * at(-step) + 8.0 * at(step) - at(2.0 * step)) / (12.0 * step);
      p.value(i) = saved;
      const double ad = p.grad(i);
      const double denom = std::max({std::abs(ad), std::abs(fd), 1e-8});
      const double rel = std::abs(ad - fd) / denom;
      if (i == 0 || rel > entry.max_relative_error) {
        entry.max_relative_error = rel;
        entry.worst_index = i;
        entry.autodiff = ad;
        entry.finite_difference = fd;
      }
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace mature
