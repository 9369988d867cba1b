#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mature/autodiff.hpp"

namespace mature {

/// Builds a scalar loss on the given tape. Parameters must be bound with
/// Tape::parameter so their gradients reach the ParameterSet.
using LossBuilder = std::function<Var(Tape&)>;

enum class Stencil {
  kThreePoint,  // (f(x+h) - f(x-h)) / 2h
  kFivePoint,   // fourth-order central difference
};

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  Index worst_index = 0;
  double autodiff = 0.0;        // gradient at the worst entry
  double finite_difference = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool deterministic = true;
  std::string failure;  // harness-level failure, empty when the check ran

  bool passed() const;
  double max_error() const;
  /// First parameter whose error exceeds the tolerance, or empty.
  std::string worst_parameter() const;
};

/// Compares reverse-mode gradients with central finite differences for every
/// entry of every parameter in `params`. Relative error per entry is
/// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
/// The five-point stencil with a larger step keeps round-off below the
/// tolerance for entries whose gradient is close to the 1e-8 floor.
GradCheckReport grad_check(const LossBuilder& loss, ParameterSet& params, double tolerance,
                           double step = 1e-3, Stencil stencil = Stencil::kFivePoint);

}  // namespace mature
