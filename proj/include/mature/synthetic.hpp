#pragma once

#include <cstdint>

#include <json.hpp>

#include "mature/data.hpp"

namespace mature {

/// Multi-modal hourly demand with shared latent structure.
///
/// Each intensive station has mean base * profile(hour) * week(day) *
/// (1 + latent_scale * loading * z_j(t)): a double-peak daily profile, a
/// weekday/weekend factor and one of `factors` unit-variance AR(1) processes.
/// Each sparse station copies the profile and loading of a "twin" intensive
/// station whose factor lies in the first half of the factor
/// set, and mixes that shared factor with a private one:
///   u_s(t) = coupling * z_j(t) + (1 - coupling) * w_s(t).
/// Noise is Poisson-like (standard deviation noise * sqrt(mean)); values are
/// clamped at zero and, when integer_counts is set, rounded.
struct SyntheticConfig {
  Index n_intensive = 100;
  Index n_sparse = 10;
  Index days = 90;
  std::uint64_t seed = 0;
  double noise = 1.0;
  double coupling = 0.8;
  Index factors = 4;
  double latent_scale = 0.4;
  double persistence = 0.9;     // AR(1) coefficient of the latent factors
  double weekend_factor = 0.6;  // 1.0 disables weekly variation
  bool integer_counts = true;
  std::int64_t start = 1704067200;  // 2024-01-01T00:00:00Z, a Monday

  /// Throws ContractError on non-positive sizes or coupling outside [0, 1].
  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticConfig& c);
void from_json(const nlohmann::json& j, SyntheticConfig& c);

ModePairDataset synthesize(const SyntheticConfig& config);

/// Index of the intensive station whose profile sparse station `s` copies.
Index synthetic_twin(const SyntheticConfig& config, Index sparse_station);

}  // namespace mature
