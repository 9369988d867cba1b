#pragma once

#include <cstdint>
#include <string_view>

#include "mature/autodiff.hpp"

namespace mature {

/// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t stable_hash(std::string_view text, std::uint64_t basis = 14695981039346656037ull);

/// Uniform(-bound, bound) matrix from a generator keyed by (seed, name), so a
/// parameter's initial value does not depend on which other parameters exist.
Matrix uniform_init(std::uint64_t seed, std::string_view name, Index rows, Index cols, double bound);

/// Adds a weight initialised uniform(-1/sqrt(fan), 1/sqrt(fan)), fan = `fan_scale`.
Parameter& add_weight(ParameterSet& params, std::uint64_t seed, const std::string& name, Index rows,
                      Index cols, Index fan_scale);
/// Adds a zero bias column.
Parameter& add_bias(ParameterSet& params, const std::string& name, Index rows);

}  // namespace mature
