#include "mature/init.hpp"

#include <cmath>
#include <random>

namespace mature {

std::uint64_t stable_hash(std::string_view text, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Matrix uniform_init(std::uint64_t seed, std::string_view name, Index rows, Index cols, double bound) {
  std::mt19937_64 rng(stable_hash(name, 14695981039346656037ull ^ (seed * 0x9E3779B97F4A7C15ull)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

Parameter& add_weight(ParameterSet& params, std::uint64_t seed, const std::string& name, Index rows,
                      Index cols, Index fan_scale) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_scale));
  return params.add(name, uniform_init(seed, name, rows, cols, bound));
}

Parameter& add_bias(ParameterSet& params, const std::string& name, Index rows) {
  return params.add(name, Matrix::Zero(rows, 1));
}

}  // namespace mature
