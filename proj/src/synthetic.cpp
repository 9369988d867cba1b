#include "mature/synthetic.hpp"

#include <cmath>
#include <random>

namespace mature {

namespace {

double bump(double hour, double centre, double width) {
  const double d = hour - centre;
  return std::exp(-d * d / (2.0 * width * width));
}

struct StationShape {
  double base = 0.0;
  double morning = 0.5;  // weight of the morning peak; evening gets 1 - morning
  double loading = 1.0;
  Index factor = 0;
};

double profile(const StationShape& s, double hour) {
  return 0.15 + s.morning * bump(hour, 8.0, 1.5) + (1.0 - s.morning) * bump(hour, 17.5, 2.0);
}

Matrix ar1_paths(std::mt19937_64& rng, Index count, Index steps, double phi) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double innovation = std::sqrt(std::max(0.0, 1.0 - phi * phi));
  Matrix z(steps, count);
  for (Index j = 0; j < count; ++j) {
    double v = normal(rng);
    for (Index t = 0; t < steps; ++t) {
      if (t > 0) v = phi * v + innovation * normal(rng);
      z(t, j) = v;
    }
  }
  return z;
}

std::string station_id(const char* prefix, Index i) {
  std::string digits = std::to_string(i);
  return std::string(prefix) + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n_intensive <= 0 || n_sparse <= 0) throw ContractError("synthesize: station counts must be positive");
  if (days <= 0) throw ContractError("synthesize: days must be positive");
  if (factors <= 0) throw ContractError("synthesize: factors must be positive");
  if (!(coupling >= 0.0 && coupling <= 1.0)) throw ContractError("synthesize: coupling must lie in [0, 1]");
  if (noise < 0.0) throw ContractError("synthesize: noise must be non-negative");
  if (!(persistence >= 0.0 && persistence < 1.0)) {
    throw ContractError("synthesize: persistence must lie in [0, 1)");
  }
}

void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = nlohmann::json{{"n_intensive", c.n_intensive}, {"n_sparse", c.n_sparse},
                     {"days", c.days},               {"seed", c.seed},
                     {"noise", c.noise},             {"coupling", c.coupling},
                     {"factors", c.factors},         {"latent_scale", c.latent_scale},
                     {"persistence", c.persistence}, {"weekend_factor", c.weekend_factor},
                     {"integer_counts", c.integer_counts}, {"start", c.start}};
}

void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  SyntheticConfig d;
  nlohmann::json known;
  to_json(known, d);
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) throw ContractError("unknown synthetic key: " + item.key());
  }
  c.n_intensive = j.value("n_intensive", d.n_intensive);
  c.n_sparse = j.value("n_sparse", d.n_sparse);
  c.days = j.value("days", d.days);
  c.seed = j.value("seed", d.seed);
  c.noise = j.value("noise", d.noise);
  c.coupling = j.value("coupling", d.coupling);
  c.factors = j.value("factors", d.factors);
  c.latent_scale = j.value("latent_scale", d.latent_scale);
  c.persistence = j.value("persistence", d.persistence);
  c.weekend_factor = j.value("weekend_factor", d.weekend_factor);
  c.integer_counts = j.value("integer_counts", d.integer_counts);
  c.start = j.value("start", d.start);
}

Index synthetic_twin(const SyntheticConfig& config, Index sparse_station) {
  const Index shared = std::max<Index>(1, config.factors / 2);
  const Index factor = sparse_station % shared;
  const Index per_factor = std::max<Index>(1, config.n_intensive / config.factors);
  const Index twin = factor + config.factors * ((sparse_station / shared) % per_factor);
  return twin < config.n_intensive ? twin : factor % config.n_intensive;
}

ModePairDataset synthesize(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Index T = config.days * 24;
  const Index R = config.n_intensive;
  const Index S = config.n_sparse;

  std::vector<StationShape> intensive(static_cast<std::size_t>(R));
  for (Index i = 0; i < R; ++i) {
    auto& s = intensive[static_cast<std::size_t>(i)];
    s.base = 40.0 + 120.0 * unit(rng);
    s.morning = 0.2 + 0.6 * unit(rng);
    s.loading = 0.5 + 0.5 * unit(rng);
    s.factor = i % config.factors;
  }
  std::vector<StationShape> sparse(static_cast<std::size_t>(S));
  for (Index k = 0; k < S; ++k) {
    const auto& twin = intensive[static_cast<std::size_t>(synthetic_twin(config, k))];
    auto& s = sparse[static_cast<std::size_t>(k)];
    s = twin;
    s.base = 20.0 + 80.0 * unit(rng);
  }

  const Matrix shared = ar1_paths(rng, config.factors, T, config.persistence);
  const Matrix own = ar1_paths(rng, S, T, config.persistence);

  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](double mean) {
    double v = std::max(0.0, mean);
    if (config.noise > 0.0) v = std::max(0.0, v + config.noise * std::sqrt(v) * normal(rng));
    return config.integer_counts ? std::round(v) : v;
  };
  auto seasonal = [&](const StationShape& s, Index t) {
    const double hour = static_cast<double>(t % 24);
    const Index weekday = (t / 24) % 7;  // 0 = Monday relative to start
    const double week = weekday >= 5 ? config.weekend_factor : 1.0;
    return s.base * profile(s, hour) * week;
  };

  ModePairDataset data;
  auto init_series = [&](DemandSeries& series, const char* mode, const char* prefix, Index n) {
    series.mode = mode;
    series.step_hours = 1.0;
    series.start = config.start;
    series.values.resize(T, n);
    series.gap_counts.assign(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) series.stations.push_back({station_id(prefix, i), std::nullopt, std::nullopt});
  };
  init_series(data.intensive, "intensive", "R", R);
  init_series(data.sparse, "sparse", "S", S);

  for (Index t = 0; t < T; ++t) {
    for (Index i = 0; i < R; ++i) {
      const auto& s = intensive[static_cast<std::size_t>(i)];
      const double latent = shared(t, s.factor);
      data.intensive.values(t, i) = draw(seasonal(s, t) * (1.0 + config.latent_scale * s.loading * latent));
    }
    for (Index k = 0; k < S; ++k) {
      const auto& s = sparse[static_cast<std::size_t>(k)];
      const double latent = config.coupling * shared(t, s.factor) + (1.0 - config.coupling) * own(t, k);
      data.sparse.values(t, k) = draw(seasonal(s, t) * (1.0 + config.latent_scale * s.loading * latent));
    }
  }
  return data;
}

}  // namespace mature
