#pragma once

// Weight-level genetic algorithm over fixed-topology networks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "esp/error.hpp"
#include "esp/neuralnet.hpp"
#include "esp/random.hpp"

namespace esp {

struct EvolutionConfig {
  std::size_t population_size = 100;
  double elite_fraction = 0.10;
  double parent_fraction = 0.20;
  double mutation_rate = 0.10;
  double mutation_factor_mean = 1.0;
  double mutation_factor_std = 0.1;
  std::size_t tournament_size = 2;
  std::uint64_t seed = 0;

  std::size_t elite_count() const {
    return static_cast<std::size_t>(std::ceil(elite_fraction * static_cast<double>(population_size) - 1e-9));
  }
  std::size_t parent_pool_size() const {
    return static_cast<std::size_t>(std::ceil(parent_fraction * static_cast<double>(population_size) - 1e-9));
  }

  void validate() const {
    if (population_size == 0) throw ConfigError("population_size must be positive");
    if (!(elite_fraction > 0.0 && elite_fraction <= 1.0))
      throw ConfigError("elite_fraction must lie in (0, 1]");
    if (!(parent_fraction > 0.0 && parent_fraction <= 1.0))
      throw ConfigError("parent_fraction must lie in (0, 1]");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0))
      throw ConfigError("mutation_rate must lie in [0, 1]");
    if (!(mutation_factor_std >= 0.0)) throw ConfigError("mutation_factor_std must be non-negative");
    if (tournament_size == 0) throw ConfigError("tournament_size must be positive");
    if (elite_count() < 1) throw ConfigError("elite count must be at least 1");
    if (parent_pool_size() < 2) throw ConfigError("parent pool must hold at least 2 candidates");
  }
};

struct ScoredPopulation {
  std::vector<NetworkGenome> members;
  std::vector<double> fitnesses;  // empty until scored; higher is better
  std::size_t generation = 0;

  bool scored() const { return !members.empty() && fitnesses.size() == members.size(); }
};

/// Member indices sorted by descending fitness; ties keep population order.
inline std::vector<std::size_t> rank_by_fitness(const std::vector<double>& fitnesses) {
  std::vector<std::size_t> order(fitnesses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fitnesses[a] > fitnesses[b]; });
  return order;
}

inline std::vector<NetworkGenome> initial_population(const Architecture& arch, std::size_t size,
                                                     std::uint64_t seed) {
  std::vector<NetworkGenome> pop;
  pop.reserve(size);
  for (std::size_t i = 0; i < size; ++i) pop.push_back(init_network(arch, derive_seed(seed, {0x504fu, i})));
  return pop;
}

inline NetworkGenome uniform_crossover(const NetworkGenome& a, const NetworkGenome& b, Rng& rng) {
  if (a.architecture() != b.architecture())
    throw ArchitectureError("crossover parents have different architectures");
  NetworkGenome child = a;
  for (std::size_t i = 0; i < child.parameter_count(); ++i)
    if (rng.bernoulli(0.5)) child.parameter(i) = b.parameter(i);
  return child;
}

/// Each parameter is, with probability mutation_rate, multiplied by a factor
/// drawn from Normal(mutation_factor_mean, mutation_factor_std).
inline NetworkGenome mutate(NetworkGenome g, const EvolutionConfig& cfg, Rng& rng) {
  if (cfg.mutation_rate <= 0.0) return g;
  for (std::size_t i = 0; i < g.parameter_count(); ++i)
    if (rng.bernoulli(cfg.mutation_rate))
      g.parameter(i) *= rng.normal(cfg.mutation_factor_mean, cfg.mutation_factor_std);
  return g;
}

namespace detail {

// Tournament among `size` draws (with replacement) from the top `pool` ranks;
// the best-ranked contestant wins.
inline std::size_t tournament(const std::vector<std::size_t>& ranking, std::size_t pool, std::size_t size,
                              Rng& rng) {
  std::size_t best_rank = rng.below(pool);
  for (std::size_t k = 1; k < size; ++k) best_rank = std::min(best_rank, rng.below(pool));
  return ranking[best_rank];
}

}  // namespace detail

/// Builds the next generation: elites copied verbatim, the rest bred from
/// tournament winners drawn from the top parent_fraction. A `protected_genome`
/// that did not make the elite cut replaces the weakest elite.
inline ScoredPopulation next_generation(const ScoredPopulation& scored, const EvolutionConfig& cfg, Rng& rng,
                                        const NetworkGenome* protected_genome = nullptr) {
  cfg.validate();
  if (!scored.scored()) throw StateError("population must be scored before reproduction");
  for (double f : scored.fitnesses)
    if (!std::isfinite(f)) throw NumericError("non-finite fitness");
  const std::size_t n = scored.members.size();
  const std::size_t elites = cfg.elite_count();
  if (n < elites) throw ConfigError("population smaller than the elite count");
  const std::size_t pool = std::min(n, std::max<std::size_t>(2, cfg.parent_pool_size()));

  const auto ranking = rank_by_fitness(scored.fitnesses);
  ScoredPopulation next;
  next.generation = scored.generation + 1;
  next.members.reserve(n);
  for (std::size_t i = 0; i < elites; ++i) next.members.push_back(scored.members[ranking[i]]);
  if (protected_genome != nullptr &&
      std::find(next.members.begin(), next.members.end(), *protected_genome) == next.members.end())
    next.members.back() = *protected_genome;

  while (next.members.size() < n) {
    const std::size_t a = detail::tournament(ranking, pool, cfg.tournament_size, rng);
    const std::size_t b = detail::tournament(ranking, pool, cfg.tournament_size, rng);
    next.members.push_back(mutate(uniform_crossover(scored.members[a], scored.members[b], rng), cfg, rng));
  }
  return next;
}

}  // namespace esp
