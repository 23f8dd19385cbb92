#pragma once

// Run records, true-performance evaluation, regret curves and multi-run
// aggregation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "esp/environments.hpp"
#include "esp/error.hpp"
#include "esp/neuralnet.hpp"
#include "esp/predictors.hpp"
#include "esp/random.hpp"

namespace esp {

enum class Method { esp, de };

inline std::string_view to_string(Method m) { return m == Method::esp ? "esp" : "de"; }

inline Method method_from_string(std::string_view s) {
  if (s == "esp") return Method::esp;
  if (s == "de") return Method::de;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

/// One real-domain training episode.
struct SeriesPoint {
  std::size_t episodes_consumed = 0;  // including this episode
  double true_performance = 0.0;      // of the policy the run would return at this point
  double regret = 0.0;                // optimal minus achieved episode reward
  std::size_t generation = 0;
  double reward = 0.0;

  friend bool operator==(const SeriesPoint&, const SeriesPoint&) = default;
};

struct RunResult {
  Method method = Method::esp;
  DomainId domain = DomainId::function;
  std::uint64_t seed = 0;
  std::vector<SeriesPoint> series;
  NetworkGenome best_policy;
  std::optional<PredictorModel> predictor;  // last fitted surrogate (ESP only)
  std::optional<std::size_t> target_reached_at;  // episodes consumed when the stop target was met
  std::size_t generations = 0;
  double wall_time_seconds = 0.0;

  std::size_t episodes_consumed() const { return series.empty() ? 0 : series.back().episodes_consumed; }
  double final_performance() const { return series.empty() ? 0.0 : series.back().true_performance; }
};

/// Seed of evaluation episode k. Evaluations within a run share these
/// episodes, so successive returned policies are compared on the same draws.
inline std::uint64_t evaluation_seed(std::uint64_t run_seed, std::size_t k) {
  return derive_seed(run_seed, {0x4556414cu, k});
}

/// Mean total reward of `policy` over n fresh episodes. Never touches any
/// training state.
inline double true_performance(const NetworkGenome& policy, const DomainParams& d, std::size_t n_episodes,
                               std::uint64_t seed) {
  if (n_episodes == 0) throw ConfigError("true performance needs at least one episode");
  double total = 0.0;
  for (std::size_t k = 0; k < n_episodes; ++k) {
    Rng rng(evaluation_seed(seed, k));
    total += rollout(d, policy, rng).total_reward;
  }
  return total / static_cast<double>(n_episodes);
}

inline double random_agent_performance(const DomainParams& d, std::size_t n_episodes, std::uint64_t seed) {
  if (n_episodes == 0) throw ConfigError("true performance needs at least one episode");
  double total = 0.0;
  for (std::size_t k = 0; k < n_episodes; ++k) {
    Rng rng(evaluation_seed(seed, k));
    total += rollout_random(d, rng).total_reward;
  }
  return total / static_cast<double>(n_episodes);
}

struct RegretCurves {
  std::vector<double> instantaneous;
  std::vector<double> moving_average;   // trailing window
  std::vector<double> cumulative_mean;  // over all past training episodes
};

inline RegretCurves regret_series(const RunResult& run, const DomainParams& d, std::size_t window = 100) {
  if (run.domain != d.id) throw ConfigError("run domain does not match the given domain");
  const double optimum = d.optimal_episode_reward();
  if (!std::isfinite(optimum)) throw ConfigError("domain has no known optimum");
  if (window == 0) throw ConfigError("moving-average window must be positive");
  RegretCurves c;
  double cumulative = 0.0, windowed = 0.0;
  for (std::size_t i = 0; i < run.series.size(); ++i) {
    const double r = optimum - run.series[i].reward;
    c.instantaneous.push_back(r);
    cumulative += r;
    windowed += r;
    if (i >= window) windowed -= c.instantaneous[i - window];
    c.cumulative_mean.push_back(cumulative / static_cast<double>(i + 1));
    c.moving_average.push_back(windowed / static_cast<double>(std::min(i + 1, window)));
  }
  return c;
}

struct CurveRow {
  double episodes = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n_runs = 0;

  friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

/// (episodes_consumed, value) pairs of one run.
using Curve = std::vector<std::pair<double, double>>;

/// Value of a curve at x: linear interpolation inside the curve, the last value
/// after its end (a finished run keeps returning its final policy), nothing
/// before its first point.
inline std::optional<double> curve_value_at(const Curve& c, double x) {
  if (c.empty() || x < c.front().first) return std::nullopt;
  if (x >= c.back().first) return c.back().second;
  const auto hi = std::upper_bound(c.begin(), c.end(), x, [](double v, const auto& p) { return v < p.first; });
  const auto lo = hi - 1;
  if (hi->first == lo->first) return lo->second;
  const double t = (x - lo->first) / (hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

/// Pointwise mean and sample standard deviation on the grid step, 2*step, ...
/// up to the longest curve.
inline std::vector<CurveRow> aggregate_curves(std::span<const Curve> curves, double grid_step = 10.0) {
  if (curves.empty()) throw ConfigError("no runs to aggregate");
  if (!(grid_step > 0.0)) throw ConfigError("grid step must be positive");
  double end = 0.0;
  for (const auto& c : curves)
    if (!c.empty()) end = std::max(end, c.back().first);
  std::vector<CurveRow> rows;
  for (double x = grid_step; x <= end + 1e-9; x += grid_step) {
    std::vector<double> values;
    for (const auto& c : curves)
      if (auto v = curve_value_at(c, x)) values.push_back(*v);
    CurveRow row;
    row.episodes = x;
    row.n_runs = values.size();
    if (!values.empty()) {
      double sum = 0.0;
      for (double v : values) sum += v;
      row.mean = sum / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - row.mean) * (v - row.mean);
      row.std = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    }
    rows.push_back(row);
  }
  return rows;
}

enum class CurveKind { true_performance, moving_average_regret, cumulative_regret };

inline Curve run_curve(const RunResult& run, const DomainParams& d, CurveKind kind, std::size_t window = 100) {
  Curve c;
  c.reserve(run.series.size());
  if (kind == CurveKind::true_performance) {
    for (const auto& p : run.series) c.emplace_back(static_cast<double>(p.episodes_consumed), p.true_performance);
    return c;
  }
  const auto regret = regret_series(run, d, window);
  const auto& values = kind == CurveKind::moving_average_regret ? regret.moving_average : regret.cumulative_mean;
  for (std::size_t i = 0; i < run.series.size(); ++i)
    c.emplace_back(static_cast<double>(run.series[i].episodes_consumed), values[i]);
  return c;
}

/// Mean/std curve table over runs of a single method and domain.
inline std::vector<CurveRow> aggregate_runs(std::span<const RunResult> runs, const DomainParams& d,
                                            CurveKind kind = CurveKind::true_performance, double grid_step = 10.0,
                                            std::size_t window = 100) {
  if (runs.empty()) throw ConfigError("no runs to aggregate");
  std::vector<Curve> curves;
  for (const auto& r : runs) {
    if (r.domain != runs.front().domain || r.method != runs.front().method)
      throw ConfigError("cannot aggregate runs of different domains or methods");
    curves.push_back(run_curve(r, d, kind, window));
  }
  return aggregate_curves(curves, grid_step);
}

/// First episode count at which the returned policy's true performance
/// reached `threshold`.
inline std::optional<std::size_t> episodes_to_threshold(const RunResult& run, double threshold) {
  for (const auto& p : run.series)
    if (p.true_performance >= threshold) return p.episodes_consumed;
  return std::nullopt;
}

}  // namespace esp
