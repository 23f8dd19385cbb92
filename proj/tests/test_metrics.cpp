#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "esp/metrics.hpp"

using namespace esp;

namespace {

RunResult run_with_rewards(DomainId id, const std::vector<double>& rewards, Method m = Method::esp) {
  RunResult r;
  r.domain = id;
  r.method = m;
  for (std::size_t i = 0; i < rewards.size(); ++i) r.series.push_back({i + 1, 0.0, 0.0, 0, rewards[i]});
  return r;
}

DomainParams domain(DomainId id) {
  DomainParams d;
  d.id = id;
  return d;
}

}  // namespace

TEST(Regret, CartpoleExamples) {
  const auto c = regret_series(run_with_rewards(DomainId::cartpole, {180, 200, 20}), domain(DomainId::cartpole));
  EXPECT_EQ(c.instantaneous, (std::vector<double>{20, 0, 180}));
  EXPECT_NEAR(c.cumulative_mean[2], 200.0 / 3.0, 1e-12);
}

TEST(Regret, FunctionRegretIsNegatedOutcome) {
  const auto c = regret_series(run_with_rewards(DomainId::function, {-0.5, 0.0, -2.0}), domain(DomainId::function));
  EXPECT_EQ(c.instantaneous, (std::vector<double>{0.5, 0.0, 2.0}));
}

TEST(Regret, RunningMeansMatchDirectSums) {
  Rng rng(3);
  std::vector<double> rewards(1000);
  for (auto& r : rewards) r = rng.uniform(0, 200);
  const auto c = regret_series(run_with_rewards(DomainId::cartpole, rewards), domain(DomainId::cartpole), 100);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    double all = 0.0, win = 0.0;
    for (std::size_t k = 0; k <= i; ++k) all += 200.0 - rewards[k];
    const std::size_t from = i >= 99 ? i - 99 : 0;
    for (std::size_t k = from; k <= i; ++k) win += 200.0 - rewards[k];
    EXPECT_NEAR(c.cumulative_mean[i], all / static_cast<double>(i + 1), 1e-9);
    EXPECT_NEAR(c.moving_average[i], win / static_cast<double>(i - from + 1), 1e-9);
  }
}

TEST(Regret, Errors) {
  const RunResult r = run_with_rewards(DomainId::cartpole, {1});
  EXPECT_THROW(regret_series(r, domain(DomainId::function)), ConfigError);
  EXPECT_THROW(regret_series(r, domain(DomainId::cartpole), 0), ConfigError);
}

TEST(Aggregate, MeanAndSampleStd) {
  const std::vector<Curve> curves{{{10, 100}, {20, 100}}, {{10, 200}, {20, 200}}};
  const auto rows = aggregate_curves(curves, 10.0);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].mean, 150.0);
  EXPECT_NEAR(rows[0].std, 70.710678118654755, 1e-12);
  EXPECT_EQ(rows[0].n_runs, 2u);
}

TEST(Aggregate, InterpolatesAndHoldsFinalValue) {
  const Curve c{{5, 0}, {15, 10}};
  EXPECT_FALSE(curve_value_at(c, 4).has_value());
  EXPECT_EQ(*curve_value_at(c, 10), 5.0);
  EXPECT_EQ(*curve_value_at(c, 100), 10.0);
  const std::vector<Curve> curves{c, {{5, 1}, {40, 1}}};
  const auto rows = aggregate_curves(curves, 10.0);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows.back().episodes, 40.0);
  EXPECT_EQ(rows.back().mean, 5.5);
  EXPECT_THROW(aggregate_curves(std::vector<Curve>{}, 10.0), ConfigError);
  EXPECT_THROW(aggregate_curves(curves, 0.0), ConfigError);
}

TEST(Aggregate, RunsMustShareDomainAndMethod) {
  const std::vector<RunResult> runs{run_with_rewards(DomainId::cartpole, {1, 2}),
                                    run_with_rewards(DomainId::cartpole, {1, 2}, Method::de)};
  EXPECT_THROW(aggregate_runs(runs, domain(DomainId::cartpole)), ConfigError);
}

TEST(EpisodesToThreshold, FirstCrossing) {
  RunResult r = run_with_rewards(DomainId::cartpole, {0, 0, 0, 0});
  r.series[2].true_performance = 196;
  r.series[3].true_performance = 199;
  EXPECT_EQ(episodes_to_threshold(r, 195.0), 3u);
  EXPECT_FALSE(episodes_to_threshold(r, 200.0).has_value());
}

TEST(TruePerformance, RepeatableAndSideEffectFree) {
  const DomainParams d = domain(DomainId::cartpole);
  const NetworkGenome g = init_network({{4, 8, 2}, Activation::tanh, Activation::argmax}, 1);
  const NetworkGenome copy = g;
  const double a = true_performance(g, d, 20, 7);
  EXPECT_EQ(g, copy);
  EXPECT_EQ(true_performance(g, d, 20, 7), a);
  double manual = 0.0;
  for (std::size_t k = 0; k < 20; ++k) {
    Rng rng(evaluation_seed(7, k));
    manual += rollout(d, g, rng).total_reward;
  }
  EXPECT_DOUBLE_EQ(a, manual / 20.0);
  EXPECT_THROW(true_performance(g, d, 0, 7), ConfigError);
}

TEST(TruePerformance, FunctionPerformanceIsBounded) {
  const DomainParams d = domain(DomainId::function);
  const NetworkGenome g = init_network({{1, 4, 1}, Activation::tanh, Activation::tanh}, 2);
  const double p = true_performance(g, d, 200, 1);
  EXPECT_LE(p, 0.0);
  EXPECT_GE(p, -13.0);
}
