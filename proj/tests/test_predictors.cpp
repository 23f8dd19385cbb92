#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "esp/engine.hpp"
#include "esp/forest.hpp"
#include "esp/predictors.hpp"

using namespace esp;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double lo = -1.0,
                              double hi = 1.0) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

std::vector<Sample> samples_from(const Eigen::MatrixXd& ctx, std::size_t action_width,
                                 const std::vector<double>& targets) {
  std::vector<Sample> out;
  for (Eigen::Index i = 0; i < ctx.rows(); ++i) {
    Sample s;
    for (Eigen::Index j = 0; j < ctx.cols(); ++j) s.context.push_back(ctx(i, j));
    s.action.assign(action_width, 0.0);
    s.action[static_cast<std::size_t>(i) % action_width] = 1.0;
    s.target = targets[static_cast<std::size_t>(i)];
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Forest, SingleTreeMemorisesDistinctPoints) {
  const Eigen::MatrixXd x = random_matrix(500, 3, 1);
  std::vector<double> y(500);
  Rng rng(2);
  for (auto& v : y) v = rng.normal(0.0, 1.0);
  ForestConfig cfg;
  cfg.n_estimators = 1;
  cfg.bootstrap = false;
  const auto forest = RandomForest::fit(x, y, cfg);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    EXPECT_EQ(forest.predict(row), y[static_cast<std::size_t>(i)]);
  }
}

TEST(Forest, PredictionIsMeanOfTrees) {
  const Eigen::MatrixXd x = random_matrix(200, 4, 3);
  std::vector<double> y(200);
  for (Eigen::Index i = 0; i < 200; ++i) y[static_cast<std::size_t>(i)] = std::sin(3 * x(i, 0)) + x(i, 1) * x(i, 2);
  ForestConfig cfg;
  cfg.n_estimators = 25;
  cfg.seed = 4;
  const auto forest = RandomForest::fit(x, y, cfg);
  const Eigen::MatrixXd probe = random_matrix(100, 4, 5, -1.5, 1.5);
  const Eigen::VectorXd batch = forest.predict_batch(probe);
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    const Eigen::VectorXd row = probe.row(i).transpose();
    double sum = 0.0;
    for (const auto& t : forest.trees()) sum += t.predict(row);
    EXPECT_NEAR(forest.predict(row), sum / 25.0, 1e-12);
    EXPECT_EQ(batch(i), forest.predict(row));
  }
}

TEST(Forest, StumpsPredictSign) {
  Eigen::MatrixXd x(2, 1);
  x << -1.0, 1.0;
  const std::vector<double> y{-1.0, 1.0};
  ForestConfig cfg;
  cfg.n_estimators = 5;
  cfg.bootstrap = false;
  const auto forest = RandomForest::fit(x, y, cfg);
  EXPECT_EQ(forest.predict(std::vector<double>{0.5}), 1.0);
  EXPECT_EQ(forest.predict(std::vector<double>{-0.5}), -1.0);
  EXPECT_EQ(forest.trees()[0].nodes()[0].threshold, 0.0);  // midpoint
}

TEST(Forest, ConstantTargetsAndConstantFeatures) {
  Eigen::MatrixXd x = random_matrix(50, 2, 6);
  x.col(1).setConstant(3.0);
  const std::vector<double> y(50, 4.25);
  const auto forest = RandomForest::fit(x, y, ForestConfig{});
  EXPECT_EQ(forest.predict(std::vector<double>{0.1, 3.0}), 4.25);
  for (const auto& t : forest.trees()) EXPECT_EQ(t.nodes().size(), 1u);
}

TEST(Forest, LeafSizeDepthAndDeterminism) {
  const Eigen::MatrixXd x = random_matrix(300, 3, 7);
  std::vector<double> y(300);
  Rng rng(8);
  for (auto& v : y) v = rng.uniform(0.0, 1.0);
  ForestConfig cfg;
  cfg.n_estimators = 4;
  cfg.max_depth = 3;
  cfg.seed = 9;
  const auto shallow = RandomForest::fit(x, y, cfg);
  for (const auto& t : shallow.trees()) EXPECT_LE(t.depth(), 3u);
  EXPECT_EQ(shallow, RandomForest::fit(x, y, cfg, 3));

  cfg.max_depth.reset();
  cfg.min_samples_leaf = 10;
  cfg.bootstrap = false;
  cfg.n_estimators = 1;
  const auto forest = RandomForest::fit(x, y, cfg);
  const auto& nodes = forest.trees()[0].nodes();
  // Count training rows reaching each leaf.
  std::vector<std::size_t> hits(nodes.size(), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::size_t n = 0;
    while (!nodes[n].is_leaf())
      n = static_cast<std::size_t>(x(i, nodes[n].feature) <= nodes[n].threshold ? nodes[n].left : nodes[n].right);
    ++hits[n];
  }
  for (std::size_t n = 0; n < nodes.size(); ++n)
    if (nodes[n].is_leaf()) {
      EXPECT_GE(hits[n], 10u);
    }
}

TEST(Forest, FeatureSubsampleStillFits) {
  const Eigen::MatrixXd x = random_matrix(100, 6, 10);
  std::vector<double> y(100);
  for (Eigen::Index i = 0; i < 100; ++i) y[static_cast<std::size_t>(i)] = x(i, 2);
  ForestConfig cfg;
  cfg.n_estimators = 1;
  cfg.bootstrap = false;
  cfg.feature_subsample = 0.5;
  const auto forest = RandomForest::fit(x, y, cfg);
  for (Eigen::Index i = 0; i < 100; ++i)
    EXPECT_EQ(forest.predict(Eigen::VectorXd(x.row(i).transpose())), y[static_cast<std::size_t>(i)]);
}

TEST(Forest, ErrorsOnBadInput) {
  ForestConfig cfg;
  EXPECT_THROW(RandomForest::fit(Eigen::MatrixXd(0, 2), std::vector<double>{}, cfg), ShapeError);
  EXPECT_THROW(RandomForest::fit(Eigen::MatrixXd::Zero(3, 2), std::vector<double>{1.0}, cfg), ShapeError);
  cfg.n_estimators = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  const auto f = RandomForest::fit(Eigen::MatrixXd::Zero(3, 2), std::vector<double>{1, 2, 3}, ForestConfig{});
  EXPECT_THROW(f.predict_batch(Eigen::MatrixXd::Zero(1, 3)), ShapeError);
}

TEST(ScaleTargets, BoundDivisionAndRoundTrip) {
  QConfig q{0.9, true, 2000.0};
  const double bound = q_target_bound(q, 200);
  EXPECT_DOUBLE_EQ(bound, 2000.0);
  const std::vector<double> raw{2000.0, 0.0, -2000.0, 9.5};
  const auto s = scale_targets(raw, ScalingMode::bound, bound);
  EXPECT_EQ(s.values[0], 1.0);
  EXPECT_EQ(s.values[1], 0.0);
  EXPECT_EQ(s.values[2], -1.0);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(s.scaling.invert(s.values[i]), raw[i], 1e-12);
}

TEST(ScaleTargets, StandardizeAndZeroRange) {
  const std::vector<double> raw{1.0, 3.0, 5.0, 7.0};
  const auto s = scale_targets(raw, ScalingMode::standardize);
  EXPECT_DOUBLE_EQ(s.scaling.offset, 4.0);
  EXPECT_DOUBLE_EQ(s.scaling.scale, std::sqrt(5.0));
  double mean = 0.0;
  for (double v : s.values) mean += v;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(s.scaling.invert(s.values[i]), raw[i], 1e-12);

  const std::vector<double> flat{2.5, 2.5};
  const auto z = scale_targets(flat, ScalingMode::standardize);
  EXPECT_EQ(z.scaling.scale, 1.0);
  EXPECT_EQ(z.values, (std::vector<double>{0.0, 0.0}));
  const auto none = scale_targets(flat, ScalingMode::none);
  EXPECT_EQ(none.values, flat);
  EXPECT_THROW(scale_targets(std::vector<double>{}, ScalingMode::none), ShapeError);
}

TEST(QTargetBound, MatchesExhaustiveMax) {
  for (const QConfig q : {QConfig{0.9, true, 2000.0}, QConfig{0.5, true, 10.0}, QConfig{1.0, false, 0.0},
                          QConfig{0.9, false, 0.0}}) {
    for (std::size_t steps : {1u, 7u, 200u}) {
      double best = 0.0;
      for (std::size_t len = 1; len <= steps; ++len)
        for (const double last : {1.0, q.shaping ? q.terminal_bonus : 1.0, q.shaping ? -q.terminal_bonus : 1.0}) {
          // Q at every step of an episode of this length ending in `last`.
          for (std::size_t t = 0; t < len; ++t) {
            double v = 0.0;
            for (std::size_t k = t; k < len; ++k)
              v += std::pow(q.gamma, static_cast<double>(k - t)) * (k + 1 == len ? last : 1.0);
            best = std::max(best, std::abs(v));
          }
        }
      EXPECT_NEAR(q_target_bound(q, steps), best, 1e-9 * std::max(1.0, best));
    }
  }
}

TEST(FitPredictor, ConstantTargets) {
  const Eigen::MatrixXd ctx = random_matrix(64, 4, 11);
  const auto samples = samples_from(ctx, 2, std::vector<double>(64, 0.75));
  PredictorConfig forest_cfg;
  forest_cfg.kind = PredictorKind::random_forest;
  forest_cfg.forest.n_estimators = 10;
  const auto forest = fit_predictor(samples, forest_cfg);
  const Eigen::MatrixXd probe = random_matrix(20, 4, 12, -3.0, 3.0);
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    std::vector<double> context;
    for (Eigen::Index j = 0; j < 4; ++j) context.push_back(probe(i, j));
    EXPECT_EQ(forest.predict(context, std::vector<double>{0.0, 1.0}), 0.75);
  }

  // Zero variance: standardising only removes the mean.
  PredictorConfig mlp_cfg;
  mlp_cfg.mlp.hidden = {8};
  mlp_cfg.mlp.train.epochs = 2000;
  mlp_cfg.mlp.train.learning_rate = 0.01;
  mlp_cfg.scaling = ScalingMode::standardize;
  const auto mlp = fit_predictor(samples, mlp_cfg);
  EXPECT_EQ(mlp.scaling().offset, 0.75);
  EXPECT_EQ(mlp.scaling().scale, 1.0);
  for (const auto& s : samples) EXPECT_NEAR(mlp.predict(s.context, s.action), 0.75, 1e-2);
}

TEST(FitPredictor, InputWidthChecked) {
  const auto samples = samples_from(random_matrix(10, 4, 13), 2, std::vector<double>(10, 1.0));
  PredictorConfig cfg;
  cfg.kind = PredictorKind::random_forest;
  cfg.forest.n_estimators = 2;
  const auto model = fit_predictor(samples, cfg);
  EXPECT_EQ(model.input_dim(), 6u);
  EXPECT_THROW(model.predict(std::vector<double>(4, 0.0), std::vector<double>(1, 0.0)), ShapeError);
  EXPECT_THROW(fit_predictor(std::vector<Sample>{}, cfg), ShapeError);
  EXPECT_THROW(PredictorModel().predict_batch(Matrix::Zero(1, 6)), StateError);
}

TEST(FitPredictor, RepeatedPredictionsIdentical) {
  const Eigen::MatrixXd ctx = random_matrix(40, 1, 14);
  std::vector<double> y(40);
  for (Eigen::Index i = 0; i < 40; ++i) y[static_cast<std::size_t>(i)] = ctx(i, 0) * 3.0;
  PredictorConfig cfg;
  cfg.mlp.hidden = {16};
  cfg.mlp.train.epochs = 50;
  const auto m = fit_predictor(samples_from(ctx, 1, y), cfg);
  const Matrix probe = random_matrix(10, 2, 15);
  EXPECT_EQ(m.predict_batch(probe), m.predict_batch(probe));
}
