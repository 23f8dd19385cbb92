#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "esp/neuralnet.hpp"

#include "nn_oracle.hpp"

using namespace esp;

namespace {

NetworkGenome seeded_net(std::vector<std::size_t> sizes, Activation out, std::uint64_t seed) {
  NetworkGenome g = init_network({sizes, Activation::tanh, out}, seed);
  Rng rng(seed + 1000);
  for (auto& b : g.biases) b = rng.uniform(-0.5, 0.5);
  return g;
}

void set_parameter(NetworkGenome& g, std::size_t i, double v) {
  if (i < g.weights.size())
    g.weights[i] = v;
  else
    g.biases[i - g.weights.size()] = v;
}

Dataset random_batch(std::size_t n, std::size_t in, std::size_t out, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d{Matrix(n, in), Matrix(n, out)};
  for (Eigen::Index i = 0; i < d.inputs.size(); ++i) d.inputs.data()[i] = rng.uniform(-1.0, 1.0);
  for (Eigen::Index i = 0; i < d.targets.size(); ++i) d.targets.data()[i] = rng.uniform(-1.0, 1.0);
  return d;
}

}  // namespace

TEST(InitNetwork, RowsOrthonormalWhenWide) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const NetworkGenome g = init_network({{4, 3}, Activation::tanh, Activation::tanh}, seed);
    const RowMajorMatrix w = g.weight_matrix(0);
    const Matrix gram = w * w.transpose();
    EXPECT_LT((gram - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(InitNetwork, ColumnsOrthonormalWhenTall) {
  const NetworkGenome g = init_network({{3, 7, 2}, Activation::tanh, Activation::linear}, 9);
  const RowMajorMatrix w0 = g.weight_matrix(0);  // 7x3
  EXPECT_LT((w0.transpose() * w0 - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-9);
  const RowMajorMatrix w1 = g.weight_matrix(1);  // 2x7
  EXPECT_LT((w1 * w1.transpose() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(InitNetwork, OneByOneIsPlusOrMinusOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const NetworkGenome g = init_network({{1, 1}, Activation::tanh, Activation::tanh}, seed);
    ASSERT_EQ(g.weights.size(), 1u);
    EXPECT_EQ(std::abs(g.weights[0]), 1.0);
  }
}

TEST(InitNetwork, ZeroBiasesAndDeterministic) {
  const Architecture arch{{4, 32, 2}, Activation::tanh, Activation::argmax};
  const NetworkGenome a = init_network(arch, 5), b = init_network(arch, 5), c = init_network(arch, 6);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.weights, c.weights);
  for (double v : a.biases) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(a.weights.size(), 4u * 32u + 32u * 2u);
  EXPECT_EQ(a.biases.size(), 34u);
}

TEST(InitNetwork, ZeroInputGivesActivationOfZero) {
  const NetworkGenome g = init_network({{5, 8, 3}, Activation::tanh, Activation::tanh}, 1);
  for (double v : forward(g, std::vector<double>(5, 0.0))) EXPECT_EQ(v, 0.0);
}

TEST(InitNetwork, RejectsBadArchitectures) {
  EXPECT_THROW(init_network({{}, Activation::tanh, Activation::tanh}, 0), ArchitectureError);
  EXPECT_THROW(init_network({{3}, Activation::tanh, Activation::tanh}, 0), ArchitectureError);
  EXPECT_THROW(init_network({{3, 0, 1}, Activation::tanh, Activation::tanh}, 0), ArchitectureError);
}

TEST(Forward, ZeroParametersGiveZeroOutput) {
  NetworkGenome g = init_network({{3, 4, 2}, Activation::tanh, Activation::tanh}, 0);
  std::fill(g.weights.begin(), g.weights.end(), 0.0);
  for (double v : forward(g, std::vector<double>{1.0, -2.0, 3.0})) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityLinearLayer) {
  NetworkGenome g = init_network({{3, 3}, Activation::tanh, Activation::linear}, 0);
  g.weights = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const std::vector<double> x{0.25, -7.0, 3.5};
  EXPECT_EQ(forward(g, x), x);
}

TEST(Forward, MatchesLoopOracle241) {
  const NetworkGenome g = seeded_net({2, 4, 1}, Activation::tanh, 42);
  const std::vector<double> x{0.5, -0.5};
  const auto y = forward(g, x);
  const auto expected = oracle::forward(g, x);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_NEAR(y[0], expected[0], 1e-12);
}

TEST(Forward, MatchesLoopOracleOnRandomNets) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::size_t> sizes{1 + rng.below(6)};
    for (std::size_t h = rng.below(3); h > 0; --h) sizes.push_back(1 + rng.below(12));
    sizes.push_back(1 + rng.below(4));
    const auto out = rng.bernoulli(0.5) ? Activation::tanh : Activation::linear;
    const NetworkGenome g = seeded_net(sizes, out, 100 + trial);
    std::vector<double> x(sizes.front());
    for (auto& v : x) v = rng.uniform(-3.0, 3.0);
    const auto y = forward(g, x);
    const auto e = oracle::forward(g, x);
    for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(y[k], e[k], 1e-12);
  }
}

TEST(Forward, ArgmaxIsOneHotLowestIndexOnTies) {
  NetworkGenome g = init_network({{2, 3}, Activation::tanh, Activation::argmax}, 0);
  g.weights = {1, 0, 0, 1, 1, 0};  // outputs x0, x1, x0
  EXPECT_EQ(forward(g, std::vector<double>{2.0, 1.0}), (std::vector<double>{1, 0, 0}));
  EXPECT_EQ(forward(g, std::vector<double>{1.0, 2.0}), (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(forward(g, std::vector<double>{1.0, 1.0}), (std::vector<double>{1, 0, 0}));
  EXPECT_EQ(argmax_action(std::vector<double>{0.3, 0.7, 0.7}), 1u);
}

TEST(Forward, RejectsBadInput) {
  const NetworkGenome g = init_network({{2, 3, 1}, Activation::tanh, Activation::tanh}, 0);
  EXPECT_THROW(forward(g, std::vector<double>{1.0}), ShapeError);
  EXPECT_THROW(forward(g, std::vector<double>{1.0, std::nan("")}), NumericError);
  EXPECT_THROW(forward(g, std::vector<double>{1.0, INFINITY}), NumericError);
}

TEST(Gradients, SingleLinearUnitByHand) {
  NetworkGenome g = init_network({{1, 1}, Activation::tanh, Activation::linear}, 0);
  g.weights = {1.0};
  Dataset d{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.0)};
  const auto grad = gradients(g, d);
  EXPECT_DOUBLE_EQ(grad[0], 2.0);  // 2 x (w x - t)
  EXPECT_DOUBLE_EQ(grad[1], 2.0);  // bias
}

TEST(Gradients, ZeroErrorGivesZeroGradient) {
  const NetworkGenome g = seeded_net({3, 5, 2}, Activation::tanh, 7);
  Dataset d = random_batch(8, 3, 2, 1);
  d.targets = forward_batch(g, d.inputs);
  for (double v : gradients(g, d)) EXPECT_EQ(v, 0.0);
}

TEST(Gradients, MatchCentralDifferences) {
  for (const auto out : {Activation::tanh, Activation::linear}) {
    NetworkGenome g = seeded_net({2, 8, 1}, out, 11);
    const Dataset d = random_batch(16, 2, 1, 12);
    const auto grad = gradients(g, d);
    const double h = 1e-5;
    for (std::size_t i = 0; i < g.parameter_count(); ++i) {
      const double v = g.parameter(i);
      set_parameter(g, i, v + h);
      const double up = oracle::loss(g, d);
      set_parameter(g, i, v - h);
      const double down = oracle::loss(g, d);
      set_parameter(g, i, v);
      const double fd = (up - down) / (2 * h);
      EXPECT_LT(std::abs(grad[i] - fd) / std::max(1e-8, std::max(std::abs(grad[i]), std::abs(fd))), 1e-4)
          << "parameter " << i;
    }
  }
}

TEST(Gradients, ArgmaxIsNotDifferentiable) {
  const NetworkGenome g = init_network({{2, 3, 2}, Activation::tanh, Activation::argmax}, 0);
  EXPECT_THROW(gradients(g, random_batch(4, 2, 2, 0)), NonDifferentiableError);
}

TEST(Gradients, ShapeChecks) {
  const NetworkGenome g = init_network({{2, 3, 1}, Activation::tanh, Activation::tanh}, 0);
  EXPECT_THROW(gradients(g, random_batch(4, 3, 1, 0)), ShapeError);
  EXPECT_THROW(gradients(g, random_batch(4, 2, 2, 0)), ShapeError);
  EXPECT_THROW(gradients(g, random_batch(0, 2, 1, 0)), ShapeError);
}

TEST(TrainMlp, ConstantTarget) {
  Dataset d{Matrix(50, 1), Matrix::Constant(50, 1, 0.7)};
  for (Eigen::Index i = 0; i < 50; ++i) d.inputs(i, 0) = -1.0 + 2.0 * static_cast<double>(i) / 49.0;
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.learning_rate = 0.01;
  cfg.seed = 1;
  const auto g = train_mlp(d, Architecture{{1, 8, 1}, Activation::tanh, Activation::linear}, cfg);
  EXPECT_LT(mse(g, d), 1e-4);
}

TEST(TrainMlp, LinearTarget) {
  Dataset d{Matrix(100, 1), Matrix(100, 1)};
  for (Eigen::Index i = 0; i < 100; ++i) {
    d.inputs(i, 0) = -1.0 + 2.0 * static_cast<double>(i) / 99.0;
    d.targets(i, 0) = 2.0 * d.inputs(i, 0);
  }
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.learning_rate = 0.01;
  cfg.seed = 2;
  std::vector<double> losses;
  const auto g = train_mlp(d, Architecture{{1, 1}, Activation::tanh, Activation::linear}, cfg, &losses);
  EXPECT_LT(mse(g, d), 1e-3);
  ASSERT_EQ(losses.size(), 2000u);
}

TEST(TrainMlp, SineWithTwoHiddenLayers) {
  Dataset d{Matrix(200, 1), Matrix(200, 1)};
  for (Eigen::Index i = 0; i < 200; ++i) {
    d.inputs(i, 0) = -std::numbers::pi + 2.0 * std::numbers::pi * static_cast<double>(i) / 199.0;
    d.targets(i, 0) = std::sin(d.inputs(i, 0));
  }
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.seed = 3;
  std::vector<double> losses;
  const auto g = train_mlp(d, Architecture{{1, 64, 64, 1}, Activation::tanh, Activation::linear}, cfg, &losses);
  EXPECT_LT(mse(g, d), 1e-2);
  const std::size_t tenth = losses.size() / 10;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < tenth; ++i) {
    first += losses[i];
    last += losses[losses.size() - 1 - i];
  }
  EXPECT_LE(last, first);
}

TEST(TrainMlp, DeterministicAndPartialBatches) {
  const Dataset d = random_batch(37, 3, 2, 5);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.seed = 4;
  const Architecture arch{{3, 6, 2}, Activation::tanh, Activation::tanh};
  EXPECT_EQ(train_mlp(d, arch, cfg), train_mlp(d, arch, cfg));
  cfg.seed = 5;
  EXPECT_NE(train_mlp(d, arch, cfg).weights, train_mlp(d, arch, TrainConfig{20, 16}).weights);
}

TEST(TrainMlp, DivergenceReportsEpoch) {
  const Dataset d = random_batch(32, 2, 1, 6);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e300;
  try {
    train_mlp(d, Architecture{{2, 4, 1}, Activation::tanh, Activation::linear}, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergedTrainingError& e) {
    EXPECT_LT(e.epoch(), 50u);
  }
}
