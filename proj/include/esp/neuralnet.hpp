#pragma once

// Fixed-topology feed-forward networks: the evolved Prescriptor policies and
// the gradient-trained MLP Predictors share this representation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "esp/error.hpp"
#include "esp/random.hpp"

namespace esp {

enum class Activation { tanh, linear, argmax };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
    case Activation::argmax: return "argmax";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "linear") return Activation::linear;
  if (s == "argmax") return Activation::argmax;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Architecture {
  std::vector<std::size_t> layer_sizes;
  Activation hidden_activation = Activation::tanh;
  Activation output_activation = Activation::tanh;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Flat parameter set of an MLP. Weight matrix l has shape
/// (layer_sizes[l+1] x layer_sizes[l]) and is stored row-major; matrices are
/// concatenated layer by layer, then all bias vectors follow in `biases`.
struct NetworkGenome {
  std::vector<std::size_t> layer_sizes;
  std::vector<double> weights;
  std::vector<double> biases;
  Activation hidden_activation = Activation::tanh;
  Activation output_activation = Activation::tanh;

  std::size_t layer_count() const { return layer_sizes.size() - 1; }
  std::size_t input_width() const { return layer_sizes.front(); }
  std::size_t output_width() const { return layer_sizes.back(); }
  std::size_t parameter_count() const { return weights.size() + biases.size(); }

  Architecture architecture() const {
    return {layer_sizes, hidden_activation, output_activation};
  }

  std::size_t weight_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += layer_sizes[l] * layer_sizes[l + 1];
    return off;
  }
  std::size_t bias_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += layer_sizes[l + 1];
    return off;
  }

  Eigen::Map<const RowMajorMatrix> weight_matrix(std::size_t layer) const {
    return {weights.data() + weight_offset(layer), static_cast<Eigen::Index>(layer_sizes[layer + 1]),
            static_cast<Eigen::Index>(layer_sizes[layer])};
  }
  Eigen::Map<RowMajorMatrix> weight_matrix(std::size_t layer) {
    return {weights.data() + weight_offset(layer), static_cast<Eigen::Index>(layer_sizes[layer + 1]),
            static_cast<Eigen::Index>(layer_sizes[layer])};
  }
  Eigen::Map<const Vector> bias_vector(std::size_t layer) const {
    return {biases.data() + bias_offset(layer), static_cast<Eigen::Index>(layer_sizes[layer + 1])};
  }

  /// Parameter i in genome order (weights first, then biases).
  double parameter(std::size_t i) const {
    return i < weights.size() ? weights[i] : biases[i - weights.size()];
  }
  double& parameter(std::size_t i) {
    return i < weights.size() ? weights[i] : biases[i - weights.size()];
  }

  friend bool operator==(const NetworkGenome&, const NetworkGenome&) = default;
};

inline std::size_t expected_weight_count(std::span<const std::size_t> sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1];
  return n;
}

inline std::size_t expected_bias_count(std::span<const std::size_t> sizes) {
  std::size_t n = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) n += sizes[l];
  return n;
}

inline void validate_layer_sizes(std::span<const std::size_t> sizes) {
  if (sizes.size() < 2) throw ArchitectureError("network needs at least an input and an output layer");
  for (auto s : sizes)
    if (s == 0) throw ArchitectureError("layer widths must be positive");
}

/// Checks the structural invariants; throws on violation.
inline void validate(const NetworkGenome& g) {
  validate_layer_sizes(g.layer_sizes);
  if (g.hidden_activation != Activation::tanh)
    throw ArchitectureError("hidden activation must be tanh");
  if (g.weights.size() != expected_weight_count(g.layer_sizes) ||
      g.biases.size() != expected_bias_count(g.layer_sizes))
    throw ShapeError("parameter count does not match layer sizes");
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(g.weights.begin(), g.weights.end(), finite) ||
      !std::all_of(g.biases.begin(), g.biases.end(), finite))
    throw NumericError("genome has non-finite parameters");
}

namespace detail {

// Semi-orthogonal rows x cols matrix from the QR factorisation of a standard
// normal matrix; the sign of each Q column is fixed so that diag(R) > 0.
inline RowMajorMatrix orthogonal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const bool transpose = rows < cols;
  const auto tall_rows = static_cast<Eigen::Index>(transpose ? cols : rows);
  const auto tall_cols = static_cast<Eigen::Index>(transpose ? rows : cols);
  Matrix a(tall_rows, tall_cols);
  for (Eigen::Index i = 0; i < tall_rows; ++i)
    for (Eigen::Index j = 0; j < tall_cols; ++j) a(i, j) = rng.normal(0.0, 1.0);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(tall_rows, tall_cols);
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < tall_cols; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  if (transpose) return q.transpose();
  return q;
}

// tanh through the vectorised exponential; absolute error stays below 1e-15.
inline void tanh_inplace(Matrix& z) { z = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0); }

inline void apply_activation(Matrix& z, Activation act) {
  switch (act) {
    case Activation::tanh: tanh_inplace(z); break;
    case Activation::linear: break;
    case Activation::argmax:
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < z.cols(); ++j)
          if (z(i, j) > z(i, best)) best = j;
        z.row(i).setZero();
        z(i, best) = 1.0;
      }
      break;
  }
}

}  // namespace detail

/// Orthogonal weights (unit gain), zero biases. Deterministic in `seed`.
inline NetworkGenome init_network(const Architecture& arch, std::uint64_t seed) {
  validate_layer_sizes(arch.layer_sizes);
  if (arch.hidden_activation != Activation::tanh)
    throw ArchitectureError("hidden activation must be tanh");
  NetworkGenome g;
  g.layer_sizes = arch.layer_sizes;
  g.hidden_activation = arch.hidden_activation;
  g.output_activation = arch.output_activation;
  g.weights.resize(expected_weight_count(g.layer_sizes));
  g.biases.assign(expected_bias_count(g.layer_sizes), 0.0);
  Rng rng(seed);
  for (std::size_t l = 0; l < g.layer_count(); ++l)
    g.weight_matrix(l) = detail::orthogonal_matrix(g.layer_sizes[l + 1], g.layer_sizes[l], rng);
  return g;
}

/// Batched forward pass: one input per row, one output per row.
inline Matrix forward_batch(const NetworkGenome& g, const Matrix& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != g.input_width())
    throw ShapeError("input width " + std::to_string(inputs.cols()) + " != network input width " +
                     std::to_string(g.input_width()));
  if (!inputs.allFinite()) throw NumericError("non-finite network input");
  Matrix a = inputs;
  for (std::size_t l = 0; l < g.layer_count(); ++l) {
    Matrix z = a * g.weight_matrix(l).transpose();
    z.rowwise() += g.bias_vector(l).transpose();
    detail::apply_activation(z, l + 1 == g.layer_count() ? g.output_activation : g.hidden_activation);
    a = std::move(z);
  }
  return a;
}

inline std::vector<double> forward(const NetworkGenome& g, std::span<const double> input) {
  if (input.size() != g.input_width())
    throw ShapeError("input length " + std::to_string(input.size()) + " != network input width " +
                     std::to_string(g.input_width()));
  Matrix x(1, static_cast<Eigen::Index>(input.size()));
  for (std::size_t i = 0; i < input.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = input[i];
  const Matrix y = forward_batch(g, x);
  return {y.data(), y.data() + y.size()};
}

/// Index of the largest output (lowest index on ties).
inline std::size_t argmax_action(std::span<const double> outputs) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < outputs.size(); ++j)
    if (outputs[j] > outputs[best]) best = j;
  return best;
}

/// Supervised data: one example per row of `inputs` / `targets`.
struct Dataset {
  Matrix inputs;
  Matrix targets;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

namespace detail {

struct BackpropWorkspace {
  std::vector<Matrix> activations;  // activations[0] = inputs
  Matrix delta;
  Matrix next_delta;
};

// Mean squared error of the batch; writes d(loss)/d(theta) into `grad`
// (genome parameter order). Loss is averaged over rows and output units.
template <class InputRows, class TargetRows>
double backprop(const NetworkGenome& g, const InputRows& x, const TargetRows& t,
                std::span<double> grad, BackpropWorkspace& ws) {
  const std::size_t layers = g.layer_count();
  ws.activations.resize(layers + 1);
  ws.activations[0] = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix& out = ws.activations[l + 1];
    out.noalias() = ws.activations[l] * g.weight_matrix(l).transpose();
    out.rowwise() += g.bias_vector(l).transpose();
    const Activation act = l + 1 == layers ? g.output_activation : g.hidden_activation;
    if (act == Activation::tanh) tanh_inplace(out);
  }
  const Matrix& y = ws.activations[layers];
  const double n = static_cast<double>(y.rows() * y.cols());
  ws.delta = y - t;
  const double loss = ws.delta.squaredNorm() / n;
  ws.delta *= 2.0 / n;
  if (g.output_activation == Activation::tanh)
    ws.delta.array() *= 1.0 - y.array().square();

  const std::size_t wcount = g.weights.size();
  for (std::size_t l = layers; l-- > 0;) {
    const auto rows = static_cast<Eigen::Index>(g.layer_sizes[l + 1]);
    const auto cols = static_cast<Eigen::Index>(g.layer_sizes[l]);
    Eigen::Map<RowMajorMatrix> gw(grad.data() + g.weight_offset(l), rows, cols);
    Eigen::Map<Vector> gb(grad.data() + wcount + g.bias_offset(l), rows);
    gw.noalias() = ws.delta.transpose() * ws.activations[l];
    gb = ws.delta.colwise().sum().transpose();
    if (l > 0) {
      ws.next_delta.noalias() = ws.delta * g.weight_matrix(l);
      ws.next_delta.array() *= 1.0 - ws.activations[l].array().square();
      std::swap(ws.delta, ws.next_delta);
    }
  }
  return loss;
}

}  // namespace detail

/// Gradient of the batch-mean squared error with respect to every parameter,
/// in genome order.
inline std::vector<double> gradients(const NetworkGenome& g, const Dataset& batch) {
  if (g.output_activation == Activation::argmax)
    throw NonDifferentiableError("gradients are undefined for argmax outputs");
  if (batch.size() == 0) throw ShapeError("empty batch");
  if (static_cast<std::size_t>(batch.inputs.cols()) != g.input_width() ||
      static_cast<std::size_t>(batch.targets.cols()) != g.output_width() ||
      batch.targets.rows() != batch.inputs.rows())
    throw ShapeError("batch dimensions do not match the network");
  std::vector<double> grad(g.parameter_count());
  detail::BackpropWorkspace ws;
  detail::backprop(g, batch.inputs, batch.targets, grad, ws);
  return grad;
}

/// Mean squared error of the network over a dataset.
inline double mse(const NetworkGenome& g, const Dataset& data) {
  const Matrix y = forward_batch(g, data.inputs);
  return (y - data.targets).squaredNorm() / static_cast<double>(y.size());
}

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 256;
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
};

/// Mini-batch Adam on the mean squared error, starting from `initial`. One
/// fresh permutation of the data per epoch; the last batch may be partial.
/// When `epoch_losses` is given it receives the mean batch loss of each epoch.
inline NetworkGenome train_mlp(const Dataset& data, NetworkGenome initial, const TrainConfig& cfg,
                               std::vector<double>* epoch_losses = nullptr) {
  if (data.size() == 0) throw ShapeError("empty training set");
  if (cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0))
    throw ConfigError("epochs, batch_size and learning_rate must be positive");
  if (initial.output_activation == Activation::argmax)
    throw NonDifferentiableError("cannot train a network with argmax outputs");
  if (static_cast<std::size_t>(data.inputs.cols()) != initial.input_width() ||
      static_cast<std::size_t>(data.targets.cols()) != initial.output_width() ||
      data.targets.rows() != data.inputs.rows())
    throw ShapeError("dataset dimensions do not match the network");
  if (!data.inputs.allFinite() || !data.targets.allFinite())
    throw NumericError("non-finite training data");

  NetworkGenome g = std::move(initial);
  const std::size_t n = data.size();
  const std::size_t p = g.parameter_count();
  std::vector<double> grad(p), m(p, 0.0), v(p, 0.0);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(derive_seed(cfg.seed, {0x5348u}));
  detail::BackpropWorkspace ws;
  Matrix xb, tb;
  double beta1_t = 1.0, beta2_t = 1.0;
  if (epoch_losses) epoch_losses->clear();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      const std::span<const Eigen::Index> idx(order.data() + start, count);
      xb = data.inputs(idx, Eigen::all);
      tb = data.targets(idx, Eigen::all);
      const double loss = detail::backprop(g, xb, tb, grad, ws);
      if (!std::isfinite(loss))
        throw DivergedTrainingError(epoch, "training diverged (non-finite loss) in epoch " +
                                               std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(count);

      beta1_t *= cfg.adam_beta1;
      beta2_t *= cfg.adam_beta2;
      const double step = cfg.learning_rate * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
      const double eps_hat = cfg.adam_epsilon * std::sqrt(1.0 - beta2_t);
      for (std::size_t i = 0; i < p; ++i) {
        m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grad[i];
        v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
        g.parameter(i) -= step * m[i] / (std::sqrt(v[i]) + eps_hat);
      }
    }
    if (epoch_losses) epoch_losses->push_back(epoch_loss / static_cast<double>(n));
  }
  return g;
}

inline NetworkGenome train_mlp(const Dataset& data, const Architecture& arch, const TrainConfig& cfg,
                               std::vector<double>* epoch_losses = nullptr) {
  return train_mlp(data, init_network(arch, derive_seed(cfg.seed, {0x494eu})), cfg, epoch_losses);
}

}  // namespace esp
