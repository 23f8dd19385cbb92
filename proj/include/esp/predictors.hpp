#pragma once

// Surrogate models mapping (context, action) to a predicted outcome.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "esp/error.hpp"
#include "esp/forest.hpp"
#include "esp/neuralnet.hpp"

namespace esp {

/// One supervised record. For discrete domains `action` is one-hot.
struct Sample {
  std::vector<double> context;
  std::vector<double> action;
  double target = 0.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class PredictorKind { mlp, random_forest };

inline std::string_view to_string(PredictorKind k) {
  return k == PredictorKind::mlp ? "mlp" : "random_forest";
}

inline PredictorKind predictor_kind_from_string(std::string_view s) {
  if (s == "mlp") return PredictorKind::mlp;
  if (s == "random_forest") return PredictorKind::random_forest;
  throw ConfigError("unknown predictor kind '" + std::string(s) + "'");
}

enum class ScalingMode {
  none,         // targets used as-is
  bound,        // divide by a known bound on |target|, clamp to [-1, 1]
  standardize,  // zero mean, unit variance over the current training set
};

inline std::string_view to_string(ScalingMode m) {
  switch (m) {
    case ScalingMode::none: return "none";
    case ScalingMode::bound: return "bound";
    case ScalingMode::standardize: return "standardize";
  }
  return "?";
}

inline ScalingMode scaling_mode_from_string(std::string_view s) {
  if (s == "none") return ScalingMode::none;
  if (s == "bound") return ScalingMode::bound;
  if (s == "standardize") return ScalingMode::standardize;
  throw ConfigError("unknown target scaling '" + std::string(s) + "'");
}

/// scaled = (raw - offset) / scale
struct TargetScaling {
  double offset = 0.0;
  double scale = 1.0;

  double apply(double raw) const { return (raw - offset) / scale; }
  double invert(double scaled) const { return scaled * scale + offset; }

  friend bool operator==(const TargetScaling&, const TargetScaling&) = default;
};

struct ScaledTargets {
  std::vector<double> values;
  TargetScaling scaling;
};

/// Maps raw targets into model units. A zero bound or zero spread yields a
/// pure shift (scale 1).
inline ScaledTargets scale_targets(std::span<const double> raw, ScalingMode mode, double bound = 0.0) {
  if (raw.empty()) throw ShapeError("no targets to scale");
  TargetScaling s;
  switch (mode) {
    case ScalingMode::none: break;
    case ScalingMode::bound:
      if (bound > 0.0) s.scale = bound;
      break;
    case ScalingMode::standardize: {
      double mean = 0.0;
      for (double v : raw) mean += v;
      mean /= static_cast<double>(raw.size());
      double var = 0.0;
      for (double v : raw) var += (v - mean) * (v - mean);
      var /= static_cast<double>(raw.size());
      s.offset = mean;
      if (var > 0.0) s.scale = std::sqrt(var);
      break;
    }
  }
  ScaledTargets out{{}, s};
  out.values.reserve(raw.size());
  for (double v : raw) {
    double scaled = s.apply(v);
    if (mode == ScalingMode::bound) scaled = std::clamp(scaled, -1.0, 1.0);
    out.values.push_back(scaled);
  }
  return out;
}

struct MlpPredictorConfig {
  std::vector<std::size_t> hidden{64, 64};
  Activation output_activation = Activation::linear;
  TrainConfig train{};
};

struct PredictorConfig {
  PredictorKind kind = PredictorKind::mlp;
  MlpPredictorConfig mlp{};
  ForestConfig forest{};
  ScalingMode scaling = ScalingMode::none;
  double target_bound = 0.0;  // used by ScalingMode::bound; the engine derives it from Q settings when 0
};

/// A fitted Predictor. Immutable after fitting; prediction is thread-safe.
class PredictorModel {
 public:
  PredictorModel() = default;
  PredictorModel(NetworkGenome net, TargetScaling scaling)
      : kind_(PredictorKind::mlp), input_dim_(net.input_width()), scaling_(scaling), net_(std::move(net)) {}
  PredictorModel(RandomForest forest, TargetScaling scaling)
      : kind_(PredictorKind::random_forest), input_dim_(forest.input_dim()), scaling_(scaling),
        forest_(std::move(forest)) {}

  PredictorKind kind() const { return kind_; }
  std::size_t input_dim() const { return input_dim_; }
  const TargetScaling& scaling() const { return scaling_; }
  bool fitted() const { return net_.has_value() || forest_.has_value(); }
  const NetworkGenome& network() const { return net_.value(); }
  const RandomForest& forest() const { return forest_.value(); }

  /// Predictions in target units, one per row of (context ++ action) inputs.
  Eigen::VectorXd predict_batch(const Matrix& inputs) const {
    if (!fitted()) throw StateError("predictor is not fitted");
    if (static_cast<std::size_t>(inputs.cols()) != input_dim_)
      throw ShapeError("predictor expects " + std::to_string(input_dim_) + " inputs, got " +
                       std::to_string(inputs.cols()));
    Eigen::VectorXd out = net_ ? Eigen::VectorXd(forward_batch(*net_, inputs).col(0)) : forest_->predict_batch(inputs);
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = scaling_.invert(out(i));
    return out;
  }

  double predict(std::span<const double> context, std::span<const double> action) const {
    if (context.size() + action.size() != input_dim_)
      throw ShapeError("predictor expects " + std::to_string(input_dim_) + " inputs, got " +
                       std::to_string(context.size() + action.size()));
    Matrix row(1, static_cast<Eigen::Index>(input_dim_));
    for (std::size_t i = 0; i < context.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = context[i];
    for (std::size_t i = 0; i < action.size(); ++i)
      row(0, static_cast<Eigen::Index>(context.size() + i)) = action[i];
    return predict_batch(row)(0);
  }

 private:
  PredictorKind kind_ = PredictorKind::mlp;
  std::size_t input_dim_ = 0;
  TargetScaling scaling_{};
  std::optional<NetworkGenome> net_;
  std::optional<RandomForest> forest_;
};

/// Stacks samples into a (context ++ action) input matrix.
inline Matrix sample_inputs(std::span<const Sample> samples) {
  if (samples.empty()) throw ShapeError("empty sample set");
  const std::size_t c = samples.front().context.size();
  const std::size_t a = samples.front().action.size();
  Matrix x(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(c + a));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.context.size() != c || s.action.size() != a) throw ShapeError("samples have non-uniform dimensions");
    for (std::size_t j = 0; j < c; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.context[j];
    for (std::size_t j = 0; j < a; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + j)) = s.action[j];
  }
  return x;
}

inline PredictorModel fit_predictor(std::span<const Sample> samples, const PredictorConfig& cfg,
                                    std::size_t threads = 1) {
  if (samples.empty()) throw ShapeError("cannot fit a predictor on an empty dataset");
  const Matrix x = sample_inputs(samples);
  if (!x.allFinite()) throw NumericError("non-finite sample inputs");
  std::vector<double> raw;
  raw.reserve(samples.size());
  for (const auto& s : samples) {
    if (!std::isfinite(s.target)) throw NumericError("non-finite sample target");
    raw.push_back(s.target);
  }
  auto scaled = scale_targets(raw, cfg.scaling, cfg.target_bound);

  if (cfg.kind == PredictorKind::random_forest)
    return PredictorModel(RandomForest::fit(x, scaled.values, cfg.forest, threads), scaled.scaling);

  Architecture arch;
  arch.layer_sizes.push_back(static_cast<std::size_t>(x.cols()));
  arch.layer_sizes.insert(arch.layer_sizes.end(), cfg.mlp.hidden.begin(), cfg.mlp.hidden.end());
  arch.layer_sizes.push_back(1);
  arch.output_activation = cfg.mlp.output_activation;
  Dataset data{x, Eigen::Map<const Matrix>(scaled.values.data(), static_cast<Eigen::Index>(scaled.values.size()), 1)};
  return PredictorModel(train_mlp(data, arch, cfg.mlp.train), scaled.scaling);
}

}  // namespace esp
