#pragma once

// CART regression trees and bootstrap-aggregated forests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "esp/error.hpp"
#include "esp/parallel.hpp"
#include "esp/random.hpp"

namespace esp {

struct ForestConfig {
  std::size_t n_estimators = 100;
  bool bootstrap = true;
  std::size_t min_samples_leaf = 1;
  std::optional<std::size_t> max_depth;  // unlimited when empty
  double feature_subsample = 1.0;        // fraction of features tried per split
  std::uint64_t seed = 0;

  void validate() const {
    if (n_estimators == 0) throw ConfigError("n_estimators must be at least 1");
    if (min_samples_leaf == 0) throw ConfigError("min_samples_leaf must be at least 1");
    if (max_depth && *max_depth == 0) throw ConfigError("max_depth must be positive");
    if (!(feature_subsample > 0.0 && feature_subsample <= 1.0))
      throw ConfigError("feature_subsample must lie in (0, 1]");
  }
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;         // mean target of the training rows in the node

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  template <class Row>
  double predict(const Row& x) const {
    if (nodes_.empty()) throw StateError("tree is not fitted");
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const TreeNode& n = nodes_[i];
      i = static_cast<std::size_t>(x[n.feature] <= n.threshold ? n.left : n.right);
    }
    return nodes_[i].value;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t depth() const {
    if (nodes_.empty()) return 0;
    std::vector<std::size_t> d(nodes_.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      best = std::max(best, d[i]);
      if (!nodes_[i].is_leaf()) {
        d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
        d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
      }
    }
    return best;
  }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

namespace detail {

// Presorted CART growth: every feature keeps the node's samples in ascending
// order of that feature, and a split partitions all lists stably, so no
// sorting happens below the root.
class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, std::span<const double> y, const ForestConfig& cfg, Rng& rng)
      : x_(x), y_(y), cfg_(cfg), rng_(rng) {}

  RegressionTree build(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    const std::size_t m = rows_.size();
    const auto features = static_cast<std::size_t>(x_.cols());
    targets_.resize(m);
    for (std::size_t i = 0; i < m; ++i) targets_[i] = y_[rows_[i]];
    sorted_.assign(features, std::vector<std::uint32_t>(m));
    for (std::size_t f = 0; f < features; ++f) {
      auto& order = sorted_[f];
      std::iota(order.begin(), order.end(), std::uint32_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return value(a, f) < value(b, f); });
    }
    goes_left_.assign(m, 0);
    buffer_.resize(m);
    feature_order_.resize(features);
    std::iota(feature_order_.begin(), feature_order_.end(), std::size_t{0});
    tried_ = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg_.feature_subsample * static_cast<double>(features) - 1e-9)));

    struct Pending {
      std::size_t begin, end, depth, node;
    };
    std::vector<Pending> stack;
    nodes_.clear();
    nodes_.emplace_back();
    stack.push_back({0, m, 0, 0});
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      double sum = 0.0;
      for (std::size_t i = p.begin; i < p.end; ++i) sum += targets_[sorted_[0][i]];
      nodes_[p.node].value = sum / static_cast<double>(p.end - p.begin);
      const auto split = best_split(p.begin, p.end, p.depth, sum);
      if (!split) continue;

      const std::size_t mid = p.begin + split->left_count;
      const auto& by_split = sorted_[split->feature];
      for (std::size_t i = p.begin; i < p.end; ++i) goes_left_[by_split[i]] = i < mid;
      for (std::size_t f = 0; f < sorted_.size(); ++f) {
        if (f == split->feature) continue;
        auto& order = sorted_[f];
        std::size_t l = p.begin, r = 0;
        for (std::size_t i = p.begin; i < p.end; ++i) {
          const std::uint32_t id = order[i];
          if (goes_left_[id])
            order[l++] = id;
          else
            buffer_[r++] = id;
        }
        std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(r),
                  order.begin() + static_cast<std::ptrdiff_t>(l));
      }

      const auto left = static_cast<std::int32_t>(nodes_.size());
      nodes_.emplace_back();
      nodes_.emplace_back();
      nodes_[p.node].feature = static_cast<std::int32_t>(split->feature);
      nodes_[p.node].threshold = split->threshold;
      nodes_[p.node].left = left;
      nodes_[p.node].right = left + 1;
      stack.push_back({mid, p.end, p.depth + 1, static_cast<std::size_t>(left + 1)});
      stack.push_back({p.begin, mid, p.depth + 1, static_cast<std::size_t>(left)});
    }
    return RegressionTree(std::move(nodes_));
  }

 private:
  struct Split {
    std::size_t feature;
    double threshold;
    std::size_t left_count;
  };

  double value(std::uint32_t id, std::size_t feature) const {
    return x_(static_cast<Eigen::Index>(rows_[id]), static_cast<Eigen::Index>(feature));
  }

  std::optional<Split> best_split(std::size_t begin, std::size_t end, std::size_t depth, double total) {
    const std::size_t count = end - begin;
    if (count < 2 * cfg_.min_samples_leaf) return std::nullopt;
    if (cfg_.max_depth && depth >= *cfg_.max_depth) return std::nullopt;
    const auto& any = sorted_[0];
    const double first = targets_[any[begin]];
    bool pure = true;
    for (std::size_t i = begin + 1; i < end && pure; ++i) pure = targets_[any[i]] == first;
    if (pure) return std::nullopt;

    if (tried_ < feature_order_.size()) {
      for (std::size_t k = 0; k < tried_; ++k)
        std::swap(feature_order_[k], feature_order_[k + rng_.below(feature_order_.size() - k)]);
      std::sort(feature_order_.begin(), feature_order_.begin() + static_cast<std::ptrdiff_t>(tried_));
    }

    std::optional<Split> best;
    double best_score = -1.0;
    const std::size_t leaf = cfg_.min_samples_leaf;
    for (std::size_t k = 0; k < tried_; ++k) {
      const std::size_t f = feature_order_[k];
      const auto& order = sorted_[f];
      double left_sum = 0.0;
      double hi = value(order[begin], f);
      for (std::size_t i = 0; i + 1 < count; ++i) {
        left_sum += targets_[order[begin + i]];
        const double lo = hi;
        hi = value(order[begin + i + 1], f);
        if (!(lo < hi)) continue;
        const std::size_t nl = i + 1;
        const std::size_t nr = count - nl;
        if (nl < leaf || nr < leaf) continue;
        // Maximising this is equivalent to minimising the children's summed
        // squared error.
        const double right_sum = total - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(nl) +
                             right_sum * right_sum / static_cast<double>(nr);
        if (!best || score > best_score) {
          double t = lo + (hi - lo) / 2.0;
          if (!(t < hi)) t = lo;
          best = Split{f, t, nl};
          best_score = score;
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& x_;
  std::span<const double> y_;
  const ForestConfig& cfg_;
  Rng& rng_;
  std::vector<std::size_t> rows_, feature_order_;
  std::vector<double> targets_;
  std::vector<std::vector<std::uint32_t>> sorted_;
  std::vector<char> goes_left_;
  std::vector<std::uint32_t> buffer_;
  std::vector<TreeNode> nodes_;
  std::size_t tried_ = 0;
};

}  // namespace detail

/// Grows one tree on the given rows (duplicates allowed).
inline RegressionTree fit_tree(const Eigen::MatrixXd& x, std::span<const double> y, std::vector<std::size_t> rows,
                               const ForestConfig& cfg, Rng& rng) {
  if (rows.empty()) throw ShapeError("cannot fit a tree on zero rows");
  detail::TreeBuilder builder(x, y, cfg, rng);
  return builder.build(std::move(rows));
}

class RandomForest {
 public:
  RandomForest() = default;
  explicit RandomForest(std::vector<RegressionTree> trees, std::size_t input_dim)
      : trees_(std::move(trees)), input_dim_(input_dim) {}

  /// Fits cfg.n_estimators trees; tree i uses its own seeded stream, so the
  /// result does not depend on `threads`.
  static RandomForest fit(const Eigen::MatrixXd& x, std::span<const double> y, const ForestConfig& cfg,
                          std::size_t threads = 1) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(x.rows());
    if (n == 0) throw ShapeError("empty training set");
    if (y.size() != n) throw ShapeError("target count does not match input rows");
    std::vector<RegressionTree> trees(cfg.n_estimators);
    parallel_for(cfg.n_estimators, threads, [&](std::size_t t) {
      Rng rng(derive_seed(cfg.seed, {0x7472u, t}));
      std::vector<std::size_t> rows(n);
      if (cfg.bootstrap) {
        for (auto& r : rows) r = rng.below(n);
      } else {
        std::iota(rows.begin(), rows.end(), std::size_t{0});
      }
      trees[t] = fit_tree(x, y, std::move(rows), cfg, rng);
    });
    return RandomForest(std::move(trees), static_cast<std::size_t>(x.cols()));
  }

  template <class Row>
  double predict(const Row& x) const {
    if (trees_.empty()) throw StateError("forest is not fitted");
    double sum = 0.0;
    for (const auto& t : trees_) sum += t.predict(x);
    return sum / static_cast<double>(trees_.size());
  }

  /// One prediction per row.
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim_) throw ShapeError("forest input width mismatch");
    Eigen::VectorXd out(x.rows());
    std::vector<double> row(input_dim_);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < input_dim_; ++j) row[j] = x(i, static_cast<Eigen::Index>(j));
      out(i) = predict(row);
    }
    return out;
  }

  const std::vector<RegressionTree>& trees() const { return trees_; }
  std::size_t input_dim() const { return input_dim_; }

  friend bool operator==(const RandomForest&, const RandomForest&) = default;

 private:
  std::vector<RegressionTree> trees_;
  std::size_t input_dim_ = 0;
};

}  // namespace esp
