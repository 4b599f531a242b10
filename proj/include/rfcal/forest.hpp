#pragma once

// From-scratch decision trees and random forests for probability
// estimation. Trees keep per-node sample counts and weighted class counts,
// which downstream calibrators (curtailment in particular) rely on, and the
// forest records the exact bootstrap / out-of-bag index sets per tree.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rfcal/dataset.hpp"
#include "rfcal/metrics.hpp"
#include "rfcal/parallel.hpp"
#include "rfcal/rng.hpp"

namespace rfcal {

enum class Criterion { gini, entropy };
enum class TreeKind { pet, ct };
enum class ClassWeight { none, balanced, balanced_subsample };

struct MaxFeatures {
  enum class Mode { sqrt_mode, log2_mode, all, fixed };
  Mode mode = Mode::sqrt_mode;
  int fixed_k = 0;

  std::size_t resolve(std::size_t n_features) const {
    double k = 0.0;
    switch (mode) {
      case Mode::sqrt_mode: k = std::ceil(std::sqrt(static_cast<double>(n_features))); break;
      case Mode::log2_mode: k = std::ceil(std::log2(static_cast<double>(n_features))); break;
      case Mode::all: k = static_cast<double>(n_features); break;
      case Mode::fixed: k = static_cast<double>(fixed_k); break;
    }
    const auto count = static_cast<std::size_t>(std::max(1.0, k));
    return std::min(count, n_features);
  }
  bool operator==(const MaxFeatures&) const = default;
};

struct ForestConfig {
  int n_trees = 100;
  Criterion criterion = Criterion::gini;
  std::optional<int> max_depth;  // no bound when absent
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  MaxFeatures max_features{};
  ClassWeight class_weight = ClassWeight::none;
  bool bootstrap = true;
  bool laplace = false;
  TreeKind tree_kind = TreeKind::pet;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees < 1) throw std::invalid_argument("forest config: n_trees must be >= 1");
    if (max_depth && *max_depth < 1)
      throw std::invalid_argument("forest config: max_depth must be >= 1 when set");
    if (min_samples_split < 2)
      throw std::invalid_argument("forest config: min_samples_split must be >= 2");
    if (min_samples_leaf < 1)
      throw std::invalid_argument("forest config: min_samples_leaf must be >= 1");
    if (max_features.mode == MaxFeatures::Mode::fixed && max_features.fixed_k < 1)
      throw std::invalid_argument("forest config: fixed max_features must be >= 1");
  }
  bool operator==(const ForestConfig&) const = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> class_counts;  // weighted
  std::size_t n_samples = 0;         // raw training rows reaching this node

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  bool operator==(const DecisionTree& other) const {
    if (nodes.size() != other.nodes.size()) return false;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const TreeNode& a = nodes[i];
      const TreeNode& b = other.nodes[i];
      if (a.feature != b.feature || a.threshold != b.threshold ||
          a.left != b.left || a.right != b.right ||
          a.class_counts != b.class_counts || a.n_samples != b.n_samples)
        return false;
    }
    return true;
  }
};

struct RandomForestModel {
  std::vector<DecisionTree> trees;
  std::vector<std::vector<std::size_t>> bootstrap_indices;
  std::vector<std::vector<std::size_t>> oob_indices;
  ForestConfig config;
  int n_classes = 0;
  std::size_t n_features = 0;
  std::size_t n_train_rows = 0;

  bool operator==(const RandomForestModel&) const = default;
};

// Draws n indices uniformly with replacement; the out-of-bag set is the
// sorted complement of the distinct drawn indices.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
bootstrap_sample(std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("bootstrap_sample: n must be >= 1");
  std::vector<std::size_t> sample(n);
  std::vector<bool> seen(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    sample[i] = static_cast<std::size_t>(rng.uniform_int(n));
    seen[sample[i]] = true;
  }
  std::vector<std::size_t> oob;
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i]) oob.push_back(i);
  return {std::move(sample), std::move(oob)};
}

inline double impurity(std::span<const double> class_counts, Criterion criterion) {
  double total = 0.0;
  for (double c : class_counts) {
    if (c < 0.0) throw std::invalid_argument("impurity: negative count");
    total += c;
  }
  if (total <= 0.0) throw std::invalid_argument("impurity: all counts are zero");
  double value = 0.0;
  if (criterion == Criterion::gini) {
    for (double c : class_counts) {
      const double f = c / total;
      value += f * f;
    }
    return 1.0 - value;
  }
  for (double c : class_counts) {
    if (c <= 0.0) continue;
    const double f = c / total;
    value -= f * std::log2(f);
  }
  return value;
}

// Relative-frequency leaf distribution. Laplace adds a pseudo-count of 1
// per class; classifier trees collapse to a one-hot on the argmax (ties to
// the lowest class index).
inline std::vector<double> leaf_distribution(std::span<const double> class_counts,
                                             bool laplace, TreeKind kind) {
  const std::size_t k = class_counts.size();
  double total = 0.0;
  for (double c : class_counts) total += c;
  if (total <= 0.0) throw std::invalid_argument("leaf_distribution: empty leaf");
  std::vector<double> p(k);
  const double add = laplace ? 1.0 : 0.0;
  const double denom = total + add * static_cast<double>(k);
  for (std::size_t j = 0; j < k; ++j) p[j] = (class_counts[j] + add) / denom;
  if (kind == TreeKind::ct) {
    const int best = argmax_class(p);
    std::fill(p.begin(), p.end(), 0.0);
    p[static_cast<std::size_t>(best)] = 1.0;
  }
  return p;
}

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

namespace detail {

// Best split over the given feature subset: candidate thresholds are
// midpoints between consecutive distinct sorted values; the winner
// maximizes the weighted impurity decrease with both children holding at
// least min_samples_leaf rows. Ties keep the first candidate visited,
// i.e. lowest feature index, then lowest threshold (the subset is scanned
// in ascending order).
inline std::optional<SplitCandidate> find_best_split(
    const Dataset& data, std::span<const std::size_t> rows,
    std::span<const double> weights, std::span<const std::size_t> feature_subset,
    Criterion criterion, int min_samples_leaf,
    std::span<const double> node_counts) {
  if (rows.size() < 2) return std::nullopt;
  const std::size_t k = static_cast<std::size_t>(data.n_classes);
  const double parent_impurity = impurity(node_counts, criterion);
  double total_weight = 0.0;
  for (double c : node_counts) total_weight += c;

  std::optional<SplitCandidate> best;
  std::vector<std::pair<double, std::size_t>> order;  // (value, row)
  std::vector<double> left_counts(k), right_counts(k);

  std::vector<std::size_t> sorted_subset(feature_subset.begin(), feature_subset.end());
  std::sort(sorted_subset.begin(), sorted_subset.end());

  for (std::size_t f : sorted_subset) {
    order.clear();
    order.reserve(rows.size());
    for (std::size_t r : rows) order.emplace_back(data.row(r)[f], r);
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (order.front().first == order.back().first) continue;  // constant column

    std::fill(left_counts.begin(), left_counts.end(), 0.0);
    double left_weight = 0.0;

    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const auto [value, r] = order[i];
      const double w = weights[r];
      const auto label = static_cast<std::size_t>(data.labels[r]);
      left_counts[label] += w;
      left_weight += w;
      if (value == order[i + 1].first) continue;  // not a boundary
      const std::size_t n_left = i + 1;
      const std::size_t n_right = order.size() - n_left;
      if (n_left < static_cast<std::size_t>(min_samples_leaf) ||
          n_right < static_cast<std::size_t>(min_samples_leaf))
        continue;
      for (std::size_t j = 0; j < k; ++j)
        right_counts[j] = std::max(0.0, node_counts[j] - left_counts[j]);
      const double right_weight = total_weight - left_weight;
      if (left_weight <= 0.0 || right_weight <= 0.0) continue;
      const double child_impurity =
          (left_weight * impurity(left_counts, criterion) +
           right_weight * impurity(right_counts, criterion)) /
          total_weight;
      const double gain = parent_impurity - child_impurity;
      if (gain > 0.0 && (!best || gain > best->gain)) {
        // midpoint between adjacent doubles can round up to the right
        // value; fall back to the left value so routing by <= threshold
        // reproduces exactly the partition that was scored
        double threshold = 0.5 * (value + order[i + 1].first);
        if (threshold >= order[i + 1].first) threshold = value;
        best = SplitCandidate{static_cast<int>(f), threshold, gain};
      }
    }
  }
  return best;
}

struct TreeBuilder {
  const Dataset& data;
  const ForestConfig& config;
  std::span<const double> weights;
  Rng& rng;
  DecisionTree tree;
  std::vector<std::size_t> feature_pool;

  TreeBuilder(const Dataset& d, const ForestConfig& c, std::span<const double> w, Rng& r)
      : data(d), config(c), weights(w), rng(r) {
    feature_pool.resize(data.n_features);
    std::iota(feature_pool.begin(), feature_pool.end(), std::size_t{0});
  }

  // Fresh feature subset for one node, drawn without replacement.
  std::span<const std::size_t> draw_features() {
    const std::size_t m = config.max_features.resolve(data.n_features);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(
                                    rng.uniform_int(feature_pool.size() - i));
      std::swap(feature_pool[i], feature_pool[j]);
    }
    return {feature_pool.data(), m};
  }

  int build(std::vector<std::size_t>& rows, int depth) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const std::size_t k = static_cast<std::size_t>(data.n_classes);
    std::vector<double> counts(k, 0.0);
    bool pure = true;
    const int first_label = data.labels[rows.front()];
    for (std::size_t r : rows) {
      counts[static_cast<std::size_t>(data.labels[r])] += weights[r];
      if (data.labels[r] != first_label) pure = false;
    }
    tree.nodes[static_cast<std::size_t>(index)].class_counts = counts;
    tree.nodes[static_cast<std::size_t>(index)].n_samples = rows.size();

    const bool depth_capped = config.max_depth && depth >= *config.max_depth;
    if (pure || depth_capped ||
        rows.size() < static_cast<std::size_t>(config.min_samples_split))
      return index;

    const auto split = find_best_split(data, rows, weights, draw_features(),
                                       config.criterion, config.min_samples_leaf,
                                       counts);
    if (!split) return index;

    std::vector<std::size_t> left_rows, right_rows;
    left_rows.reserve(rows.size());
    right_rows.reserve(rows.size());
    for (std::size_t r : rows) {
      (data.row(r)[static_cast<std::size_t>(split->feature)] <= split->threshold
           ? left_rows
           : right_rows)
          .push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    const int left = build(left_rows, depth + 1);
    const int right = build(right_rows, depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = split->feature;
    node.threshold = split->threshold;
    node.left = left;
    node.right = right;
    return index;
  }
};

inline std::vector<double> class_weights_for(const std::vector<int>& labels,
                                             std::span<const std::size_t> rows,
                                             int n_classes) {
  std::vector<double> counts(static_cast<std::size_t>(n_classes), 0.0);
  for (std::size_t r : rows) counts[static_cast<std::size_t>(labels[r])] += 1.0;
  std::vector<double> w(static_cast<std::size_t>(n_classes), 0.0);
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (counts[j] > 0.0) w[j] = n / (static_cast<double>(n_classes) * counts[j]);
  }
  return w;
}

}  // namespace detail

// Trains the full ensemble. Tree i consumes only the stream derived from
// config.seed and i, so results do not depend on the thread count.
inline RandomForestModel train_forest(const Dataset& data, const ForestConfig& config,
                                      int n_threads = 1) {
  config.validate();
  data.validate();
  if (data.n_rows == 0) throw std::invalid_argument("train_forest: empty dataset");

  RandomForestModel model;
  model.config = config;
  model.n_classes = data.n_classes;
  model.n_features = data.n_features;
  model.n_train_rows = data.n_rows;
  model.trees.resize(static_cast<std::size_t>(config.n_trees));
  model.bootstrap_indices.resize(model.trees.size());
  model.oob_indices.resize(model.trees.size());

  std::vector<double> full_class_weights;
  if (config.class_weight == ClassWeight::balanced) {
    std::vector<std::size_t> all(data.n_rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    full_class_weights = detail::class_weights_for(data.labels, all, data.n_classes);
  }

  parallel_for(model.trees.size(), n_threads, [&](std::size_t t) {
    Rng rng(derive_seed(config.seed, t));
    std::vector<std::size_t> rows;
    if (config.bootstrap) {
      auto [sample, oob] = bootstrap_sample(data.n_rows, rng);
      rows = std::move(sample);
      model.bootstrap_indices[t] = rows;
      model.oob_indices[t] = std::move(oob);
    } else {
      rows.resize(data.n_rows);
      std::iota(rows.begin(), rows.end(), std::size_t{0});
      model.bootstrap_indices[t] = rows;
      model.oob_indices[t] = {};
    }

    std::vector<double> row_weights(data.n_rows, 1.0);
    if (config.class_weight != ClassWeight::none) {
      const std::vector<double> cw =
          (config.class_weight == ClassWeight::balanced)
              ? full_class_weights
              : detail::class_weights_for(data.labels, rows, data.n_classes);
      for (std::size_t i = 0; i < data.n_rows; ++i)
        row_weights[i] = cw[static_cast<std::size_t>(data.labels[i])];
    }

    detail::TreeBuilder builder(data, config, row_weights, rng);
    builder.build(rows, 0);
    model.trees[t] = std::move(builder.tree);
  });
  return model;
}

struct PredictOptions {
  bool laplace = false;
  TreeKind tree_kind = TreeKind::pet;
};

inline PredictOptions predict_options(const ForestConfig& config) {
  return {config.laplace, config.tree_kind};
}

inline const TreeNode& route_to_leaf(const DecisionTree& tree,
                                     std::span<const double> x) {
  const TreeNode* node = &tree.nodes.front();
  while (!node->is_leaf()) {
    const double v = x[static_cast<std::size_t>(node->feature)];
    node = &tree.nodes[static_cast<std::size_t>(v <= node->threshold ? node->left
                                                                     : node->right)];
  }
  return *node;
}

inline std::vector<double> predict_tree(const DecisionTree& tree,
                                        std::span<const double> x,
                                        const PredictOptions& opts) {
  return leaf_distribution(route_to_leaf(tree, x).class_counts, opts.laplace,
                           opts.tree_kind);
}

inline std::vector<double> predict_forest(const RandomForestModel& model,
                                          std::span<const double> x,
                                          const PredictOptions& opts) {
  if (x.size() != model.n_features)
    throw std::invalid_argument("predict_forest: feature width mismatch");
  std::vector<double> acc(static_cast<std::size_t>(model.n_classes), 0.0);
  for (const DecisionTree& tree : model.trees) {
    const auto p = predict_tree(tree, x, opts);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += p[j];
  }
  const double t = static_cast<double>(model.trees.size());
  for (double& v : acc) v /= t;
  return acc;
}

inline std::vector<double> predict_forest(const RandomForestModel& model,
                                          std::span<const double> x) {
  return predict_forest(model, x, predict_options(model.config));
}

inline ProbMatrix predict_forest(const RandomForestModel& model,
                                 const Dataset& data,
                                 const PredictOptions& opts) {
  ProbMatrix out(data.n_rows);
  for (std::size_t i = 0; i < data.n_rows; ++i)
    out[i] = predict_forest(model, data.row(i), opts);
  return out;
}

inline ProbMatrix predict_forest(const RandomForestModel& model, const Dataset& data) {
  return predict_forest(model, data, predict_options(model.config));
}

// Out-of-bag prediction: row i averages only trees whose bootstrap sample
// missed i. Rows that every tree sampled get no prediction.
inline std::vector<std::optional<std::vector<double>>> oob_predict(
    const RandomForestModel& model, const Dataset& data) {
  if (!model.config.bootstrap)
    throw std::runtime_error("oob_predict: forest was trained without bootstrap");
  if (data.n_rows != model.n_train_rows)
    throw std::invalid_argument("oob_predict: dataset is not the training data");
  const PredictOptions opts = predict_options(model.config);
  std::vector<std::vector<double>> acc(data.n_rows);
  std::vector<std::size_t> used(data.n_rows, 0);
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    for (std::size_t i : model.oob_indices[t]) {
      const auto p = predict_tree(model.trees[t], data.row(i), opts);
      if (acc[i].empty()) acc[i].assign(p.size(), 0.0);
      for (std::size_t j = 0; j < p.size(); ++j) acc[i][j] += p[j];
      ++used[i];
    }
  }
  std::vector<std::optional<std::vector<double>>> out(data.n_rows);
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    if (used[i] == 0) continue;
    for (double& v : acc[i]) v /= static_cast<double>(used[i]);
    out[i] = std::move(acc[i]);
  }
  return out;
}

// Number of distinct prediction vectors the forest produces on the given
// rows, comparing entries after rounding to 12 decimals.
inline std::size_t unique_prediction_groups(const RandomForestModel& model,
                                            const Dataset& data) {
  std::map<std::vector<long long>, std::size_t> groups;
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    ++groups[rounded_key(predict_forest(model, data.row(i)))];
  }
  return groups.size();
}

}  // namespace rfcal
