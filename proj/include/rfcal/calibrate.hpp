#pragma once

// Post-hoc calibration of binary forest outputs: Platt scaling, beta
// calibration, isotonic regression (PAV), Venn-Abers, parameterized
// probability adjustment, curtailment, and the Borda-rank calibrator.
// Every fitted map is nondecreasing in the raw score.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "rfcal/dataset.hpp"
#include "rfcal/forest.hpp"
#include "rfcal/metrics.hpp"

namespace rfcal {

struct CalibrationSample {
  double score = 0.0;  // forest probability of the positive class
  int label = 0;       // 0 or 1
};

namespace detail {

inline void check_samples(const std::vector<CalibrationSample>& samples,
                          bool need_both_labels) {
  if (samples.empty())
    throw std::invalid_argument("calibration: empty calibration set");
  bool has0 = false, has1 = false;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score))
      throw std::invalid_argument("calibration: non-finite score");
    if (s.label != 0 && s.label != 1)
      throw std::invalid_argument("calibration: labels must be 0 or 1");
    (s.label == 0 ? has0 : has1) = true;
  }
  if (need_both_labels && !(has0 && has1))
    throw std::invalid_argument("calibration: calibration set contains a single label");
}

inline std::vector<CalibrationSample> sorted_by_score(
    std::vector<CalibrationSample> samples) {
  std::stable_sort(samples.begin(), samples.end(),
                   [](const CalibrationSample& a, const CalibrationSample& b) {
                     return a.score < b.score;
                   });
  return samples;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Platt scaling: s -> 1 / (1 + exp(gamma * s + delta))
// ---------------------------------------------------------------------------

struct PlattModel {
  double gamma = 0.0;
  double delta = 0.0;
};

inline double apply_platt(const PlattModel& m, double score) {
  return 1.0 / (1.0 + std::exp(m.gamma * score + m.delta));
}

namespace detail {

// Damped Newton on calibration-set log-loss. When gamma_fixed is set, only
// delta is optimized (used to enforce the nondecreasing-map constraint).
inline PlattModel platt_newton(const std::vector<CalibrationSample>& samples,
                               std::optional<double> gamma_fixed) {
  double gamma = gamma_fixed.value_or(0.0);
  double delta = 0.0;
  const auto loss_at = [&](double g, double d) {
    double loss = 0.0;
    for (const auto& s : samples) {
      const double p =
          std::clamp(1.0 / (1.0 + std::exp(g * s.score + d)), 1e-12, 1.0 - 1e-12);
      loss += s.label == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return loss;
  };
  double loss = loss_at(gamma, delta);
  for (int it = 0; it < 200; ++it) {
    // p = sigmoid(-(gamma*s + delta)); gradient of the log-loss wrt (g, d).
    double g_g = 0.0, g_d = 0.0, h_gg = 0.0, h_gd = 0.0, h_dd = 0.0;
    for (const auto& s : samples) {
      const double p = 1.0 / (1.0 + std::exp(gamma * s.score + delta));
      const double resid = p - static_cast<double>(s.label);
      g_g += -resid * s.score;
      g_d += -resid;
      const double v = p * (1.0 - p);
      h_gg += v * s.score * s.score;
      h_gd += v * s.score;
      h_dd += v;
    }
    if (gamma_fixed) {
      g_g = 0.0;
      h_gg = 1.0;
      h_gd = 0.0;
    }
    if (std::max(std::abs(g_g), std::abs(g_d)) <= 1e-8) break;
    // Solve H * step = -grad with a ridge fallback for flat regions.
    double det = h_gg * h_dd - h_gd * h_gd;
    if (det <= 1e-12) {
      h_gg += 1e-6;
      h_dd += 1e-6;
      det = h_gg * h_dd - h_gd * h_gd;
    }
    double step_g = (-g_g * h_dd + g_d * h_gd) / det;
    double step_d = (-g_d * h_gg + g_g * h_gd) / det;
    double scale = 1.0;
    for (int half = 0; half < 40; ++half) {
      const double cand = loss_at(gamma + scale * step_g, delta + scale * step_d);
      if (cand < loss) {
        gamma += scale * step_g;
        delta += scale * step_d;
        loss = cand;
        break;
      }
      scale *= 0.5;
    }
    if (scale < 1e-12) break;
  }
  return {gamma, delta};
}

}  // namespace detail

// Fits (gamma, delta) by log-loss minimization. The induced map must be
// nondecreasing in the score, which pins gamma <= 0 in this
// parameterization; a positive unconstrained optimum (anti-correlated
// scores) is clamped to gamma = 0 and delta refit.
inline PlattModel fit_platt(const std::vector<CalibrationSample>& samples) {
  detail::check_samples(samples, true);
  PlattModel m = detail::platt_newton(samples, std::nullopt);
  if (m.gamma > 0.0) m = detail::platt_newton(samples, 0.0);
  return m;
}

// ---------------------------------------------------------------------------
// Beta calibration: s -> sigmoid(a ln s - b ln(1 - s) + c), a, b >= 0
// ---------------------------------------------------------------------------

struct BetaModel {
  double a = 1.0;
  double b = 1.0;
  double c = 0.0;
};

inline constexpr double kBetaScoreClamp = 1e-6;

inline double apply_beta(const BetaModel& m, double score) {
  const double s = std::clamp(score, kBetaScoreClamp, 1.0 - kBetaScoreClamp);
  const double z = m.a * std::log(s) - m.b * std::log(1.0 - s) + m.c;
  return 1.0 / (1.0 + std::exp(-z));
}

namespace detail {

// Logistic regression on up to two features plus intercept, damped Newton.
// active[0] / active[1] freeze a / b at zero when false.
inline BetaModel beta_logreg(const std::vector<CalibrationSample>& samples,
                             std::array<bool, 2> active) {
  std::vector<std::array<double, 2>> feats(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double s =
        std::clamp(samples[i].score, kBetaScoreClamp, 1.0 - kBetaScoreClamp);
    feats[i] = {std::log(s), -std::log(1.0 - s)};
  }
  std::array<double, 3> theta{0.0, 0.0, 0.0};  // a, b, c
  const auto loss_at = [&](const std::array<double, 3>& th) {
    double loss = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double z = th[0] * feats[i][0] + th[1] * feats[i][1] + th[2];
      const double p = std::clamp(1.0 / (1.0 + std::exp(-z)), 1e-12, 1.0 - 1e-12);
      loss += samples[i].label == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return loss;
  };
  double loss = loss_at(theta);
  for (int it = 0; it < 200; ++it) {
    std::array<double, 3> grad{0.0, 0.0, 0.0};
    std::array<std::array<double, 3>, 3> hess{};
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::array<double, 3> x{feats[i][0], feats[i][1], 1.0};
      const double z = theta[0] * x[0] + theta[1] * x[1] + theta[2];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double resid = p - static_cast<double>(samples[i].label);
      const double v = p * (1.0 - p);
      for (int r = 0; r < 3; ++r) {
        grad[static_cast<std::size_t>(r)] += resid * x[static_cast<std::size_t>(r)];
        for (int c = 0; c < 3; ++c)
          hess[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] +=
              v * x[static_cast<std::size_t>(r)] * x[static_cast<std::size_t>(c)];
      }
    }
    for (int r = 0; r < 2; ++r) {
      if (active[static_cast<std::size_t>(r)]) continue;
      grad[static_cast<std::size_t>(r)] = 0.0;
      for (int c = 0; c < 3; ++c) {
        hess[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = 0.0;
        hess[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] = 0.0;
      }
      hess[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)] = 1.0;
    }
    if (std::max({std::abs(grad[0]), std::abs(grad[1]), std::abs(grad[2])}) <= 1e-8)
      break;
    for (int r = 0; r < 3; ++r)
      hess[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)] += 1e-10;
    // Solve 3x3 system by Gaussian elimination.
    std::array<std::array<double, 4>, 3> aug{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c)
        aug[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
            hess[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      aug[static_cast<std::size_t>(r)][3] = -grad[static_cast<std::size_t>(r)];
    }
    for (int col = 0; col < 3; ++col) {
      int pivot = col;
      for (int r = col + 1; r < 3; ++r)
        if (std::abs(aug[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]) >
            std::abs(aug[static_cast<std::size_t>(pivot)][static_cast<std::size_t>(col)]))
          pivot = r;
      std::swap(aug[static_cast<std::size_t>(col)], aug[static_cast<std::size_t>(pivot)]);
      const double diag = aug[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
      if (std::abs(diag) < 1e-300) break;
      for (int r = 0; r < 3; ++r) {
        if (r == col) continue;
        const double f =
            aug[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)] / diag;
        for (int c = col; c < 4; ++c)
          aug[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] -=
              f * aug[static_cast<std::size_t>(col)][static_cast<std::size_t>(c)];
      }
    }
    std::array<double, 3> step{};
    for (int r = 0; r < 3; ++r) {
      const double diag = aug[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)];
      step[static_cast<std::size_t>(r)] =
          std::abs(diag) < 1e-300 ? 0.0 : aug[static_cast<std::size_t>(r)][3] / diag;
    }
    double scale = 1.0;
    bool moved = false;
    for (int half = 0; half < 40 && !moved; ++half) {
      std::array<double, 3> cand_theta{theta[0] + scale * step[0],
                                       theta[1] + scale * step[1],
                                       theta[2] + scale * step[2]};
      const double cand = loss_at(cand_theta);
      if (cand < loss) {
        theta = cand_theta;
        loss = cand;
        moved = true;
      }
      scale *= 0.5;
    }
    if (!moved) break;
  }
  return {theta[0], theta[1], theta[2]};
}

}  // namespace detail

// Reduces beta calibration to bivariate logistic regression on
// (ln s, -ln(1-s)); negative a or b are clamped to zero and the remaining
// parameters refit.
inline BetaModel fit_beta(const std::vector<CalibrationSample>& samples) {
  detail::check_samples(samples, true);
  std::array<bool, 2> active{true, true};
  BetaModel m = detail::beta_logreg(samples, active);
  for (int round = 0; round < 2; ++round) {
    bool changed = false;
    if (active[0] && m.a < 0.0) {
      active[0] = false;
      changed = true;
    }
    if (active[1] && m.b < 0.0) {
      active[1] = false;
      changed = true;
    }
    if (!changed) break;
    m = detail::beta_logreg(samples, active);
  }
  if (!active[0]) m.a = 0.0;
  if (!active[1]) m.b = 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Isotonic regression via pool-adjacent-violators
// ---------------------------------------------------------------------------

struct IsotonicModel {
  std::vector<double> breakpoints;  // lowest score of each pooled block
  std::vector<double> values;       // nondecreasing block values
};

// Weighted PAV. Samples with equal scores are merged into one block before
// pooling, so ties cannot straddle a step boundary.
inline IsotonicModel fit_isotonic(std::vector<CalibrationSample> samples) {
  detail::check_samples(samples, false);
  samples = detail::sorted_by_score(std::move(samples));

  struct Block {
    double lo;      // lowest score in the block
    double sum;     // sum of labels
    double weight;  // number of samples
    double value() const { return sum / weight; }
  };
  std::vector<Block> blocks;
  blocks.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < samples.size() && samples[j].score == samples[i].score) {
      sum += samples[j].label;
      ++j;
    }
    blocks.push_back({samples[i].score, sum, static_cast<double>(j - i)});
    i = j;
  }

  std::vector<Block> stack;
  stack.reserve(blocks.size());
  for (const Block& b : blocks) {
    stack.push_back(b);
    while (stack.size() > 1 &&
           stack[stack.size() - 2].value() >= stack.back().value()) {
      Block top = stack.back();
      stack.pop_back();
      stack.back().sum += top.sum;
      stack.back().weight += top.weight;
    }
  }

  IsotonicModel model;
  model.breakpoints.reserve(stack.size());
  model.values.reserve(stack.size());
  for (const Block& b : stack) {
    model.breakpoints.push_back(b.lo);
    model.values.push_back(b.value());
  }
  return model;
}

// Step-function query: the value of the last block whose start is <= score;
// queries below the first breakpoint clamp to the first value.
inline double apply_isotonic(const IsotonicModel& m, double score) {
  if (m.breakpoints.empty())
    throw std::invalid_argument("apply_isotonic: model is empty");
  const auto it =
      std::upper_bound(m.breakpoints.begin(), m.breakpoints.end(), score);
  if (it == m.breakpoints.begin()) return m.values.front();
  return m.values[static_cast<std::size_t>(it - m.breakpoints.begin()) - 1];
}

// ---------------------------------------------------------------------------
// Venn-Abers
// ---------------------------------------------------------------------------

struct VennAbersModel {
  std::vector<CalibrationSample> samples;  // kept sorted by score
};

struct VennAbersPrediction {
  double p0 = 0.0;
  double p1 = 0.0;
  double p_va = 0.0;
};

// Minimax point estimate; collapses to p when p0 = p1 = p.
inline double venn_abers_point(double p0, double p1) {
  const double mid = 0.5 * (p0 + p1);
  return mid + (p1 - p0) * (0.5 - mid);
}

inline VennAbersModel fit_venn_abers(std::vector<CalibrationSample> samples) {
  detail::check_samples(samples, false);
  return {detail::sorted_by_score(std::move(samples))};
}

// Isotonic regression is run twice on the calibration data augmented with
// the query labeled 0, then labeled 1; the point prediction is the minimax
// combination of both bounds.
inline VennAbersPrediction venn_abers_predict(const VennAbersModel& model,
                                              double score) {
  if (model.samples.empty())
    throw std::invalid_argument("venn_abers_predict: empty calibration set");
  std::vector<CalibrationSample> augmented;
  augmented.reserve(model.samples.size() + 1);
  const auto insert_pos = std::upper_bound(
      model.samples.begin(), model.samples.end(), score,
      [](double s, const CalibrationSample& c) { return s < c.score; });

  VennAbersPrediction out;
  for (int label : {0, 1}) {
    augmented.assign(model.samples.begin(), insert_pos);
    augmented.push_back({score, label});
    augmented.insert(augmented.end(), insert_pos, model.samples.end());
    const IsotonicModel iso = fit_isotonic(augmented);
    (label == 0 ? out.p0 : out.p1) = apply_isotonic(iso, score);
  }
  out.p_va = venn_abers_point(out.p0, out.p1);
  return out;
}

inline VennAbersPrediction venn_abers_predict(
    const std::vector<CalibrationSample>& samples, double score) {
  return venn_abers_predict(fit_venn_abers(samples), score);
}

// ---------------------------------------------------------------------------
// Parameterized probability adjustment
// ---------------------------------------------------------------------------

struct PPAModel {
  double r = 0.0;
};

// r * p0 + (1 - r) * p, where p0 spreads mass 1 uniformly over the argmax
// set of p. The argmax set, and hence the class prediction, is unchanged.
inline std::vector<double> apply_ppa(const PPAModel& m, std::span<const double> p) {
  const double max_v = *std::max_element(p.begin(), p.end());
  std::size_t ties = 0;
  for (double v : p)
    if (v == max_v) ++ties;
  std::vector<double> out(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double p0 = (p[j] == max_v) ? 1.0 / static_cast<double>(ties) : 0.0;
    out[j] = m.r * p0 + (1.0 - m.r) * p[j];
  }
  return out;
}

// Grid search over r in {0, 0.01, ..., 1} minimizing mean Brier score on
// the calibration predictions; ties keep the smallest r.
inline PPAModel fit_ppa(const ProbMatrix& predictions,
                        const std::vector<int>& labels) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw std::invalid_argument("fit_ppa: empty calibration set or size mismatch");
  if (predictions[0].size() != 2)
    throw std::invalid_argument("fit_ppa: calibrators require binary problems");
  double best_r = 0.0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int step = 0; step <= 100; ++step) {
    const PPAModel cand{step / 100.0};
    double loss = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
      loss += brier(apply_ppa(cand, predictions[i]), labels[i]);
    if (loss < best_loss) {
      best_loss = loss;
      best_r = cand.r;
    }
  }
  return {best_r};
}

// ---------------------------------------------------------------------------
// Curtailment
// ---------------------------------------------------------------------------

struct CurtailModel {
  std::size_t v = 1;  // minimum samples a node needs to answer a query
};

// Descend as usual but answer from the deepest node on the path that still
// holds at least v training samples (the root answers if even it is too
// small).
inline std::vector<double> predict_curtailed_tree(const DecisionTree& tree,
                                                  std::span<const double> x,
                                                  std::size_t v,
                                                  const PredictOptions& opts) {
  const TreeNode* node = &tree.nodes.front();
  const TreeNode* answer = node;
  while (!node->is_leaf()) {
    const double value = x[static_cast<std::size_t>(node->feature)];
    node = &tree.nodes[static_cast<std::size_t>(
        value <= node->threshold ? node->left : node->right)];
    if (node->n_samples >= v) answer = node;
  }
  return leaf_distribution(answer->class_counts, opts.laplace, opts.tree_kind);
}

inline std::vector<double> predict_curtailed(const RandomForestModel& model,
                                             std::size_t v,
                                             std::span<const double> x) {
  if (x.size() != model.n_features)
    throw std::invalid_argument("predict_curtailed: feature width mismatch");
  const PredictOptions opts = predict_options(model.config);
  std::vector<double> acc(static_cast<std::size_t>(model.n_classes), 0.0);
  for (const DecisionTree& tree : model.trees) {
    const auto p = predict_curtailed_tree(tree, x, v, opts);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += p[j];
  }
  for (double& val : acc) val /= static_cast<double>(model.trees.size());
  return acc;
}

// Candidate thresholds for the curtailment fit, capped at the root size.
inline std::vector<std::size_t> curtailment_candidates(std::size_t root_size) {
  std::vector<std::size_t> grid;
  for (std::size_t v : {std::size_t{1}, std::size_t{2}, std::size_t{5},
                        std::size_t{10}, std::size_t{20}, std::size_t{50},
                        std::size_t{100}, std::size_t{200}}) {
    if (v <= root_size) grid.push_back(v);
  }
  return grid;
}

inline CurtailModel fit_curtailment(const RandomForestModel& model,
                                    const Dataset& calibration) {
  if (calibration.n_rows == 0)
    throw std::invalid_argument("fit_curtailment: empty calibration set");
  if (model.n_classes != 2)
    throw std::invalid_argument("fit_curtailment: calibrators require binary problems");
  std::size_t root_size = 0;
  for (const DecisionTree& tree : model.trees)
    root_size = std::max(root_size, tree.nodes.front().n_samples);
  std::size_t best_v = 1;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t v : curtailment_candidates(root_size)) {
    double loss = 0.0;
    for (std::size_t i = 0; i < calibration.n_rows; ++i)
      loss += brier(predict_curtailed(model, v, calibration.row(i)),
                    calibration.labels[i]);
    if (loss < best_loss) {
      best_loss = loss;
      best_v = v;
    }
  }
  return {best_v};
}

// ---------------------------------------------------------------------------
// Rank calibrator (Borda aggregation + isotonic)
// ---------------------------------------------------------------------------

struct RankModel {
  RandomForestModel rank_forest;  // unpruned, Laplace-corrected
  // Per tree, the sorted positive-class probabilities of the calibration
  // rows; Borda scoring counts out-ranked calibration instances per tree.
  std::vector<std::vector<double>> calib_scores;
  IsotonicModel iso;
  // Calibration scores fitted as per-tree means instead of sums (used when
  // fitting on out-of-bag trees, where the tree count varies per row).
  bool normalized_scores = false;
};

// Rank forests deliberately diversify leaf probabilities: no depth bound,
// single-sample leaves, Laplace correction.
inline ForestConfig rank_forest_config(ForestConfig base) {
  base.max_depth.reset();
  base.min_samples_split = 2;
  base.min_samples_leaf = 1;
  base.laplace = true;
  base.tree_kind = TreeKind::pet;
  return base;
}

namespace detail {

inline double tree_positive_prob(const DecisionTree& tree,
                                 std::span<const double> x,
                                 const PredictOptions& opts) {
  return predict_tree(tree, x, opts)[1];
}

// Count of calibration scores strictly below p plus half the ties.
inline double borda_term(const std::vector<double>& sorted_scores, double p) {
  const auto lo = std::lower_bound(sorted_scores.begin(), sorted_scores.end(), p);
  const auto hi = std::upper_bound(sorted_scores.begin(), sorted_scores.end(), p);
  return static_cast<double>(lo - sorted_scores.begin()) +
         0.5 * static_cast<double>(hi - lo);
}

}  // namespace detail

inline double borda_score(const RandomForestModel& rank_forest,
                          const std::vector<std::vector<double>>& calib_scores,
                          std::span<const double> x) {
  const PredictOptions opts = predict_options(rank_forest.config);
  double score = 0.0;
  for (std::size_t t = 0; t < rank_forest.trees.size(); ++t) {
    score += detail::borda_term(
        calib_scores[t], detail::tree_positive_prob(rank_forest.trees[t], x, opts));
  }
  return score;
}

inline RankModel fit_rank(RandomForestModel rank_forest, const Dataset& calibration) {
  if (calibration.n_rows == 0)
    throw std::invalid_argument("fit_rank: empty calibration set");
  if (rank_forest.n_classes != 2)
    throw std::invalid_argument("fit_rank: calibrators require binary problems");
  const PredictOptions opts = predict_options(rank_forest.config);

  RankModel model;
  model.calib_scores.resize(rank_forest.trees.size());
  std::vector<std::vector<double>> raw(rank_forest.trees.size());
  for (std::size_t t = 0; t < rank_forest.trees.size(); ++t) {
    raw[t].resize(calibration.n_rows);
    for (std::size_t i = 0; i < calibration.n_rows; ++i) {
      raw[t][i] = detail::tree_positive_prob(rank_forest.trees[t],
                                             calibration.row(i), opts);
    }
    model.calib_scores[t] = raw[t];
    std::sort(model.calib_scores[t].begin(), model.calib_scores[t].end());
  }
  // A calibration row scores against all rows including itself, which adds
  // the half-credit tie term for its own probability.
  std::vector<CalibrationSample> borda_samples(calibration.n_rows);
  for (std::size_t i = 0; i < calibration.n_rows; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < rank_forest.trees.size(); ++t)
      s += detail::borda_term(model.calib_scores[t], raw[t][i]);
    borda_samples[i] = {s, calibration.labels[i]};
  }
  model.iso = fit_isotonic(borda_samples);
  model.rank_forest = std::move(rank_forest);
  return model;
}

inline double apply_rank(const RankModel& model, std::span<const double> x) {
  double s = borda_score(model.rank_forest, model.calib_scores, x);
  if (model.normalized_scores)
    s /= static_cast<double>(model.rank_forest.trees.size());
  return apply_isotonic(model.iso, s);
}

// ---------------------------------------------------------------------------
// Uniform wrapper over the seven fitted calibrators
// ---------------------------------------------------------------------------

using CalibratorVariant =
    std::variant<PlattModel, BetaModel, IsotonicModel, VennAbersModel, PPAModel,
                 CurtailModel, RankModel>;

struct FittedCalibrator {
  std::string method;  // platt | beta | iso | va | ppa | ct | rank
  CalibratorVariant model;
};

// Calibrated binary prediction for instance x, given the forest that
// produced the raw prediction. Score-based calibrators map the raw
// positive-class probability; curtailment and rank need the instance.
inline std::vector<double> apply_calibrator(const FittedCalibrator& calibrator,
                                            const RandomForestModel& forest,
                                            std::span<const double> x,
                                            const std::vector<double>& raw) {
  const auto from_score = [](double p) -> std::vector<double> {
    p = std::clamp(p, 0.0, 1.0);
    return {1.0 - p, p};
  };
  return std::visit(
      [&](const auto& m) -> std::vector<double> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PlattModel>)
          return from_score(apply_platt(m, raw[1]));
        else if constexpr (std::is_same_v<T, BetaModel>)
          return from_score(apply_beta(m, raw[1]));
        else if constexpr (std::is_same_v<T, IsotonicModel>)
          return from_score(apply_isotonic(m, raw[1]));
        else if constexpr (std::is_same_v<T, VennAbersModel>)
          return from_score(venn_abers_predict(m, raw[1]).p_va);
        else if constexpr (std::is_same_v<T, PPAModel>)
          return apply_ppa(m, raw);
        else if constexpr (std::is_same_v<T, CurtailModel>)
          return predict_curtailed(forest, m.v, x);
        else
          return from_score(apply_rank(m, x));
      },
      calibrator.model);
}

}  // namespace rfcal
