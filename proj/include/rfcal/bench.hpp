#pragma once

// Experimental protocols: repeated stratified cross-validation with a
// cyclic calibration fold, the RF_d / RF_opt / RF_large baselines,
// randomized hyperparameter search, out-of-bag calibration, the
// calibration-set-size sweep, and Laplace / OOB comparison studies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rfcal/calibrate.hpp"
#include "rfcal/dataset.hpp"
#include "rfcal/forest.hpp"
#include "rfcal/metrics.hpp"
#include "rfcal/parallel.hpp"
#include "rfcal/rng.hpp"
#include "rfcal/stats.hpp"

namespace rfcal {

enum class Method { rf_d, rf_opt, rf_large, platt, iso, beta, va, ct, ppa, rank };

inline const std::vector<std::pair<Method, std::string>>& method_names() {
  static const std::vector<std::pair<Method, std::string>> names{
      {Method::rf_d, "rf_d"},   {Method::rf_opt, "rf_opt"},
      {Method::rf_large, "rf_large"}, {Method::platt, "platt"},
      {Method::iso, "iso"},     {Method::beta, "beta"},
      {Method::va, "va"},       {Method::ct, "ct"},
      {Method::ppa, "ppa"},     {Method::rank, "rank"}};
  return names;
}

inline std::string method_name(Method m) {
  for (const auto& [method, name] : method_names())
    if (method == m) return name;
  return "?";
}

inline std::optional<Method> parse_method(const std::string& name) {
  for (const auto& [method, n] : method_names())
    if (n == name) return method;
  return std::nullopt;
}

enum class CalibSource { heldout_fold, oob };

struct ExperimentConfig {
  std::vector<std::string> dataset_ids;
  std::vector<Method> methods{Method::rf_d};
  int folds = 10;
  int repeats = 5;
  std::uint64_t seed = 0;
  CalibSource source = CalibSource::heldout_fold;
  int ece_bins = 20;
  int search_iterations = 50;
  bool research_per_fold = false;
  ForestConfig base_forest{};

  void validate() const {
    if (dataset_ids.empty())
      throw std::invalid_argument("experiment: no datasets");
    if (methods.empty()) throw std::invalid_argument("experiment: no methods");
    if (folds < 2) throw std::invalid_argument("experiment: folds must be >= 2");
    if (repeats < 1) throw std::invalid_argument("experiment: repeats must be >= 1");
    if (ece_bins < 1) throw std::invalid_argument("experiment: ece_bins must be >= 1");
    base_forest.validate();
  }
};

struct ResultRecord {
  std::string dataset;
  std::string method;
  int repeat = 0;
  int fold = 0;
  std::string metric;
  double value = 0.0;
};

struct FailedCell {
  std::string dataset;
  std::string method;
  int repeat = 0;
  int fold = 0;
  std::string reason;
};

struct ResultsTable {
  std::vector<ResultRecord> records;
  std::vector<FailedCell> failures;
};

// ---------------------------------------------------------------------------
// Stratified k-fold
// ---------------------------------------------------------------------------

// Disjoint folds covering all indices; per class, fold sizes differ by at
// most one. Throws when a class has fewer members than folds.
inline std::vector<std::vector<std::size_t>> stratified_kfold(
    const std::vector<int>& labels, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(i);
  for (const auto& [cls, members] : by_class) {
    if (members.size() < static_cast<std::size_t>(k))
      throw std::runtime_error("stratified_kfold: class " + std::to_string(cls) +
                               " has " + std::to_string(members.size()) +
                               " members, fewer than " + std::to_string(k) +
                               " folds");
  }
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  std::size_t class_index = 0;
  for (auto& [cls, members] : by_class) {
    Rng rng(derive_seed(seed, class_index));
    rng.shuffle(members);
    for (std::size_t i = 0; i < members.size(); ++i) {
      folds[(i + class_index) % static_cast<std::size_t>(k)].push_back(members[i]);
    }
    ++class_index;
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

// ---------------------------------------------------------------------------
// Randomized hyperparameter search over the forest tuning grid
// ---------------------------------------------------------------------------

struct SearchSpace {
  int n_trees = 100;
  std::pair<int, int> max_depth{2, 100};
  std::pair<int, int> min_samples_split{2, 10};
  std::pair<int, int> min_samples_leaf{1, 10};
  std::vector<Criterion> criteria{Criterion::gini, Criterion::entropy};
  std::vector<MaxFeatures::Mode> feature_modes{
      MaxFeatures::Mode::sqrt_mode, MaxFeatures::Mode::log2_mode,
      MaxFeatures::Mode::all};
  std::vector<ClassWeight> class_weights{
      ClassWeight::none, ClassWeight::balanced, ClassWeight::balanced_subsample};
  std::vector<bool> laplace_options{false, true};

  ForestConfig draw(Rng& rng) const {
    ForestConfig cfg;
    cfg.n_trees = n_trees;
    cfg.criterion = criteria[rng.uniform_int(criteria.size())];
    cfg.max_depth = max_depth.first +
                    static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
                        max_depth.second - max_depth.first + 1)));
    cfg.min_samples_split =
        min_samples_split.first +
        static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
            min_samples_split.second - min_samples_split.first + 1)));
    cfg.min_samples_leaf =
        min_samples_leaf.first +
        static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
            min_samples_leaf.second - min_samples_leaf.first + 1)));
    cfg.max_features.mode = feature_modes[rng.uniform_int(feature_modes.size())];
    cfg.class_weight = class_weights[rng.uniform_int(class_weights.size())];
    cfg.laplace = laplace_options[rng.uniform_int(laplace_options.size())];
    cfg.bootstrap = true;
    return cfg;
  }
};

enum class SearchObjective { brier, logloss, accuracy };

struct SearchResult {
  ForestConfig best;
  double best_score = 0.0;
  std::vector<std::pair<ForestConfig, double>> evaluated;
};

// Uniform draws from the space, each scored by mean 5-fold CV of the
// objective on the training split; ties keep the first drawn candidate.
inline SearchResult hyperparameter_search(
    const Dataset& train, const SearchSpace& space, int iterations,
    std::uint64_t seed, SearchObjective objective = SearchObjective::brier) {
  if (iterations < 1)
    throw std::invalid_argument("hyperparameter_search: iterations must be >= 1");
  const int cv = 5;
  const auto folds = stratified_kfold(train.labels, cv, derive_seed(seed, 1));
  Rng draw_rng(derive_seed(seed, 2));

  SearchResult result;
  result.best_score = std::numeric_limits<double>::infinity();
  for (int it = 0; it < iterations; ++it) {
    ForestConfig cfg = space.draw(draw_rng);
    double score = 0.0;
    for (int f = 0; f < cv; ++f) {
      std::vector<std::size_t> train_idx;
      for (int g = 0; g < cv; ++g) {
        if (g == f) continue;
        train_idx.insert(train_idx.end(), folds[static_cast<std::size_t>(g)].begin(),
                         folds[static_cast<std::size_t>(g)].end());
      }
      const Dataset sub_train = train.subset(train_idx);
      const Dataset sub_val = train.subset(folds[static_cast<std::size_t>(f)]);
      ForestConfig fold_cfg = cfg;
      fold_cfg.seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(it) * 8 +
                                            static_cast<std::uint64_t>(f));
      const auto model = train_forest(sub_train, fold_cfg);
      const auto preds = predict_forest(model, sub_val);
      double fold_score = 0.0;
      for (std::size_t i = 0; i < sub_val.n_rows; ++i) {
        switch (objective) {
          case SearchObjective::brier:
            fold_score += brier(preds[i], sub_val.labels[i]);
            break;
          case SearchObjective::logloss:
            fold_score += log_loss(preds[i], sub_val.labels[i]);
            break;
          case SearchObjective::accuracy:
            fold_score -= argmax_class(preds[i]) == sub_val.labels[i] ? 1.0 : 0.0;
            break;
        }
      }
      score += fold_score / static_cast<double>(sub_val.n_rows);
    }
    score /= static_cast<double>(cv);
    result.evaluated.emplace_back(cfg, score);
    if (score < result.best_score) {
      result.best_score = score;
      result.best = cfg;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Single-cell evaluation
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline ProbMatrix to_binary_matrix(const std::vector<double>& positive) {
  ProbMatrix out(positive.size());
  for (std::size_t i = 0; i < positive.size(); ++i)
    out[i] = {1.0 - positive[i], positive[i]};
  return out;
}

// Calibration samples for score-based calibrators: the forest's
// positive-class probability paired with the label. OOB source pulls the
// scores from out-of-bag predictions over the forest's own training rows;
// rows present in every bootstrap sample are skipped.
inline std::vector<CalibrationSample> calibration_scores(
    const RandomForestModel& forest, const Dataset& calib_or_train,
    CalibSource source) {
  std::vector<CalibrationSample> samples;
  if (source == CalibSource::heldout_fold) {
    samples.reserve(calib_or_train.n_rows);
    for (std::size_t i = 0; i < calib_or_train.n_rows; ++i) {
      samples.push_back({predict_forest(forest, calib_or_train.row(i))[1],
                         calib_or_train.labels[i]});
    }
    return samples;
  }
  const auto oob = oob_predict(forest, calib_or_train);
  for (std::size_t i = 0; i < calib_or_train.n_rows; ++i) {
    if (!oob[i]) continue;
    samples.push_back({(*oob[i])[1], calib_or_train.labels[i]});
  }
  return samples;
}

inline void calibration_vectors(const RandomForestModel& forest,
                                const Dataset& calib_or_train, CalibSource source,
                                ProbMatrix& preds, std::vector<int>& labels) {
  preds.clear();
  labels.clear();
  if (source == CalibSource::heldout_fold) {
    for (std::size_t i = 0; i < calib_or_train.n_rows; ++i) {
      preds.push_back(predict_forest(forest, calib_or_train.row(i)));
      labels.push_back(calib_or_train.labels[i]);
    }
    return;
  }
  const auto oob = oob_predict(forest, calib_or_train);
  for (std::size_t i = 0; i < calib_or_train.n_rows; ++i) {
    if (!oob[i]) continue;
    preds.push_back(*oob[i]);
    labels.push_back(calib_or_train.labels[i]);
  }
}

// Mean Brier of curtailed predictions; under the OOB source each row is
// answered only by its out-of-bag trees.
inline double curtailed_calibration_brier(const RandomForestModel& forest,
                                          const Dataset& data, std::size_t v,
                                          CalibSource source) {
  const PredictOptions opts = predict_options(forest.config);
  if (source == CalibSource::heldout_fold) {
    double loss = 0.0;
    for (std::size_t i = 0; i < data.n_rows; ++i)
      loss += brier(predict_curtailed(forest, v, data.row(i)), data.labels[i]);
    return loss / static_cast<double>(data.n_rows);
  }
  std::vector<std::vector<double>> acc(data.n_rows);
  std::vector<std::size_t> used(data.n_rows, 0);
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    for (std::size_t i : forest.oob_indices[t]) {
      const auto p = predict_curtailed_tree(forest.trees[t], data.row(i), v, opts);
      if (acc[i].empty()) acc[i].assign(p.size(), 0.0);
      for (std::size_t j = 0; j < p.size(); ++j) acc[i][j] += p[j];
      ++used[i];
    }
  }
  double loss = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    if (used[i] == 0) continue;
    for (double& x : acc[i]) x /= static_cast<double>(used[i]);
    loss += brier(acc[i], data.labels[i]);
    ++counted;
  }
  if (counted == 0)
    throw std::runtime_error("curtailment: no out-of-bag rows available");
  return loss / static_cast<double>(counted);
}

inline CurtailModel fit_curtailment_with_source(const RandomForestModel& forest,
                                                const Dataset& data,
                                                CalibSource source) {
  if (data.n_rows == 0)
    throw std::invalid_argument("fit_curtailment: empty calibration set");
  std::size_t root_size = 0;
  for (const auto& tree : forest.trees)
    root_size = std::max(root_size, tree.nodes.front().n_samples);
  std::size_t best_v = 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t v : curtailment_candidates(root_size)) {
    const double loss = curtailed_calibration_brier(forest, data, v, source);
    if (loss < best) {
      best = loss;
      best_v = v;
    }
  }
  return {best_v};
}

// Borda-score calibration samples. The held-out source sums the per-tree
// term over all trees; the OOB source averages it over the row's
// out-of-bag trees so every score lives on the same [0, M] scale (the
// model then normalizes query scores to match).
inline RankModel fit_rank_with_source(RandomForestModel rank_forest,
                                      const Dataset& data, CalibSource source) {
  if (source == CalibSource::heldout_fold)
    return fit_rank(std::move(rank_forest), data);

  const PredictOptions opts = predict_options(rank_forest.config);
  RankModel model;
  model.normalized_scores = true;
  model.calib_scores.resize(rank_forest.trees.size());
  std::vector<std::vector<double>> raw(rank_forest.trees.size());
  for (std::size_t t = 0; t < rank_forest.trees.size(); ++t) {
    raw[t].resize(data.n_rows);
    for (std::size_t i = 0; i < data.n_rows; ++i)
      raw[t][i] = predict_tree(rank_forest.trees[t], data.row(i), opts)[1];
    model.calib_scores[t] = raw[t];
    std::sort(model.calib_scores[t].begin(), model.calib_scores[t].end());
  }
  std::vector<CalibrationSample> borda_samples;
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    double s = 0.0;
    std::size_t used = 0;
    for (std::size_t t = 0; t < rank_forest.trees.size(); ++t) {
      if (!std::binary_search(rank_forest.oob_indices[t].begin(),
                              rank_forest.oob_indices[t].end(), i))
        continue;
      s += borda_term(model.calib_scores[t], raw[t][i]);
      ++used;
    }
    if (used == 0) continue;
    borda_samples.push_back({s / static_cast<double>(used), data.labels[i]});
  }
  if (borda_samples.empty())
    throw std::runtime_error("rank calibration: no out-of-bag rows available");
  model.iso = fit_isotonic(borda_samples);
  model.rank_forest = std::move(rank_forest);
  return model;
}

struct CellInput {
  std::string dataset_id;
  const Dataset* data = nullptr;
  int repeat = 0;
  int fold = 0;
  std::uint64_t cell_seed = 0;
  std::vector<std::size_t> train_idx, calib_idx, test_idx;
  std::optional<ForestConfig> opt_config;  // precomputed RF_opt parameters
};

inline void append_metrics(std::vector<ResultRecord>& records,
                           const CellInput& cell, const std::string& method,
                           const MetricReport& report, bool has_posteriors) {
  const auto add = [&](const std::string& metric, double value) {
    records.push_back({cell.dataset_id, method, cell.repeat, cell.fold, metric, value});
  };
  add("accuracy", report.accuracy);
  add("brier", report.brier);
  add("log_loss", report.log_loss);
  add("ece", report.ece);
  if (has_posteriors && report.tce) add("tce", *report.tce);
}

}  // namespace detail

// All metric names a cell emits for the given dataset.
inline std::vector<std::string> cell_metric_names(bool has_posteriors) {
  std::vector<std::string> names{"accuracy", "brier", "log_loss", "ece"};
  if (has_posteriors) names.push_back("tce");
  return names;
}

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

// Repeated stratified CV. Per repeat and test fold, the next fold
// (cyclically) is the calibration fold and the remainder trains the
// forest; with the OOB source the calibration fold is returned to
// training and calibrators fit on out-of-bag predictions. Baselines train
// on the identical rows. Method failures are recorded as failed cells and
// the run continues.
inline ResultsTable run_experiment(const ExperimentConfig& config,
                                   const std::map<std::string, Dataset>& datasets,
                                   int n_threads = 1) {
  config.validate();
  for (const auto& id : config.dataset_ids) {
    const auto it = datasets.find(id);
    if (it == datasets.end())
      throw std::invalid_argument("run_experiment: unknown dataset id " + id);
    it->second.validate();
    if (it->second.n_classes != 2)
      throw std::invalid_argument("run_experiment: dataset " + id +
                                  " is not binary");
  }

  const bool needs_opt =
      std::find(config.methods.begin(), config.methods.end(), Method::rf_opt) !=
      config.methods.end();

  struct RepeatPlan {
    std::string dataset_id;
    const Dataset* data;
    int repeat;
    std::uint64_t repeat_seed;
    std::vector<std::vector<std::size_t>> folds;
    std::optional<ForestConfig> opt_config;
  };
  std::vector<RepeatPlan> plans;
  for (const auto& id : config.dataset_ids) {
    const Dataset& data = datasets.at(id);
    for (int r = 0; r < config.repeats; ++r) {
      RepeatPlan plan;
      plan.dataset_id = id;
      plan.data = &data;
      plan.repeat = r;
      plan.repeat_seed = mix64(config.seed ^ detail::fnv1a(id) ^
                               mix64(static_cast<std::uint64_t>(r)));
      plan.folds = stratified_kfold(data.labels, config.folds, plan.repeat_seed);
      plans.push_back(std::move(plan));
    }
  }

  // RF_opt searches once per (dataset, repeat) on the training portion of
  // the first fold, unless a per-fold re-search was requested.
  if (needs_opt && !config.research_per_fold) {
    parallel_for(plans.size(), n_threads, [&](std::size_t p) {
      RepeatPlan& plan = plans[p];
      std::vector<std::size_t> train_idx;
      const int calib_fold = config.source == CalibSource::heldout_fold ? 1 : -1;
      for (int g = 0; g < config.folds; ++g) {
        if (g == 0 || g == calib_fold) continue;
        const auto& fold = plan.folds[static_cast<std::size_t>(g)];
        train_idx.insert(train_idx.end(), fold.begin(), fold.end());
      }
      if (config.source == CalibSource::oob) {
        const auto& fold = plan.folds[1];
        train_idx.insert(train_idx.end(), fold.begin(), fold.end());
      }
      std::sort(train_idx.begin(), train_idx.end());
      const Dataset train = plan.data->subset(train_idx);
      SearchSpace space;
      space.n_trees = config.base_forest.n_trees;
      plan.opt_config = hyperparameter_search(train, space, config.search_iterations,
                                              derive_seed(plan.repeat_seed, 777))
                            .best;
    });
  }

  std::vector<detail::CellInput> cells;
  for (const RepeatPlan& plan : plans) {
    for (int f = 0; f < config.folds; ++f) {
      detail::CellInput cell;
      cell.dataset_id = plan.dataset_id;
      cell.data = plan.data;
      cell.repeat = plan.repeat;
      cell.fold = f;
      cell.cell_seed = mix64(plan.repeat_seed ^ mix64(static_cast<std::uint64_t>(f)));
      cell.opt_config = plan.opt_config;
      const int calib_fold = (f + 1) % config.folds;
      cell.test_idx = plan.folds[static_cast<std::size_t>(f)];
      cell.calib_idx = plan.folds[static_cast<std::size_t>(calib_fold)];
      for (int g = 0; g < config.folds; ++g) {
        if (g == f || g == calib_fold) continue;
        const auto& fold = plan.folds[static_cast<std::size_t>(g)];
        cell.train_idx.insert(cell.train_idx.end(), fold.begin(), fold.end());
      }
      if (config.source == CalibSource::oob) {
        cell.train_idx.insert(cell.train_idx.end(), cell.calib_idx.begin(),
                              cell.calib_idx.end());
      }
      std::sort(cell.train_idx.begin(), cell.train_idx.end());
      // index-set audit: the test fold never leaks into fitting data
      for (std::size_t i : cell.test_idx) {
        if (std::binary_search(cell.train_idx.begin(), cell.train_idx.end(), i) ||
            std::binary_search(cell.calib_idx.begin(), cell.calib_idx.end(), i))
          throw std::logic_error("run_experiment: test row in fitting data");
      }
      cells.push_back(std::move(cell));
    }
  }

  struct CellOutput {
    std::vector<ResultRecord> records;
    std::vector<FailedCell> failures;
  };
  std::vector<CellOutput> outputs(cells.size());

  parallel_for(cells.size(), n_threads, [&](std::size_t c) {
    const detail::CellInput& cell = cells[c];
    CellOutput& out = outputs[c];
    const Dataset train = cell.data->subset(cell.train_idx);
    const Dataset calib = cell.data->subset(cell.calib_idx);
    const Dataset test = cell.data->subset(cell.test_idx);
    const bool has_q = cell.data->has_posteriors();
    const BinningSpec bins{config.ece_bins};

    const auto fail_all = [&](const std::string& reason) {
      for (Method m : config.methods)
        out.failures.push_back(
            {cell.dataset_id, method_name(m), cell.repeat, cell.fold, reason});
    };

    ForestConfig base_cfg = config.base_forest;
    base_cfg.seed = cell.cell_seed;
    RandomForestModel base;
    ProbMatrix base_test_preds;
    try {
      base = train_forest(train, base_cfg);
      base_test_preds = predict_forest(base, test);
    } catch (const std::exception& e) {
      fail_all(std::string("base forest: ") + e.what());
      return;
    }

    // Score-based calibrators share the base forest's calibration samples.
    const Dataset& calib_source_data =
        config.source == CalibSource::heldout_fold ? calib : train;
    std::vector<CalibrationSample> scores;
    ProbMatrix calib_preds;
    std::vector<int> calib_labels;

    const auto ensure_scores = [&] {
      if (scores.empty())
        scores = detail::calibration_scores(base, calib_source_data, config.source);
      if (scores.empty())
        throw std::runtime_error("no calibration scores available");
    };
    const auto ensure_vectors = [&] {
      if (calib_preds.empty())
        detail::calibration_vectors(base, calib_source_data, config.source,
                                    calib_preds, calib_labels);
      if (calib_preds.empty())
        throw std::runtime_error("no calibration predictions available");
    };

    ProbMatrix test_q;
    if (has_q) {
      test_q.resize(test.n_rows);
      for (std::size_t i = 0; i < test.n_rows; ++i)
        test_q[i].assign(test.posterior(i).begin(), test.posterior(i).end());
    }
    const auto eval_matrix = [&](const ProbMatrix& preds) {
      return evaluate(preds, test.labels, test_q, bins);
    };
    const auto eval_scored =
        [&](const std::function<double(double)>& map) -> MetricReport {
      ProbMatrix preds(test.n_rows);
      for (std::size_t i = 0; i < test.n_rows; ++i) {
        const double p = std::clamp(map(base_test_preds[i][1]), 0.0, 1.0);
        preds[i] = {1.0 - p, p};
      }
      return eval_matrix(preds);
    };

    for (Method m : config.methods) {
      try {
        MetricReport report;
        switch (m) {
          case Method::rf_d:
            report = eval_matrix(base_test_preds);
            break;
          case Method::rf_large: {
            ForestConfig cfg = base_cfg;
            cfg.n_trees = base_cfg.n_trees * 5;
            cfg.seed = derive_seed(cell.cell_seed, 1);
            const auto model = train_forest(train, cfg);
            report = eval_matrix(predict_forest(model, test));
            break;
          }
          case Method::rf_opt: {
            ForestConfig cfg;
            if (cell.opt_config) {
              cfg = *cell.opt_config;
            } else {
              SearchSpace space;
              space.n_trees = config.base_forest.n_trees;
              cfg = hyperparameter_search(train, space, config.search_iterations,
                                          derive_seed(cell.cell_seed, 777))
                        .best;
            }
            cfg.seed = derive_seed(cell.cell_seed, 2);
            const auto model = train_forest(train, cfg);
            report = eval_matrix(predict_forest(model, test));
            break;
          }
          case Method::platt: {
            ensure_scores();
            const auto platt = fit_platt(scores);
            report = eval_scored([&](double s) { return apply_platt(platt, s); });
            break;
          }
          case Method::iso: {
            ensure_scores();
            const auto iso = fit_isotonic(scores);
            report = eval_scored([&](double s) { return apply_isotonic(iso, s); });
            break;
          }
          case Method::beta: {
            ensure_scores();
            const auto beta = fit_beta(scores);
            report = eval_scored([&](double s) { return apply_beta(beta, s); });
            break;
          }
          case Method::va: {
            ensure_scores();
            const auto va = fit_venn_abers(scores);
            report = eval_scored(
                [&](double s) { return venn_abers_predict(va, s).p_va; });
            break;
          }
          case Method::ppa: {
            ensure_vectors();
            const auto ppa = fit_ppa(calib_preds, calib_labels);
            ProbMatrix preds(test.n_rows);
            for (std::size_t i = 0; i < test.n_rows; ++i)
              preds[i] = apply_ppa(ppa, base_test_preds[i]);
            report = eval_matrix(preds);
            break;
          }
          case Method::ct: {
            const auto fitted = detail::fit_curtailment_with_source(
                base, calib_source_data, config.source);
            ProbMatrix preds(test.n_rows);
            for (std::size_t i = 0; i < test.n_rows; ++i)
              preds[i] = predict_curtailed(base, fitted.v, test.row(i));
            report = eval_matrix(preds);
            break;
          }
          case Method::rank: {
            ForestConfig cfg = rank_forest_config(base_cfg);
            cfg.seed = derive_seed(cell.cell_seed, 3);
            auto rank_forest = train_forest(train, cfg);
            const auto fit = detail::fit_rank_with_source(
                std::move(rank_forest), calib_source_data, config.source);
            ProbMatrix preds(test.n_rows);
            for (std::size_t i = 0; i < test.n_rows; ++i) {
              const double p = std::clamp(apply_rank(fit, test.row(i)), 0.0, 1.0);
              preds[i] = {1.0 - p, p};
            }
            report = eval_matrix(preds);
            break;
          }
        }
        detail::append_metrics(out.records, cell, method_name(m), report, has_q);
      } catch (const std::exception& e) {
        out.failures.push_back(
            {cell.dataset_id, method_name(m), cell.repeat, cell.fold, e.what()});
      }
    }
  });

  ResultsTable table;
  for (const CellOutput& out : outputs) {
    table.records.insert(table.records.end(), out.records.begin(), out.records.end());
    table.failures.insert(table.failures.end(), out.failures.begin(),
                          out.failures.end());
  }
  return table;
}

// ---------------------------------------------------------------------------
// Standalone calibrator fitting (CLI path)
// ---------------------------------------------------------------------------

// Fits one calibration method against a trained forest. With the held-out
// source, `calib` supplies the samples; with the OOB source, `train` must
// be the forest's training data. The rank method additionally trains its
// own forest on `train`.
inline FittedCalibrator fit_calibrator(Method method,
                                       const RandomForestModel& forest,
                                       const Dataset* train, const Dataset* calib,
                                       CalibSource source, int n_threads = 1) {
  if (source == CalibSource::heldout_fold && calib == nullptr)
    throw std::invalid_argument("fit_calibrator: held-out source needs calibration data");
  if ((source == CalibSource::oob || method == Method::rank) && train == nullptr)
    throw std::invalid_argument("fit_calibrator: this fit needs the training data");
  const Dataset& fit_data = source == CalibSource::heldout_fold ? *calib : *train;
  if (forest.n_classes != 2)
    throw std::invalid_argument("fit_calibrator: calibrators require binary problems");

  FittedCalibrator out;
  out.method = method_name(method);
  switch (method) {
    case Method::platt:
      out.model = fit_platt(detail::calibration_scores(forest, fit_data, source));
      break;
    case Method::iso:
      out.model = fit_isotonic(detail::calibration_scores(forest, fit_data, source));
      break;
    case Method::beta:
      out.model = fit_beta(detail::calibration_scores(forest, fit_data, source));
      break;
    case Method::va:
      out.model =
          fit_venn_abers(detail::calibration_scores(forest, fit_data, source));
      break;
    case Method::ppa: {
      ProbMatrix preds;
      std::vector<int> labels;
      detail::calibration_vectors(forest, fit_data, source, preds, labels);
      out.model = fit_ppa(preds, labels);
      break;
    }
    case Method::ct:
      out.model = detail::fit_curtailment_with_source(forest, fit_data, source);
      break;
    case Method::rank: {
      ForestConfig cfg = rank_forest_config(forest.config);
      cfg.seed = derive_seed(forest.config.seed, 0xBA11);
      auto rank_forest = train_forest(*train, cfg, n_threads);
      out.model =
          detail::fit_rank_with_source(std::move(rank_forest), fit_data, source);
      break;
    }
    default:
      throw std::invalid_argument("fit_calibrator: " + method_name(method) +
                                  " is not a calibration method");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Table helpers
// ---------------------------------------------------------------------------

// Mean metric value per (dataset, method) over repeats and folds.
inline std::map<std::string, std::map<std::string, double>> mean_table(
    const ResultsTable& table, const std::string& metric) {
  std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> acc;
  for (const auto& rec : table.records) {
    if (rec.metric != metric) continue;
    auto& slot = acc[rec.dataset][rec.method];
    slot.first += rec.value;
    ++slot.second;
  }
  std::map<std::string, std::map<std::string, double>> out;
  for (const auto& [dataset, methods] : acc)
    for (const auto& [method, sum_count] : methods)
      out[dataset][method] = sum_count.first / static_cast<double>(sum_count.second);
  return out;
}

inline std::vector<std::string> table_methods(const ResultsTable& table) {
  std::set<std::string> seen;
  for (const auto& rec : table.records) seen.insert(rec.method);
  return {seen.begin(), seen.end()};
}

inline std::vector<std::string> table_datasets(const ResultsTable& table) {
  std::set<std::string> seen;
  for (const auto& rec : table.records) seen.insert(rec.dataset);
  return {seen.begin(), seen.end()};
}

// Per-dataset mean values ordered as (datasets x methods), the input shape
// for average_ranks / friedman_nemenyi. Missing cells are an error.
inline std::vector<std::vector<double>> values_matrix(
    const ResultsTable& table, const std::string& metric,
    const std::vector<std::string>& datasets,
    const std::vector<std::string>& methods) {
  const auto means = mean_table(table, metric);
  std::vector<std::vector<double>> out;
  for (const auto& dataset : datasets) {
    const auto it = means.find(dataset);
    if (it == means.end())
      throw std::invalid_argument("values_matrix: no records for dataset " + dataset);
    std::vector<double> row;
    for (const auto& method : methods) {
      const auto jt = it->second.find(method);
      if (jt == it->second.end())
        throw std::invalid_argument("values_matrix: missing cell " + dataset + "/" +
                                    method);
      row.push_back(jt->second);
    }
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison studies (Laplace toggle, OOB vs held-out)
// ---------------------------------------------------------------------------

struct ComparisonRow {
  std::string method;
  std::string metric;
  double mean_a = 0.0;  // first variant
  double mean_b = 0.0;  // second variant
  TTestResult test;
  bool degenerate = false;  // identical values, no test possible
};

namespace detail {

inline std::vector<ComparisonRow> compare_tables(
    const ResultsTable& a, const ResultsTable& b,
    const std::vector<std::string>& methods, const std::vector<std::string>& metrics,
    double alpha) {
  std::vector<ComparisonRow> rows;
  for (const auto& metric : metrics) {
    const auto mean_a = mean_table(a, metric);
    const auto mean_b = mean_table(b, metric);
    for (const auto& method : methods) {
      std::vector<double> va, vb;
      for (const auto& [dataset, per_method] : mean_a) {
        const auto ia = per_method.find(method);
        const auto bt = mean_b.find(dataset);
        if (ia == per_method.end() || bt == mean_b.end()) continue;
        const auto ib = bt->second.find(method);
        if (ib == bt->second.end()) continue;
        va.push_back(ia->second);
        vb.push_back(ib->second);
      }
      ComparisonRow row;
      row.method = method;
      row.metric = metric;
      for (double v : va) row.mean_a += v;
      for (double v : vb) row.mean_b += v;
      if (!va.empty()) {
        row.mean_a /= static_cast<double>(va.size());
        row.mean_b /= static_cast<double>(vb.size());
      }
      try {
        row.test = paired_ttest(va, vb, alpha);
      } catch (const std::invalid_argument&) {
        row.degenerate = true;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace detail

// Runs the experiment twice, toggling the Laplace correction applied when
// leaves emit probabilities, and paired-t-tests each (method, metric)
// across datasets.
inline std::vector<ComparisonRow> compare_laplace(
    const ExperimentConfig& config, const std::map<std::string, Dataset>& datasets,
    int n_threads = 1, double alpha = 0.05) {
  ExperimentConfig off = config;
  off.base_forest.laplace = false;
  ExperimentConfig on = config;
  on.base_forest.laplace = true;
  const ResultsTable table_off = run_experiment(off, datasets, n_threads);
  const ResultsTable table_on = run_experiment(on, datasets, n_threads);
  std::vector<std::string> methods;
  for (Method m : config.methods) methods.push_back(method_name(m));
  const bool has_q = datasets.at(config.dataset_ids.front()).has_posteriors();
  return detail::compare_tables(table_off, table_on, methods,
                                cell_metric_names(has_q), alpha);
}

// Held-out fold vs out-of-bag calibration for the six applicable
// calibrators (the uncalibrated baselines and curtailment are excluded).
inline std::vector<ComparisonRow> compare_oob(
    const ExperimentConfig& config, const std::map<std::string, Dataset>& datasets,
    int n_threads = 1, double alpha = 0.05) {
  static const std::vector<Method> applicable{Method::platt, Method::iso,
                                              Method::beta, Method::va,
                                              Method::ppa,  Method::rank};
  ExperimentConfig heldout = config;
  heldout.methods.clear();
  for (Method m : config.methods)
    if (std::find(applicable.begin(), applicable.end(), m) != applicable.end())
      heldout.methods.push_back(m);
  if (heldout.methods.empty())
    throw std::invalid_argument("compare_oob: no applicable calibration methods");
  heldout.source = CalibSource::heldout_fold;
  ExperimentConfig oob = heldout;
  oob.source = CalibSource::oob;
  const ResultsTable table_a = run_experiment(heldout, datasets, n_threads);
  const ResultsTable table_b = run_experiment(oob, datasets, n_threads);
  std::vector<std::string> methods;
  for (Method m : heldout.methods) methods.push_back(method_name(m));
  const bool has_q = datasets.at(config.dataset_ids.front()).has_posteriors();
  return detail::compare_tables(table_a, table_b, methods,
                                cell_metric_names(has_q), alpha);
}

// ---------------------------------------------------------------------------
// Calibration-set-size sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  std::string sweep;
  double x = 0.0;
  std::string method;
  int repeat = 0;
  std::string metric;
  double value = 0.0;
};

inline std::size_t fraction_rows(double fraction, std::size_t pool_size) {
  const auto n = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(pool_size)));
  return std::clamp<std::size_t>(n, 1, pool_size);
}

// One repeat of the size sweep: the forest and rank forest train once on
// `train`; every calibrator refits on the first ceil(f * |pool|) rows of a
// seed-shuffled pool and is scored on `test`. Fractions share the shuffled
// order, so smaller fractions are strict prefixes of larger ones.
inline std::vector<SweepRow> calibration_size_sweep(
    const Dataset& train, const Dataset& calib_pool, const Dataset& test,
    const std::vector<double>& fractions, const std::vector<Method>& methods,
    const ForestConfig& base_config, std::uint64_t seed, int repeat_index = 0,
    int ece_bins = 20) {
  if (calib_pool.n_rows == 0)
    throw std::invalid_argument("calibration_size_sweep: empty pool");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0))
      throw std::invalid_argument("calibration_size_sweep: fractions must be in (0,1]");

  ForestConfig cfg = base_config;
  cfg.seed = derive_seed(seed, 1);
  const RandomForestModel forest = train_forest(train, cfg);
  const ProbMatrix test_preds = predict_forest(forest, test);

  std::optional<RandomForestModel> rank_forest;
  if (std::find(methods.begin(), methods.end(), Method::rank) != methods.end()) {
    ForestConfig rank_cfg = rank_forest_config(base_config);
    rank_cfg.seed = derive_seed(seed, 3);
    rank_forest = train_forest(train, rank_cfg);
  }

  std::vector<std::size_t> order(calib_pool.n_rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(seed, 2));
  shuffle_rng.shuffle(order);

  ProbMatrix test_q;
  if (test.has_posteriors()) {
    test_q.resize(test.n_rows);
    for (std::size_t i = 0; i < test.n_rows; ++i)
      test_q[i].assign(test.posterior(i).begin(), test.posterior(i).end());
  }
  const BinningSpec bins{ece_bins};

  std::vector<SweepRow> rows;
  const auto emit = [&](double f, Method m, const ProbMatrix& preds) {
    const MetricReport report = evaluate(preds, test.labels, test_q, bins);
    const std::string name = method_name(m);
    const auto add = [&](const std::string& metric, double value) {
      rows.push_back({"calibsize", f, name, repeat_index, metric, value});
    };
    add("accuracy", report.accuracy);
    add("brier", report.brier);
    add("ece", report.ece);
    if (report.tce) add("tce", *report.tce);
    if (report.bin_entropy) add("bin_entropy", *report.bin_entropy);
  };

  for (double f : fractions) {
    const std::size_t take = fraction_rows(f, calib_pool.n_rows);
    const Dataset calib = calib_pool.subset(
        std::span<const std::size_t>(order.data(), take));
    std::vector<CalibrationSample> scores;
    ProbMatrix calib_preds;
    std::vector<int> calib_labels;
    for (std::size_t i = 0; i < calib.n_rows; ++i) {
      const auto p = predict_forest(forest, calib.row(i));
      scores.push_back({p[1], calib.labels[i]});
      calib_preds.push_back(p);
      calib_labels.push_back(calib.labels[i]);
    }

    for (Method m : methods) {
      ProbMatrix preds(test.n_rows);
      const auto from_map = [&](const std::function<double(double)>& map) {
        for (std::size_t i = 0; i < test.n_rows; ++i) {
          const double p = std::clamp(map(test_preds[i][1]), 0.0, 1.0);
          preds[i] = {1.0 - p, p};
        }
      };
      switch (m) {
        case Method::rf_d:
          preds = test_preds;
          break;
        case Method::platt: {
          const auto fit = fit_platt(scores);
          from_map([&](double s) { return apply_platt(fit, s); });
          break;
        }
        case Method::iso: {
          const auto fit = fit_isotonic(scores);
          from_map([&](double s) { return apply_isotonic(fit, s); });
          break;
        }
        case Method::beta: {
          const auto fit = fit_beta(scores);
          from_map([&](double s) { return apply_beta(fit, s); });
          break;
        }
        case Method::va: {
          const auto fit = fit_venn_abers(scores);
          from_map([&](double s) { return venn_abers_predict(fit, s).p_va; });
          break;
        }
        case Method::ppa: {
          const auto fit = fit_ppa(calib_preds, calib_labels);
          for (std::size_t i = 0; i < test.n_rows; ++i)
            preds[i] = apply_ppa(fit, test_preds[i]);
          break;
        }
        case Method::ct: {
          const auto fit = fit_curtailment(forest, calib);
          for (std::size_t i = 0; i < test.n_rows; ++i)
            preds[i] = predict_curtailed(forest, fit.v, test.row(i));
          break;
        }
        case Method::rank: {
          auto fit = fit_rank(*rank_forest, calib);
          for (std::size_t i = 0; i < test.n_rows; ++i) {
            const double p = std::clamp(apply_rank(fit, test.row(i)), 0.0, 1.0);
            preds[i] = {1.0 - p, p};
          }
          break;
        }
        default:
          throw std::invalid_argument(
              "calibration_size_sweep: unsupported method " + method_name(m));
      }
      emit(f, m, preds);
    }
  }
  return rows;
}

}  // namespace rfcal
