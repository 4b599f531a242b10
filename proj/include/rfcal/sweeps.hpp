#pragma once

// Synthetic-data sweep protocols: forest depth, ensemble size, class
// overlap, and calibration-set size. Each emits tidy rows keyed by the
// swept variable; repeats use derived seeds and fresh test samples drawn
// from the same generating distributions.

#include <cstdint>
#include <vector>

#include "rfcal/bench.hpp"
#include "rfcal/forest.hpp"
#include "rfcal/metrics.hpp"
#include "rfcal/parallel.hpp"
#include "rfcal/synthgen.hpp"

namespace rfcal {

struct GridSweepSpec {
  int dim = 2;
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  int repeats = 5;
  std::uint64_t seed = 0;
  int ece_bins = 20;
  ForestConfig base{};  // defaults: 100 trees, unbounded depth
};

namespace detail {

inline ProbMatrix posteriors_of(const Dataset& data) {
  ProbMatrix q(data.n_rows);
  for (std::size_t i = 0; i < data.n_rows; ++i)
    q[i].assign(data.posterior(i).begin(), data.posterior(i).end());
  return q;
}

inline void emit_report(std::vector<SweepRow>& rows, const std::string& sweep,
                        double x, const std::string& method, int repeat,
                        const MetricReport& report) {
  const auto add = [&](const std::string& metric, double value) {
    rows.push_back({sweep, x, method, repeat, metric, value});
  };
  add("accuracy", report.accuracy);
  add("brier", report.brier);
  add("log_loss", report.log_loss);
  add("ece", report.ece);
  if (report.tce) add("tce", *report.tce);
}

struct RepeatData {
  Dataset train;
  Dataset test;
};

inline RepeatData two_gaussian_repeat(int dim, std::size_t n_train,
                                      std::size_t n_test, std::uint64_t seed,
                                      int repeat) {
  const auto sample = sample_two_gaussians(
      dim, n_train, derive_seed(seed, static_cast<std::uint64_t>(repeat)));
  RepeatData out;
  out.train = sample.data;
  out.test = sample_from_specs(
      sample.spec0, sample.spec1, n_test,
      derive_seed(seed, 5000 + static_cast<std::uint64_t>(repeat)));
  return out;
}

}  // namespace detail

// Mean TCE (and companions) of the default forest as max_depth varies.
inline std::vector<SweepRow> depth_sweep(const GridSweepSpec& spec,
                                         const std::vector<int>& depths,
                                         int n_threads = 1) {
  std::vector<std::vector<SweepRow>> partial(
      static_cast<std::size_t>(spec.repeats));
  parallel_for(partial.size(), n_threads, [&](std::size_t r) {
    const auto data = detail::two_gaussian_repeat(
        spec.dim, spec.n_train, spec.n_test, spec.seed, static_cast<int>(r));
    const ProbMatrix test_q = detail::posteriors_of(data.test);
    const std::uint64_t repeat_seed = derive_seed(spec.seed, 3000 + r);
    for (int depth : depths) {
      ForestConfig cfg = spec.base;
      cfg.max_depth = depth;
      cfg.seed = derive_seed(repeat_seed, static_cast<std::uint64_t>(depth));
      const auto model = train_forest(data.train, cfg);
      const auto report = evaluate(predict_forest(model, data.test),
                                   data.test.labels, test_q, {spec.ece_bins});
      detail::emit_report(partial[r], "depth", depth, "rf_d",
                          static_cast<int>(r), report);
    }
  });
  std::vector<SweepRow> rows;
  for (auto& p : partial) rows.insert(rows.end(), p.begin(), p.end());
  return rows;
}

// Same protocol sweeping the ensemble size at unbounded depth.
inline std::vector<SweepRow> tree_count_sweep(const GridSweepSpec& spec,
                                              const std::vector<int>& tree_counts,
                                              int n_threads = 1) {
  std::vector<std::vector<SweepRow>> partial(
      static_cast<std::size_t>(spec.repeats));
  parallel_for(partial.size(), n_threads, [&](std::size_t r) {
    const auto data = detail::two_gaussian_repeat(
        spec.dim, spec.n_train, spec.n_test, spec.seed, static_cast<int>(r));
    const ProbMatrix test_q = detail::posteriors_of(data.test);
    const std::uint64_t repeat_seed = derive_seed(spec.seed, 4000 + r);
    for (int t : tree_counts) {
      ForestConfig cfg = spec.base;
      cfg.n_trees = t;
      cfg.max_depth.reset();
      cfg.seed = derive_seed(repeat_seed, static_cast<std::uint64_t>(t));
      const auto model = train_forest(data.train, cfg);
      const auto report = evaluate(predict_forest(model, data.test),
                                   data.test.labels, test_q, {spec.ece_bins});
      detail::emit_report(partial[r], "trees", t, "rf_d", static_cast<int>(r),
                          report);
    }
  });
  std::vector<SweepRow> rows;
  for (auto& p : partial) rows.insert(rows.end(), p.begin(), p.end());
  return rows;
}

struct OverlapProtocolSpec {
  OverlapSweepSpec sweep{};
  int repeats = 5;
  std::vector<Method> methods{Method::rf_d};
  ForestConfig base{};
  int ece_bins = 20;
  int search_iterations = 50;
};

// Per sweep step: half the sample trains the forest, a quarter calibrates,
// a quarter evaluates. Every row also carries the step's Bhattacharyya
// distance for downstream plotting.
inline std::vector<SweepRow> overlap_protocol(const OverlapProtocolSpec& spec,
                                              int n_threads = 1) {
  std::vector<std::vector<SweepRow>> partial(
      static_cast<std::size_t>(spec.repeats));
  parallel_for(partial.size(), n_threads, [&](std::size_t r) {
    OverlapSweepSpec sweep = spec.sweep;
    sweep.seed = derive_seed(spec.sweep.seed, r);
    const auto steps = overlap_sweep(sweep);
    for (std::size_t s = 0; s < steps.size(); ++s) {
      const Dataset& data = steps[s].data;
      const auto folds = stratified_kfold(data.labels, 4, derive_seed(sweep.seed, s));
      std::vector<std::size_t> train_idx(folds[2]);
      train_idx.insert(train_idx.end(), folds[3].begin(), folds[3].end());
      std::sort(train_idx.begin(), train_idx.end());
      const Dataset test = data.subset(folds[0]);
      const Dataset calib = data.subset(folds[1]);
      const Dataset train = data.subset(train_idx);

      const ProbMatrix test_q = detail::posteriors_of(test);

      ForestConfig base_cfg = spec.base;
      base_cfg.seed = derive_seed(sweep.seed, 100 + s);
      const auto forest = train_forest(train, base_cfg);
      const auto raw = predict_forest(forest, test);

      for (Method m : spec.methods) {
        ProbMatrix preds = raw;
        switch (m) {
          case Method::rf_d:
            break;
          case Method::rf_large: {
            ForestConfig cfg = base_cfg;
            cfg.n_trees = base_cfg.n_trees * 5;
            cfg.seed = derive_seed(base_cfg.seed, 1);
            preds = predict_forest(train_forest(train, cfg), test);
            break;
          }
          case Method::rf_opt: {
            SearchSpace space;
            space.n_trees = spec.base.n_trees;
            auto cfg = hyperparameter_search(train, space, spec.search_iterations,
                                             derive_seed(base_cfg.seed, 777))
                           .best;
            cfg.seed = derive_seed(base_cfg.seed, 2);
            preds = predict_forest(train_forest(train, cfg), test);
            break;
          }
          default: {
            const auto calibrator = fit_calibrator(m, forest, &train, &calib,
                                                   CalibSource::heldout_fold);
            for (std::size_t i = 0; i < test.n_rows; ++i)
              preds[i] = apply_calibrator(calibrator, forest, test.row(i), raw[i]);
            break;
          }
        }
        const auto report = evaluate(preds, test.labels, test_q, {spec.ece_bins});
        detail::emit_report(partial[r], "overlap", static_cast<double>(s),
                            method_name(m), static_cast<int>(r), report);
        partial[r].push_back({"overlap", static_cast<double>(s), method_name(m),
                              static_cast<int>(r), "bd", steps[s].bd});
      }
    }
  });
  std::vector<SweepRow> rows;
  for (auto& p : partial) rows.insert(rows.end(), p.begin(), p.end());
  return rows;
}

struct CalibSizeProtocolSpec {
  int dim = 2;
  std::size_t n_train = 1000;  // pool matches this size
  std::size_t n_test = 1000;
  int clusters_per_class = 4;
  int repeats = 5;
  std::uint64_t seed = 0;
  std::vector<double> fractions{0.02, 0.05, 0.1, 0.2, 0.3, 0.4,
                                0.5,  0.6,  0.7, 0.8, 0.9, 1.0};
  std::vector<Method> methods{Method::rf_d, Method::platt, Method::iso,
                              Method::beta, Method::va,    Method::ct,
                              Method::ppa,  Method::rank};
  ForestConfig base{};
  int ece_bins = 20;
};

// Mixture-of-Gaussians data: per repeat, fresh mixtures generate training
// data, a calibration pool of equal size and a test sample.
inline std::vector<SweepRow> calibsize_protocol(const CalibSizeProtocolSpec& spec,
                                                int n_threads = 1) {
  std::vector<std::vector<SweepRow>> partial(
      static_cast<std::size_t>(spec.repeats));
  parallel_for(partial.size(), n_threads, [&](std::size_t r) {
    const std::uint64_t repeat_seed = derive_seed(spec.seed, r);
    const auto mixture =
        sample_mixture(spec.dim, spec.n_train * 2, spec.clusters_per_class,
                       repeat_seed);
    // first half trains, second half is the calibration pool
    std::vector<std::size_t> train_idx, pool_idx;
    for (std::size_t i = 0; i < mixture.data.n_rows; ++i)
      ((i % 2 == 0) ? train_idx : pool_idx).push_back(i);
    const Dataset train = mixture.data.subset(train_idx);
    const Dataset pool = mixture.data.subset(pool_idx);
    const Dataset test =
        sample_from_mixtures(mixture.mixture0, mixture.mixture1, spec.n_test,
                             derive_seed(repeat_seed, 91));
    partial[r] = calibration_size_sweep(train, pool, test, spec.fractions,
                                        spec.methods, spec.base,
                                        derive_seed(repeat_seed, 17),
                                        static_cast<int>(r), spec.ece_bins);
  });
  std::vector<SweepRow> rows;
  for (auto& p : partial) rows.insert(rows.end(), p.begin(), p.end());
  return rows;
}

}  // namespace rfcal
