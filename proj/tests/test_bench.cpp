#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "rfcal/bench.hpp"
#include "rfcal/synthgen.hpp"

using namespace rfcal;

namespace {

std::map<std::string, Dataset> two_small_datasets() {
  std::map<std::string, Dataset> out;
  out["gauss_a"] = sample_two_gaussians(2, 120, 101).data;
  out["gauss_b"] = sample_two_gaussians(3, 150, 202).data;
  return out;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.dataset_ids = {"gauss_a", "gauss_b"};
  cfg.methods = {Method::rf_d, Method::platt, Method::ppa};
  cfg.folds = 3;
  cfg.repeats = 2;
  cfg.seed = 9;
  cfg.base_forest.n_trees = 15;
  return cfg;
}

}  // namespace

TEST_CASE("stratified kfold") {
  SUBCASE("balanced 5+5 into 5 folds") {
    std::vector<int> labels(10, 0);
    for (int i = 5; i < 10; ++i) labels[static_cast<std::size_t>(i)] = 1;
    const auto folds = stratified_kfold(labels, 5, 7);
    for (const auto& fold : folds) {
      CHECK(fold.size() == 2);
      int per_class[2] = {0, 0};
      for (std::size_t i : fold) ++per_class[labels[i]];
      CHECK(per_class[0] == 1);
      CHECK(per_class[1] == 1);
    }
  }
  SUBCASE("folds partition the indices") {
    const auto sample = sample_two_gaussians(2, 103, 5);
    const auto folds = stratified_kfold(sample.data.labels, 4, 11);
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& fold : folds) {
      total += fold.size();
      seen.insert(fold.begin(), fold.end());
    }
    CHECK(total == sample.data.n_rows);
    CHECK(seen.size() == sample.data.n_rows);
  }
  SUBCASE("per-class fold counts differ by at most one") {
    const auto sample = sample_two_gaussians(2, 157, 6);
    const auto folds = stratified_kfold(sample.data.labels, 10, 3);
    for (int cls : {0, 1}) {
      std::size_t lo = 1000, hi = 0;
      for (const auto& fold : folds) {
        std::size_t count = 0;
        for (std::size_t i : fold) count += sample.data.labels[i] == cls;
        lo = std::min(lo, count);
        hi = std::max(hi, count);
      }
      CHECK(hi - lo <= 1);
    }
  }
  SUBCASE("rare class raises an error naming the class") {
    std::vector<int> labels(20, 0);
    labels[19] = 1;
    try {
      stratified_kfold(labels, 10, 0);
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("class 1") != std::string::npos);
    }
  }
  SUBCASE("deterministic under the seed") {
    std::vector<int> labels(40);
    for (std::size_t i = 0; i < 40; ++i) labels[i] = i % 2;
    CHECK(stratified_kfold(labels, 4, 5) == stratified_kfold(labels, 4, 5));
  }
}

TEST_CASE("hyperparameter search") {
  const auto sample = sample_two_gaussians(2, 150, 303);
  SearchSpace space;
  space.n_trees = 10;
  SUBCASE("single iteration returns the single draw") {
    const auto result = hyperparameter_search(sample.data, space, 1, 4);
    CHECK(result.evaluated.size() == 1);
    CHECK(result.best == result.evaluated[0].first);
  }
  SUBCASE("winner attains the minimum over evaluated candidates") {
    const auto result = hyperparameter_search(sample.data, space, 6, 4);
    for (const auto& [cfg, score] : result.evaluated)
      CHECK(result.best_score <= score);
  }
  SUBCASE("reproducible under the seed") {
    const auto a = hyperparameter_search(sample.data, space, 4, 12);
    const auto b = hyperparameter_search(sample.data, space, 4, 12);
    CHECK(a.best == b.best);
    CHECK(a.best_score == b.best_score);
  }
  SUBCASE("draws stay inside the space") {
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
      const auto cfg = space.draw(rng);
      CHECK(cfg.n_trees == 10);
      CHECK(*cfg.max_depth >= 2);
      CHECK(*cfg.max_depth <= 100);
      CHECK(cfg.min_samples_split >= 2);
      CHECK(cfg.min_samples_split <= 10);
      CHECK(cfg.min_samples_leaf >= 1);
      CHECK(cfg.min_samples_leaf <= 10);
      CHECK(cfg.bootstrap);
    }
  }
}

TEST_CASE("run_experiment produces a complete deterministic grid") {
  const auto datasets = two_small_datasets();
  const auto cfg = small_config();
  const auto table = run_experiment(cfg, datasets, 1);

  CHECK(table.failures.empty());
  // both synthetic datasets carry posteriors: 5 metrics per cell
  const std::size_t expected =
      2 * cfg.methods.size() * static_cast<std::size_t>(cfg.repeats) *
      static_cast<std::size_t>(cfg.folds) * cell_metric_names(true).size();
  CHECK(table.records.size() == expected);
  for (const auto& rec : table.records) CHECK(std::isfinite(rec.value));

  SUBCASE("thread count does not change the table") {
    const auto threaded = run_experiment(cfg, datasets, 4);
    REQUIRE(threaded.records.size() == table.records.size());
    for (std::size_t i = 0; i < table.records.size(); ++i) {
      CHECK(table.records[i].value == threaded.records[i].value);
      CHECK(table.records[i].method == threaded.records[i].method);
    }
  }
  SUBCASE("ppa accuracy equals the base forest accuracy exactly") {
    std::map<std::string, double> rf_acc, ppa_acc;
    for (const auto& rec : table.records) {
      if (rec.metric != "accuracy") continue;
      const std::string key =
          rec.dataset + "/" + std::to_string(rec.repeat) + "/" + std::to_string(rec.fold);
      if (rec.method == "rf_d") rf_acc[key] = rec.value;
      if (rec.method == "ppa") ppa_acc[key] = rec.value;
    }
    REQUIRE(!rf_acc.empty());
    for (const auto& [key, acc] : rf_acc) {
      REQUIRE(ppa_acc.count(key) == 1);
      CHECK(ppa_acc[key] == acc);  // exact equality
    }
  }
}

TEST_CASE("run_experiment with oob calibration") {
  std::map<std::string, Dataset> datasets;
  datasets["gauss"] = sample_two_gaussians(2, 120, 404).data;
  ExperimentConfig cfg;
  cfg.dataset_ids = {"gauss"};
  cfg.methods = {Method::rf_d, Method::iso, Method::va, Method::ct, Method::rank};
  cfg.folds = 3;
  cfg.repeats = 1;
  cfg.seed = 77;
  cfg.source = CalibSource::oob;
  cfg.base_forest.n_trees = 12;
  const auto table = run_experiment(cfg, datasets, 2);
  CHECK(table.failures.empty());
  CHECK(table.records.size() ==
        cfg.methods.size() * 3 * cell_metric_names(true).size());
}

TEST_CASE("experiment cells audit: fold partition and cyclic calibration fold") {
  const auto sample = sample_two_gaussians(2, 90, 55);
  const int k = 5;
  const auto folds = stratified_kfold(sample.data.labels, k, 99);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (int g = 0; g < k; ++g) {
    const auto& fold = folds[static_cast<std::size_t>(g)];
    seen.insert(fold.begin(), fold.end());
    total += fold.size();
  }
  CHECK(seen.size() == total);  // disjoint folds cover distinct indices
  CHECK(total == sample.data.n_rows);
  for (int f = 0; f < k; ++f) CHECK((f + 1) % k != f);
}

TEST_CASE("mean table and values matrix") {
  ResultsTable table;
  table.records = {
      {"d1", "a", 0, 0, "brier", 0.2}, {"d1", "a", 0, 1, "brier", 0.4},
      {"d1", "b", 0, 0, "brier", 0.1}, {"d1", "b", 0, 1, "brier", 0.3},
      {"d2", "a", 0, 0, "brier", 0.5}, {"d2", "b", 0, 0, "brier", 0.6},
  };
  const auto means = mean_table(table, "brier");
  CHECK(means.at("d1").at("a") == doctest::Approx(0.3));
  CHECK(means.at("d1").at("b") == doctest::Approx(0.2));
  const auto matrix = values_matrix(table, "brier", {"d1", "d2"}, {"a", "b"});
  CHECK(matrix[0][0] == doctest::Approx(0.3));
  CHECK(matrix[1][1] == doctest::Approx(0.6));
  CHECK_THROWS_AS(values_matrix(table, "brier", {"d3"}, {"a"}),
                  std::invalid_argument);
  const auto ranks = average_ranks(matrix);
  CHECK(ranks[0] == doctest::Approx(1.5));
  CHECK(ranks[1] == doctest::Approx(1.5));
}

TEST_CASE("comparison studies") {
  SUBCASE("injected constant improvement is flagged") {
    ResultsTable a, b;
    Rng rng(31);
    for (int d = 0; d < 8; ++d) {
      const std::string name = "d" + std::to_string(d);
      const double base = 0.2 + 0.05 * rng.uniform();
      a.records.push_back({name, "iso", 0, 0, "brier", base});
      // systematically better by ~0.05 with small jitter
      b.records.push_back(
          {name, "iso", 0, 0, "brier", base - 0.05 + 0.001 * rng.uniform()});
    }
    const auto rows = detail::compare_tables(a, b, {"iso"}, {"brier"}, 0.05);
    REQUIRE(rows.size() == 1);
    CHECK(!rows[0].degenerate);
    CHECK(rows[0].test.significant);
    CHECK(rows[0].test.direction == 1);  // a - b > 0: variant b is lower
  }
  SUBCASE("identical tables are degenerate") {
    ResultsTable a;
    for (int d = 0; d < 4; ++d)
      a.records.push_back({"d" + std::to_string(d), "iso", 0, 0, "brier", 0.3});
    const auto rows = detail::compare_tables(a, a, {"iso"}, {"brier"}, 0.05);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].degenerate);
  }
  SUBCASE("output shape is methods x metrics") {
    ResultsTable a, b;
    for (int d = 0; d < 3; ++d) {
      const std::string name = "d" + std::to_string(d);
      for (const std::string metric : {"brier", "ece"}) {
        a.records.push_back({name, "iso", 0, 0, metric, 0.1 * (d + 1)});
        a.records.push_back({name, "platt", 0, 0, metric, 0.2 * (d + 1)});
        b.records.push_back({name, "iso", 0, 0, metric, 0.15 * (d + 1)});
        b.records.push_back({name, "platt", 0, 0, metric, 0.1 * (d + 1)});
      }
    }
    const auto rows =
        detail::compare_tables(a, b, {"iso", "platt"}, {"brier", "ece"}, 0.05);
    CHECK(rows.size() == 4);
  }
}

TEST_CASE("compare_laplace end to end on a tiny setup") {
  const auto datasets = two_small_datasets();
  ExperimentConfig cfg;
  cfg.dataset_ids = {"gauss_a", "gauss_b"};
  cfg.methods = {Method::rf_d};
  cfg.folds = 3;
  cfg.repeats = 1;
  cfg.seed = 21;
  cfg.base_forest.n_trees = 8;
  const auto rows = compare_laplace(cfg, datasets, 2);
  CHECK(rows.size() == cell_metric_names(true).size());
  for (const auto& row : rows) CHECK(row.method == "rf_d");
}

TEST_CASE("compare_oob uses only the applicable calibrators") {
  std::map<std::string, Dataset> datasets = two_small_datasets();
  ExperimentConfig cfg;
  cfg.dataset_ids = {"gauss_a", "gauss_b"};
  cfg.methods = {Method::rf_d, Method::ct, Method::iso, Method::ppa};
  cfg.folds = 3;
  cfg.repeats = 1;
  cfg.seed = 22;
  cfg.base_forest.n_trees = 10;
  const auto rows = compare_oob(cfg, datasets, 2);
  for (const auto& row : rows) {
    CHECK(row.method != "rf_d");
    CHECK(row.method != "ct");
  }
  // iso and ppa over the metric list
  CHECK(rows.size() == 2 * cell_metric_names(true).size());
}

TEST_CASE("calibration size sweep") {
  const auto sample = sample_two_gaussians(2, 300, 606);
  const auto pool = sample_from_specs(sample.spec0, sample.spec1, 200, 607);
  const auto test = sample_from_specs(sample.spec0, sample.spec1, 200, 608);
  ForestConfig base;
  base.n_trees = 12;
  const std::vector<double> fractions{0.02, 0.5, 1.0};
  const auto rows = calibration_size_sweep(sample.data, pool, test, fractions,
                                           {Method::rf_d, Method::iso, Method::ppa},
                                           base, 5);
  // per fraction and method: accuracy, brier, ece, tce, bin_entropy
  CHECK(rows.size() == fractions.size() * 3 * 5);
  SUBCASE("fraction rounding guarantees at least one row") {
    CHECK(fraction_rows(0.001, 200) == 1);
    CHECK(fraction_rows(1.0, 200) == 200);
    CHECK(fraction_rows(0.5, 3) == 2);  // ceil
  }
  SUBCASE("rf_d rows are constant across fractions") {
    std::vector<double> rf_brier;
    for (const auto& row : rows)
      if (row.method == "rf_d" && row.metric == "brier") rf_brier.push_back(row.value);
    REQUIRE(rf_brier.size() == fractions.size());
    CHECK(rf_brier[0] == rf_brier[1]);
    CHECK(rf_brier[1] == rf_brier[2]);
  }
}
