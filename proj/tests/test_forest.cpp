#include <cmath>
#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "rfcal/forest.hpp"
#include "rfcal/synthgen.hpp"

using namespace rfcal;

namespace {

Dataset tiny_2d() {
  // Classes separated by x0 < 0.5.
  Dataset d;
  d.n_features = 2;
  d.n_classes = 2;
  d.push_row(std::vector<double>{0.1, 0.3}, 0);
  d.push_row(std::vector<double>{0.2, 0.9}, 0);
  d.push_row(std::vector<double>{0.8, 0.2}, 1);
  d.push_row(std::vector<double>{0.9, 0.7}, 1);
  return d;
}

void check_count_consistency(const DecisionTree& tree, std::size_t index) {
  const TreeNode& node = tree.nodes[index];
  if (node.is_leaf()) return;
  const TreeNode& l = tree.nodes[static_cast<std::size_t>(node.left)];
  const TreeNode& r = tree.nodes[static_cast<std::size_t>(node.right)];
  CHECK(node.n_samples == l.n_samples + r.n_samples);
  for (std::size_t j = 0; j < node.class_counts.size(); ++j) {
    CHECK(node.class_counts[j] ==
          doctest::Approx(l.class_counts[j] + r.class_counts[j]).epsilon(1e-9));
  }
  check_count_consistency(tree, static_cast<std::size_t>(node.left));
  check_count_consistency(tree, static_cast<std::size_t>(node.right));
}

int tree_depth(const DecisionTree& tree, std::size_t index = 0) {
  const TreeNode& node = tree.nodes[index];
  if (node.is_leaf()) return 0;
  return 1 + std::max(tree_depth(tree, static_cast<std::size_t>(node.left)),
                      tree_depth(tree, static_cast<std::size_t>(node.right)));
}

}  // namespace

TEST_CASE("bootstrap sample") {
  SUBCASE("single index") {
    Rng rng(1);
    const auto [sample, oob] = bootstrap_sample(1, rng);
    CHECK(sample == std::vector<std::size_t>{0});
    CHECK(oob.empty());
  }
  SUBCASE("n = 0 rejected") {
    Rng rng(1);
    CHECK_THROWS_AS(bootstrap_sample(0, rng), std::invalid_argument);
  }
  SUBCASE("deterministic under the seed") {
    Rng a(99), b(99);
    CHECK(bootstrap_sample(50, a) == bootstrap_sample(50, b));
  }
  SUBCASE("oob is the sorted complement") {
    Rng rng(5);
    const auto [sample, oob] = bootstrap_sample(100, rng);
    CHECK(sample.size() == 100);
    std::set<std::size_t> in_bag(sample.begin(), sample.end());
    CHECK(std::is_sorted(oob.begin(), oob.end()));
    for (std::size_t i : oob) CHECK(in_bag.count(i) == 0);
    CHECK(in_bag.size() + oob.size() == 100);
  }
  SUBCASE("expected oob fraction") {
    // E |oob| / n = (1 - 1/n)^n for n = 1000.
    const double expected = std::pow(1.0 - 1e-3, 1000.0);
    double mean = 0.0;
    for (std::uint64_t s = 0; s < 200; ++s) {
      Rng rng(s);
      mean += static_cast<double>(bootstrap_sample(1000, rng).second.size()) / 1000.0;
    }
    mean /= 200.0;
    CHECK(std::abs(mean - expected) < 0.01);
  }
}

TEST_CASE("impurity") {
  CHECK(impurity(std::vector<double>{5, 0}, Criterion::gini) == doctest::Approx(0.0));
  CHECK(impurity(std::vector<double>{1, 1}, Criterion::gini) == doctest::Approx(0.5));
  CHECK(impurity(std::vector<double>{1, 1}, Criterion::entropy) == doctest::Approx(1.0));
  CHECK_THROWS_AS(impurity(std::vector<double>{0, 0}, Criterion::gini),
                  std::invalid_argument);
}

TEST_CASE("leaf distribution") {
  CHECK(leaf_distribution(std::vector<double>{3, 1}, false, TreeKind::pet) ==
        std::vector<double>{0.75, 0.25});
  const auto lap = leaf_distribution(std::vector<double>{3, 1}, true, TreeKind::pet);
  CHECK(lap[0] == doctest::Approx(4.0 / 6.0));
  CHECK(lap[1] == doctest::Approx(2.0 / 6.0));
  // CT ties break toward the lowest class index.
  CHECK(leaf_distribution(std::vector<double>{2, 2}, false, TreeKind::ct) ==
        std::vector<double>{1.0, 0.0});
}

TEST_CASE("find_best_split on the one-feature toy") {
  Dataset d;
  d.n_features = 1;
  d.n_classes = 2;
  d.push_row(std::vector<double>{0.0}, 0);
  d.push_row(std::vector<double>{1.0}, 1);
  const std::vector<std::size_t> rows{0, 1};
  const std::vector<double> weights{1.0, 1.0};
  const std::vector<std::size_t> feats{0};
  const std::vector<double> counts{1.0, 1.0};
  const auto split = detail::find_best_split(d, rows, weights, feats,
                                             Criterion::gini, 1, counts);
  REQUIRE(split.has_value());
  CHECK(split->feature == 0);
  CHECK(split->threshold == doctest::Approx(0.5));
  CHECK(split->gain == doctest::Approx(0.5));

  SUBCASE("identical feature values give no split") {
    Dataset flat;
    flat.n_features = 1;
    flat.n_classes = 2;
    flat.push_row(std::vector<double>{0.7}, 0);
    flat.push_row(std::vector<double>{0.7}, 1);
    CHECK(!detail::find_best_split(flat, rows, weights, feats, Criterion::gini, 1,
                                   counts)
               .has_value());
  }
  SUBCASE("pure node gives no split") {
    Dataset pure;
    pure.n_features = 1;
    pure.n_classes = 2;
    pure.push_row(std::vector<double>{0.0}, 0);
    pure.push_row(std::vector<double>{1.0}, 0);
    const std::vector<double> pure_counts{2.0, 0.0};
    CHECK(!detail::find_best_split(pure, rows, weights, feats, Criterion::gini, 1,
                                   pure_counts)
               .has_value());
  }
}

TEST_CASE("train_forest on the separable toy") {
  const Dataset d = tiny_2d();
  ForestConfig cfg;
  cfg.n_trees = 10;
  cfg.seed = 3;
  const auto model = train_forest(d, cfg);
  for (std::size_t i = 0; i < d.n_rows; ++i) {
    CHECK(argmax_class(predict_forest(model, d.row(i))) == d.labels[i]);
  }
  for (const auto& tree : model.trees) check_count_consistency(tree, 0);
}

TEST_CASE("forest config validation") {
  const Dataset d = tiny_2d();
  ForestConfig cfg;
  cfg.max_depth = 0;
  CHECK_THROWS_AS(train_forest(d, cfg), std::invalid_argument);
}

TEST_CASE("max_depth bounds the tree") {
  const auto sample = sample_two_gaussians(2, 200, 21);
  ForestConfig cfg;
  cfg.n_trees = 20;
  cfg.max_depth = 1;
  cfg.seed = 4;
  const auto model = train_forest(sample.data, cfg);
  for (const auto& tree : model.trees) {
    CHECK(tree_depth(tree) <= 1);
    std::size_t internal = 0;
    for (const auto& node : tree.nodes) internal += !node.is_leaf();
    CHECK(internal <= 1);
  }
}

TEST_CASE("training is deterministic and thread-count independent") {
  const auto sample = sample_two_gaussians(2, 300, 8);
  ForestConfig cfg;
  cfg.n_trees = 16;
  cfg.seed = 1234;
  const auto serial = train_forest(sample.data, cfg, 1);
  const auto threaded = train_forest(sample.data, cfg, 4);
  CHECK(serial == threaded);
}

TEST_CASE("bootstrap off trains on the full data with empty oob") {
  const auto sample = sample_two_gaussians(2, 150, 17);
  ForestConfig cfg;
  cfg.n_trees = 5;
  cfg.bootstrap = false;
  cfg.seed = 9;
  const auto model = train_forest(sample.data, cfg);
  for (const auto& oob : model.oob_indices) CHECK(oob.empty());
  // Unbounded depth + full data: training accuracy is 1 absent conflicts.
  double acc = 0.0;
  for (std::size_t i = 0; i < sample.data.n_rows; ++i)
    acc += argmax_class(predict_forest(model, sample.data.row(i))) ==
           sample.data.labels[i];
  CHECK(acc == doctest::Approx(static_cast<double>(sample.data.n_rows)));
  CHECK_THROWS_AS(oob_predict(model, sample.data), std::runtime_error);
}

TEST_CASE("probability vectors are valid and laplace keeps them interior") {
  const auto sample = sample_two_gaussians(2, 200, 33);
  for (bool laplace : {false, true}) {
    ForestConfig cfg;
    cfg.n_trees = 25;
    cfg.laplace = laplace;
    cfg.seed = 7;
    const auto model = train_forest(sample.data, cfg);
    for (std::size_t i = 0; i < sample.data.n_rows; i += 11) {
      const auto p = predict_forest(model, sample.data.row(i));
      double sum = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        if (laplace) {
          CHECK(v > 0.0);
          CHECK(v < 1.0);
        }
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("ct leaves emit one-hot distributions") {
  const auto sample = sample_two_gaussians(2, 120, 2);
  ForestConfig cfg;
  cfg.n_trees = 7;
  cfg.tree_kind = TreeKind::ct;
  cfg.seed = 5;
  const auto model = train_forest(sample.data, cfg);
  const PredictOptions opts = predict_options(cfg);
  for (const auto& tree : model.trees) {
    const auto p = predict_tree(tree, sample.data.row(0), opts);
    CHECK((p[0] == 1.0 || p[1] == 1.0));
  }
}

TEST_CASE("predict_tree routing convention") {
  DecisionTree tree;
  tree.nodes.resize(3);
  tree.nodes[0].feature = 0;
  tree.nodes[0].threshold = 0.5;
  tree.nodes[0].left = 1;
  tree.nodes[0].right = 2;
  tree.nodes[0].class_counts = {3, 1};
  tree.nodes[0].n_samples = 4;
  tree.nodes[1].class_counts = {3, 0};
  tree.nodes[1].n_samples = 3;
  tree.nodes[2].class_counts = {0, 1};
  tree.nodes[2].n_samples = 1;
  const PredictOptions opts;
  CHECK(predict_tree(tree, std::vector<double>{0.25}, opts) ==
        std::vector<double>{1.0, 0.0});
  // exactly at the threshold goes left
  CHECK(predict_tree(tree, std::vector<double>{0.5}, opts) ==
        std::vector<double>{1.0, 0.0});
  CHECK(predict_tree(tree, std::vector<double>{0.75}, opts) ==
        std::vector<double>{0.0, 1.0});
}

TEST_CASE("forest prediction is the mean over trees") {
  DecisionTree t1, t2;
  t1.nodes.resize(1);
  t1.nodes[0].class_counts = {1, 0};
  t1.nodes[0].n_samples = 1;
  t2.nodes.resize(1);
  t2.nodes[0].class_counts = {0, 1};
  t2.nodes[0].n_samples = 1;
  RandomForestModel model;
  model.trees = {t1, t2};
  model.bootstrap_indices = {{0}, {0}};
  model.oob_indices = {{}, {}};
  model.n_classes = 2;
  model.n_features = 1;
  model.n_train_rows = 1;
  const auto p = predict_forest(model, std::vector<double>{0.0});
  CHECK(p == std::vector<double>{0.5, 0.5});
}

TEST_CASE("oob predictions use exactly the out-of-bag trees") {
  const auto sample = sample_two_gaussians(2, 200, 50);
  ForestConfig cfg;
  cfg.n_trees = 50;
  cfg.seed = 31;
  const auto model = train_forest(sample.data, cfg);
  const auto oob = oob_predict(model, sample.data);

  // Independent reconstruction from the recorded index sets.
  const PredictOptions opts = predict_options(cfg);
  for (std::size_t i = 0; i < sample.data.n_rows; ++i) {
    std::vector<double> acc(2, 0.0);
    std::size_t used = 0;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      const auto& oob_t = model.oob_indices[t];
      const bool is_oob = std::binary_search(oob_t.begin(), oob_t.end(), i);
      std::size_t appearances = 0;
      for (std::size_t b : model.bootstrap_indices[t]) appearances += (b == i);
      CHECK(is_oob == (appearances == 0));
      if (!is_oob) continue;
      const auto p = predict_tree(model.trees[t], sample.data.row(i), opts);
      acc[0] += p[0];
      acc[1] += p[1];
      ++used;
    }
    if (used == 0) {
      CHECK(!oob[i].has_value());
      continue;
    }
    REQUIRE(oob[i].has_value());
    CHECK((*oob[i])[0] == doctest::Approx(acc[0] / static_cast<double>(used)).epsilon(1e-15));
  }
}

TEST_CASE("oob with a single tree") {
  const Dataset d = tiny_2d();
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.seed = 6;
  const auto model = train_forest(d, cfg);
  const auto oob = oob_predict(model, d);
  const auto& bag = model.bootstrap_indices[0];
  for (std::size_t i = 0; i < d.n_rows; ++i) {
    const bool in_bag = std::find(bag.begin(), bag.end(), i) != bag.end();
    CHECK(oob[i].has_value() == !in_bag);
  }
}

TEST_CASE("unique prediction groups") {
  SUBCASE("single leaf forest") {
    const Dataset d = tiny_2d();
    ForestConfig cfg;
    cfg.n_trees = 3;
    cfg.max_depth = 5;
    cfg.min_samples_split = 100;  // forces single-leaf trees
    cfg.seed = 1;
    const auto model = train_forest(d, cfg);
    CHECK(unique_prediction_groups(model, d) == 1);
  }
  SUBCASE("stumps with distinct leaf frequencies") {
    Dataset d;
    d.n_features = 1;
    d.n_classes = 2;
    d.push_row(std::vector<double>{0.0}, 0);
    d.push_row(std::vector<double>{1.0}, 1);
    ForestConfig cfg;
    cfg.n_trees = 4;
    cfg.bootstrap = false;
    cfg.seed = 2;
    const auto model = train_forest(d, cfg);
    CHECK(unique_prediction_groups(model, d) == 2);
  }
}

TEST_CASE("splits between adjacent doubles stay consistent with routing") {
  // feature values one ulp apart: the midpoint rounds onto the right value
  Dataset d;
  d.n_features = 1;
  d.n_classes = 2;
  const double lo = 1.0;
  const double hi = std::nextafter(1.0, 2.0);
  for (int i = 0; i < 3; ++i) d.push_row(std::vector<double>{lo}, 0);
  for (int i = 0; i < 3; ++i) d.push_row(std::vector<double>{hi}, 1);
  ForestConfig cfg;
  cfg.n_trees = 8;
  cfg.seed = 77;
  const auto model = train_forest(d, cfg);
  for (const auto& tree : model.trees) check_count_consistency(tree, 0);
  CHECK(argmax_class(predict_forest(model, std::vector<double>{lo})) == 0);
  CHECK(argmax_class(predict_forest(model, std::vector<double>{hi})) == 1);
}

TEST_CASE("prediction group count agrees with the grouping used for c") {
  const auto sample = sample_two_gaussians(2, 80, 64);
  ForestConfig cfg;
  cfg.n_trees = 3;
  cfg.max_depth = 2;
  cfg.seed = 13;
  const auto model = train_forest(sample.data, cfg);
  ProbMatrix preds(sample.data.n_rows), q(sample.data.n_rows);
  for (std::size_t i = 0; i < sample.data.n_rows; ++i) {
    preds[i] = predict_forest(model, sample.data.row(i));
    q[i].assign(sample.data.posterior(i).begin(), sample.data.posterior(i).end());
  }
  const auto c = calibrated_groups(preds, q);
  std::set<std::vector<long long>> distinct;
  for (const auto& v : c) distinct.insert(rounded_key(v));
  CHECK(distinct.size() == unique_prediction_groups(model, sample.data));
}

TEST_CASE("single-class data trains to a degenerate predictor") {
  Dataset d;
  d.n_features = 1;
  d.n_classes = 2;
  for (int i = 0; i < 6; ++i)
    d.push_row(std::vector<double>{static_cast<double>(i)}, 0);
  ForestConfig cfg;
  cfg.n_trees = 4;
  cfg.seed = 12;
  const auto model = train_forest(d, cfg);
  for (std::size_t i = 0; i < d.n_rows; ++i) {
    CHECK(predict_forest(model, d.row(i)) == std::vector<double>{1.0, 0.0});
  }
}

TEST_CASE("class weights") {
  // Imbalanced data: balanced weighting equalizes class mass at the root.
  Dataset d;
  d.n_features = 1;
  d.n_classes = 2;
  for (int i = 0; i < 9; ++i)
    d.push_row(std::vector<double>{static_cast<double>(i)}, 0);
  d.push_row(std::vector<double>{9.0}, 1);
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  cfg.class_weight = ClassWeight::balanced;
  cfg.seed = 0;
  const auto model = train_forest(d, cfg);
  const auto& root = model.trees[0].nodes[0];
  CHECK(root.class_counts[0] == doctest::Approx(root.class_counts[1]));
}
