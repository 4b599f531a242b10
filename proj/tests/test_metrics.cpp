#include <cmath>
#include <vector>

#include "doctest.h"
#include "rfcal/metrics.hpp"
#include "rfcal/rng.hpp"

using namespace rfcal;

namespace {

ProbVector vec2(double a, double b) { return {a, b}; }

// Random point on the K-simplex with entries bounded away from 0.
ProbVector random_simplex(Rng& rng, std::size_t k) {
  ProbVector v(k);
  double sum = 0.0;
  for (double& x : v) {
    x = rng.uniform(0.05, 1.0);
    sum += x;
  }
  for (double& x : v) x /= sum;
  return v;
}

// The eight-point fixture: true positive-class probabilities descending
// 0.9..0.1, predictions split into two four-point groups.
struct TwoGroupFixture {
  ProbMatrix p, q, c;
};

TwoGroupFixture two_group_fixture() {
  TwoGroupFixture f;
  const std::vector<double> q1{0.9, 0.8, 0.7, 0.6, 0.4, 0.3, 0.2, 0.1};
  for (std::size_t i = 0; i < q1.size(); ++i) {
    f.q.push_back(vec2(q1[i], 1.0 - q1[i]));
    f.p.push_back(i < 4 ? vec2(0.8, 0.2) : vec2(0.2, 0.8));
    f.c.push_back(i < 4 ? vec2(0.75, 0.25) : vec2(0.25, 0.75));
  }
  return f;
}

}  // namespace

TEST_CASE("tce") {
  CHECK(tce(vec2(0.3, 0.7), vec2(0.3, 0.7)) == doctest::Approx(0.0));
  CHECK(tce(vec2(1, 0), vec2(0, 1)) == doctest::Approx(2.0));
  CHECK(tce(vec2(0.8, 0.2), vec2(0.9, 0.1)) == doctest::Approx(0.02));
}

TEST_CASE("brier") {
  CHECK(brier(vec2(1, 0), 0) == doctest::Approx(0.0));
  CHECK(brier(vec2(0.5, 0.5), 0) == doctest::Approx(0.5));
  CHECK(brier(vec2(0.5, 0.5), 1) == doctest::Approx(0.5));
  CHECK(brier(vec2(0.8, 0.2), 0) == doctest::Approx(0.08));
}

TEST_CASE("brier equals tce against a degenerate posterior") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = random_simplex(rng, 3);
    const int y = static_cast<int>(rng.uniform_int(3));
    ProbVector onehot(3, 0.0);
    onehot[static_cast<std::size_t>(y)] = 1.0;
    CHECK(tce(p, onehot) == brier(p, y));
  }
}

TEST_CASE("log_loss") {
  CHECK(log_loss(vec2(1, 0), 0) == doctest::Approx(0.0));
  CHECK(log_loss(vec2(0.5, 0.5), 0) == doctest::Approx(std::log(2.0)));
  // hard zero stays finite through the clamp
  CHECK(log_loss(vec2(0, 1), 0) == doctest::Approx(-std::log(1e-15)));
}

TEST_CASE("accuracy with tie toward the lowest class") {
  ProbMatrix p{vec2(1, 0), vec2(0.2, 0.8), vec2(0.5, 0.5)};
  std::vector<int> y{0, 1, 0};
  CHECK(accuracy(p, y) == doctest::Approx(1.0));
  y = {1, 0, 1};
  CHECK(accuracy(p, y) == doctest::Approx(0.0));
}

TEST_CASE("binning edges") {
  BinningSpec bins{20};
  CHECK(bins.bin_index(0.0) == 0);
  CHECK(bins.bin_index(1.0) == 19);  // final bin closed
  CHECK(bins.bin_index(0.05) == 1);  // [left, right)
  CHECK_THROWS_AS(ece({vec2(1, 0)}, {0}, BinningSpec{0}), std::invalid_argument);
}

TEST_CASE("ece") {
  SUBCASE("perfect one-hot predictions") {
    ProbMatrix p(5, vec2(1, 0));
    std::vector<int> y(5, 0);
    CHECK(ece(p, y) == doctest::Approx(0.0));
  }
  SUBCASE("matching frequency in a single bin") {
    ProbMatrix p(10, vec2(0.7, 0.3));
    std::vector<int> y(10, 0);
    for (int i = 0; i < 3; ++i) y[static_cast<std::size_t>(i)] = 1;
    CHECK(ece(p, y) == doctest::Approx(0.0));
  }
  SUBCASE("constant prediction against pure labels") {
    ProbMatrix p(10, vec2(0.7, 0.3));
    std::vector<int> y(10, 0);
    CHECK(ece(p, y) == doctest::Approx(0.3));
  }
}

TEST_CASE("score components") {
  SUBCASE("divergence vanishes at the truth") {
    const auto q = vec2(0.3, 0.7);
    CHECK(score_components(q, q, Loss::brier).divergence == doctest::Approx(0.0));
    CHECK(score_components(q, q, Loss::logloss).divergence == doctest::Approx(0.0));
  }
  SUBCASE("entropy of the uniform coin") {
    CHECK(score_components(vec2(0.5, 0.5), vec2(0.5, 0.5), Loss::brier).entropy ==
          doctest::Approx(0.5));
    CHECK(score_components(vec2(0.5, 0.5), vec2(0.5, 0.5), Loss::logloss).entropy ==
          doctest::Approx(std::log(2.0)));
  }
}

TEST_CASE("calibrated groups average the true posterior per prediction") {
  ProbMatrix p{vec2(0.7, 0.3), vec2(0.7, 0.3), vec2(0.2, 0.8)};
  ProbMatrix q{vec2(0.9, 0.1), vec2(0.6, 0.4), vec2(0.2, 0.8)};
  const auto c = calibrated_groups(p, q);
  CHECK(c[0][0] == doctest::Approx(0.75));
  CHECK(c[1][0] == doctest::Approx(0.75));
  CHECK(c[2][0] == doctest::Approx(0.2));
}

TEST_CASE("two-group decomposition fixture") {
  const auto f = two_group_fixture();
  const auto derived_c = calibrated_groups(f.p, f.q);
  for (std::size_t i = 0; i < f.c.size(); ++i) {
    CHECK(derived_c[i][0] == doctest::Approx(f.c[i][0]).epsilon(1e-12));
  }
  const auto d = decompose(f.p, derived_c, f.q, Loss::brier);
  CHECK(d.cl == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(d.gl == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(d.il == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(d.total() == doctest::Approx(0.38).epsilon(1e-12));

  // Collapsing everything into one group moves the loss into GL.
  ProbMatrix single(f.p.size(), vec2(0.5, 0.5));
  const auto c1 = calibrated_groups(single, f.q);
  const auto d1 = decompose(single, c1, f.q, Loss::brier);
  CHECK(d1.cl == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d1.gl == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(d1.il == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(d1.total() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("decomposition additivity on random fixtures") {
  Rng rng(123);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 40;
    const std::size_t k = 2 + rng.uniform_int(2);
    // A small palette of distinct predictions forces multi-row groups.
    ProbMatrix palette;
    for (int g = 0; g < 4; ++g) palette.push_back(random_simplex(rng, k));
    ProbMatrix p, q;
    for (std::size_t i = 0; i < n; ++i) {
      p.push_back(palette[rng.uniform_int(palette.size())]);
      q.push_back(random_simplex(rng, k));
    }
    const auto c = calibrated_groups(p, q);
    for (Loss loss : {Loss::brier, Loss::logloss}) {
      const auto d = decompose(p, c, q, loss);
      double mean_score = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        mean_score += score_components(p[i], q[i], loss).score;
      mean_score /= static_cast<double>(n);
      CHECK(d.total() == doctest::Approx(mean_score).epsilon(1e-10));
      CHECK(d.cl >= 0.0);
      CHECK(d.gl >= -1e-12);
      CHECK(d.il >= 0.0);
    }
  }
}

TEST_CASE("metric bounds on random inputs") {
  Rng rng(99);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t k = 2 + rng.uniform_int(3);
    const auto p = random_simplex(rng, k);
    const auto q = random_simplex(rng, k);
    const int y = static_cast<int>(rng.uniform_int(k));
    CHECK(tce(p, q) >= 0.0);
    CHECK(brier(p, y) >= 0.0);
    CHECK(brier(p, y) <= 2.0);
    CHECK(log_loss(p, y) >= 0.0);
  }
  ProbMatrix preds;
  std::vector<int> labels;
  for (int i = 0; i < 300; ++i) {
    const double s = rng.uniform();
    preds.push_back(vec2(1.0 - s, s));
    labels.push_back(static_cast<int>(rng.uniform_int(2)));
  }
  const double e = ece(preds, labels);
  CHECK(e >= 0.0);
  CHECK(e <= 1.0);
}

TEST_CASE("bin entropy") {
  ProbMatrix one_bin(8, vec2(0.72, 0.28));
  CHECK(bin_entropy(one_bin) == doctest::Approx(0.0));
  ProbMatrix two_bins;
  for (int i = 0; i < 4; ++i) two_bins.push_back(vec2(0.9, 0.1));
  for (int i = 0; i < 4; ++i) two_bins.push_back(vec2(0.1, 0.9));
  CHECK(bin_entropy(two_bins) == doctest::Approx(1.0));
  Rng rng(5);
  ProbMatrix random;
  for (int i = 0; i < 200; ++i) {
    const double s = rng.uniform();
    random.push_back(vec2(1.0 - s, s));
  }
  CHECK(bin_entropy(random) <= std::log2(20.0));
}

TEST_CASE("reliability data") {
  ProbMatrix p;
  std::vector<int> y;
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const double s = rng.uniform();
    p.push_back(vec2(1.0 - s, s));
    y.push_back(rng.uniform() < s ? 1 : 0);
  }
  const auto bins = reliability_data(p, y, {}, ReliabilityRef::labels);
  std::size_t total = 0;
  for (const auto& b : bins) {
    CHECK(b.count > 0);
    CHECK(b.mean_pred >= b.bin_left);
    total += b.count;
  }
  CHECK(total == p.size());
  CHECK(reliability_data({}, {}, {}, ReliabilityRef::labels).empty());
}

TEST_CASE("evaluate fills optional metrics when posteriors are known") {
  const auto f = two_group_fixture();
  std::vector<int> y{0, 0, 0, 0, 1, 1, 1, 1};
  const auto report = evaluate(f.p, y, f.q);
  REQUIRE(report.tce.has_value());
  REQUIRE(report.brier_decomposition.has_value());
  CHECK(report.brier_decomposition->total() == doctest::Approx(0.38).epsilon(1e-12));
  const auto no_q = evaluate(f.p, y);
  CHECK(!no_q.tce.has_value());
}
