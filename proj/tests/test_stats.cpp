#include <cmath>
#include <vector>

#include "doctest.h"
#include "rfcal/stats.hpp"

using namespace rfcal;

TEST_CASE("student t cdf against reference values") {
  // reference values from scipy.stats.t.cdf
  struct Case {
    double t;
    int df;
    double cdf;
  };
  const Case cases[] = {
      {0.0, 1, 0.5},
      {1.0, 1, 0.7500000000000002},
      {2.0, 3, 0.9303370157205785},
      {-1.5, 5, 0.09695184012123657},
      {2.776445105, 4, 0.9749999999949402},
      {1.812461123, 10, 0.9500000000153633},
      {0.5, 30, 0.6896384975574363},
      {-2.0, 2, 0.09175170953613696},
      {3.5, 7, 0.9950034795590572},
      {10.0, 5, 0.9999145262121285},
      {-4.2, 12, 0.0006159501135613725},
      {0.25, 100, 0.5984498939233898},
  };
  for (const auto& c : cases) {
    CHECK(std::abs(student_t_cdf(c.t, c.df) - c.cdf) < 1e-10);
  }
}

TEST_CASE("paired t-test") {
  SUBCASE("hand-checked five-pair fixture") {
    // t and p recomputed independently (scipy) for this fixture
    const std::vector<double> a{1.1, 2.3, 0.7, 1.9, 1.5};
    const std::vector<double> b{0.9, 2.0, 0.8, 1.4, 1.1};
    const auto r = paired_ttest(a, b);
    CHECK(std::abs(r.t - 2.5253432421288866) < 1e-9);
    CHECK(std::abs(r.p - 0.06498591034212065) < 1e-9);
    CHECK(!r.significant);
    CHECK(r.direction == 1);
  }
  SUBCASE("identical vectors are degenerate") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(paired_ttest(a, a), std::invalid_argument);
  }
  SUBCASE("constant nonzero difference has zero variance") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    const std::vector<double> b{0.5, 1.5, 2.5};
    CHECK_THROWS_AS(paired_ttest(a, b), std::invalid_argument);
  }
  SUBCASE("length mismatch and short input") {
    CHECK_THROWS_AS(paired_ttest({1.0}, {2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(paired_ttest({1.0}, {2.0}), std::invalid_argument);
  }
}

TEST_CASE("midranks") {
  SUBCASE("dominance") {
    const auto r = midranks({0.1, 0.9});
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 2.0);
  }
  SUBCASE("exact tie splits the rank") {
    const auto r = midranks({0.5, 0.5});
    CHECK(r[0] == 1.5);
    CHECK(r[1] == 1.5);
  }
  SUBCASE("higher is better flips the order") {
    const auto r = midranks({0.1, 0.9}, false);
    CHECK(r[0] == 2.0);
    CHECK(r[1] == 1.0);
  }
  SUBCASE("ranks sum to m(m+1)/2") {
    const std::vector<double> v{3.0, 1.0, 3.0, 2.0, 5.0, 3.0};
    const auto r = midranks(v);
    double sum = 0.0;
    for (double x : r) sum += x;
    CHECK(sum == doctest::Approx(6.0 * 7.0 / 2.0));
  }
}

TEST_CASE("average ranks over a hand-ranked 3x3 table") {
  // rows = datasets, columns = methods (lower is better)
  const std::vector<std::vector<double>> values{
      {0.10, 0.20, 0.30},
      {0.25, 0.15, 0.35},
      {0.40, 0.40, 0.10},
  };
  const auto mean = average_ranks(values);
  CHECK(mean[0] == doctest::Approx((1.0 + 2.0 + 2.5) / 3.0));
  CHECK(mean[1] == doctest::Approx((2.0 + 1.0 + 2.5) / 3.0));
  CHECK(mean[2] == doctest::Approx((3.0 + 3.0 + 1.0) / 3.0));
}

TEST_CASE("friedman and nemenyi") {
  SUBCASE("published critical-difference case: m=10, N=30") {
    std::vector<std::vector<double>> ranks(30);
    for (auto& row : ranks) {
      row.resize(10);
      for (std::size_t j = 0; j < 10; ++j) row[j] = static_cast<double>(j + 1);
    }
    const auto s = friedman_nemenyi(ranks, 0.05);
    CHECK(std::abs(s.critical_difference - 3.164 * std::sqrt(110.0 / 180.0)) < 1e-12);
    CHECK(std::abs(s.critical_difference - 2.4731) < 1e-3);
  }
  SUBCASE("identical methods give a zero statistic and no flags") {
    std::vector<std::vector<double>> ranks(8, std::vector<double>(4, 2.5));
    const auto s = friedman_nemenyi(ranks, 0.05);
    CHECK(s.friedman_stat == doctest::Approx(0.0));
    for (const auto& row : s.significant)
      for (bool flag : row) CHECK(!flag);
  }
  SUBCASE("cd decreases with the number of datasets") {
    std::vector<std::vector<double>> small(10, {1.0, 2.0, 3.0});
    std::vector<std::vector<double>> large(40, {1.0, 2.0, 3.0});
    const auto s1 = friedman_nemenyi(small, 0.05);
    const auto s2 = friedman_nemenyi(large, 0.05);
    CHECK(s2.critical_difference < s1.critical_difference);
    CHECK(s2.critical_difference ==
          doctest::Approx(s1.critical_difference / 2.0));  // 1/sqrt(N) scaling
  }
  SUBCASE("fully separated methods are flagged") {
    std::vector<std::vector<double>> ranks(50, {1.0, 2.0, 3.0});
    const auto s = friedman_nemenyi(ranks, 0.05);
    CHECK(s.friedman_stat > 0.0);
    CHECK(s.significant[0][2]);
    CHECK(!s.significant[0][0]);
  }
  SUBCASE("m outside the table is an error") {
    std::vector<std::vector<double>> ranks(3, std::vector<double>(21, 1.0));
    CHECK_THROWS_AS(friedman_nemenyi(ranks, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(nemenyi_q(10, 0.01), std::invalid_argument);
  }
}

TEST_CASE("cd diagram ordering and group bars") {
  RankSummary s;
  s.mean_ranks = {3.0, 1.0, 1.5, 4.5};
  s.critical_difference = 1.0;
  const auto d = cd_diagram(s);
  CHECK(d.order == std::vector<std::size_t>{1, 2, 0, 3});
  // methods 1 and 2 (ranks 1.0 and 1.5) stay under the CD
  REQUIRE(d.groups.size() == 1);
  CHECK(d.groups[0].first == 0);
  CHECK(d.groups[0].second == 1);
}
