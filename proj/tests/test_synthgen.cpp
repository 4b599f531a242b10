#include <cmath>
#include <set>

#include "doctest.h"
#include "rfcal/synthgen.hpp"

using namespace rfcal;

TEST_CASE("true posterior") {
  GaussianSpec a{{0.0}, {1.0}};
  GaussianSpec b{{2.0}, {1.0}};
  SUBCASE("identical specs give the uniform posterior") {
    const auto q = true_posterior(std::vector<double>{3.7}, a, a);
    CHECK(q[0] == doctest::Approx(0.5));
    CHECK(q[1] == doctest::Approx(0.5));
  }
  SUBCASE("midpoint of symmetric means") {
    const auto q = true_posterior(std::vector<double>{1.0}, a, b);
    CHECK(q[0] == doctest::Approx(0.5));
  }
  SUBCASE("log-likelihood ratio of 2 at the class-0 mean") {
    const auto q = true_posterior(std::vector<double>{0.0}, a, b);
    CHECK(q[0] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-9));
  }
}

TEST_CASE("mixture posterior reduces to the two-gaussian posterior") {
  GaussianSpec a{{0.0, 1.0}, {1.5, 2.0}};
  GaussianSpec b{{2.0, 0.5}, {1.0, 1.0}};
  MixtureSpec m0{{a, 1.0}};
  MixtureSpec m1{{b, 1.0}};
  const std::vector<double> x{0.4, 0.9};
  const auto q_mix = mixture_posterior(x, m0, m1, 0.5);
  const auto q_two = true_posterior(x, a, b, 0.5);
  CHECK(q_mix[0] == doctest::Approx(q_two[0]).epsilon(1e-12));
}

TEST_CASE("mixture posterior at the axis of symmetry") {
  // Mirrored two-component mixtures around x = 0.
  GaussianSpec left1{{-3.0}, {1.0}}, left2{{-1.0}, {2.0}};
  GaussianSpec right1{{3.0}, {1.0}}, right2{{1.0}, {2.0}};
  MixtureSpec m0{{left1, 0.5}, {left2, 0.5}};
  MixtureSpec m1{{right1, 0.5}, {right2, 0.5}};
  const auto q = mixture_posterior(std::vector<double>{0.0}, m0, m1, 0.5);
  CHECK(q[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("bhattacharyya closed form") {
  GaussianSpec a{{0.0}, {1.0}};
  GaussianSpec b{{2.0}, {1.0}};
  GaussianSpec c{{0.0}, {4.0}};
  CHECK(bhattacharyya(a, a) == doctest::Approx(0.0));
  CHECK(bhattacharyya(a, b) == doctest::Approx(0.5));
  CHECK(bhattacharyya(a, c) == doctest::Approx(0.5 * std::log(2.5 / 2.0)));
  CHECK(bhattacharyya(a, b) == doctest::Approx(bhattacharyya(b, a)));
}

TEST_CASE("two-gaussian sample") {
  const auto sample = sample_two_gaussians(2, 1000, 42);
  const Dataset& d = sample.data;
  CHECK(d.n_rows == 1000);
  CHECK(d.n_features == 2);
  std::size_t class0 = 0;
  for (int y : d.labels) class0 += (y == 0);
  CHECK(class0 == 500);
  CHECK(d.has_posteriors());

  SUBCASE("posteriors match an independent recomputation") {
    for (std::size_t i = 0; i < d.n_rows; i += 37) {
      const auto q = true_posterior(d.row(i), sample.spec0, sample.spec1);
      CHECK(std::abs(q[0] - d.posterior(i)[0]) < 1e-10);
      CHECK(std::abs(q[0] + q[1] - 1.0) < 1e-12);
    }
  }
  SUBCASE("deterministic under the seed") {
    const auto again = sample_two_gaussians(2, 1000, 42);
    CHECK(again.data.features == d.features);
    CHECK(again.data.labels == d.labels);
  }
  SUBCASE("odd n rounds down per class") {
    const auto odd = sample_two_gaussians(2, 101, 1);
    CHECK(odd.data.n_rows == 100);
  }
  SUBCASE("shared variance vector across classes") {
    CHECK(sample.spec0.variances == sample.spec1.variances);
  }
}

TEST_CASE("sampling moments smoke test") {
  GaussianSpec a{{1.0, -2.0}, {1.5, 0.5}};
  GaussianSpec b{{4.0, 3.0}, {1.0, 2.0}};
  const std::size_t n = 100000;
  const Dataset d = sample_from_specs(a, b, 2 * n, 77);
  for (std::size_t j = 0; j < 2; ++j) {
    double mean0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean0 += d.row(i)[j];
    mean0 /= static_cast<double>(n);
    const double tol = 4.0 * std::sqrt(a.variances[j] / static_cast<double>(n));
    CHECK(std::abs(mean0 - a.mean[j]) < tol);
  }
}

TEST_CASE("mixture sample") {
  const auto sample = sample_mixture(2, 2000, 4, 9);
  CHECK(sample.data.n_rows == 2000);
  CHECK(sample.mixture0.size() == 4);
  std::size_t class1 = 0;
  for (int y : sample.data.labels) class1 += (y == 1);
  CHECK(class1 == 1000);
  for (std::size_t i = 0; i < sample.data.n_rows; i += 101) {
    const auto q = mixture_posterior(sample.data.row(i), sample.mixture0,
                                     sample.mixture1);
    CHECK(std::abs(q[1] - sample.data.posterior(i)[1]) < 1e-10);
  }
}

TEST_CASE("overlap sweep") {
  OverlapSweepSpec spec;
  spec.dim = 2;
  spec.steps = 20;
  spec.samples_per_step = 200;
  spec.seed = 3;
  const auto steps = overlap_sweep(spec);
  REQUIRE(steps.size() == 20);
  CHECK(steps.front().bd == doctest::Approx(0.0));
  CHECK(std::abs(steps.back().bd - 5.72) < 1e-6);
  for (std::size_t k = 1; k < steps.size(); ++k) {
    CHECK(steps[k].bd > steps[k - 1].bd);
    CHECK(steps[k].data.n_rows == 200);
  }
  const auto again = overlap_sweep(spec);
  CHECK(again.back().shift == steps.back().shift);
  CHECK(again.back().data.features == steps.back().data.features);
}

TEST_CASE("overlap sweep across dimensions hits the target") {
  for (int dim : {5, 10, 20}) {
    OverlapSweepSpec spec;
    spec.dim = dim;
    spec.samples_per_step = 50;
    spec.seed = 11 + static_cast<std::uint64_t>(dim);
    const auto steps = overlap_sweep(spec);
    CHECK(std::abs(steps.back().bd - 5.72) < 1e-6);
  }
}
