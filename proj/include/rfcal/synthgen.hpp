#pragma once

// Synthetic binary classification data from diagonal-covariance Gaussians,
// with the exact Bayes posterior attached to every row. Densities are
// evaluated in log space so that high-dimensional, well-separated settings
// do not underflow.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rfcal/dataset.hpp"
#include "rfcal/rng.hpp"

namespace rfcal {

struct GaussianSpec {
  std::vector<double> mean;
  std::vector<double> variances;  // diagonal covariance

  std::size_t dim() const { return mean.size(); }
  void validate() const {
    if (mean.empty() || mean.size() != variances.size())
      throw std::invalid_argument("gaussian spec: dimension mismatch");
    for (double v : variances)
      if (!(v > 0.0)) throw std::invalid_argument("gaussian spec: variances must be positive");
  }
};

struct MixtureComponent {
  GaussianSpec gaussian;
  double weight = 1.0;
};
using MixtureSpec = std::vector<MixtureComponent>;

inline double log_gaussian_density(std::span<const double> x,
                                   const GaussianSpec& spec) {
  if (x.size() != spec.dim())
    throw std::invalid_argument("log_gaussian_density: dimension mismatch");
  constexpr double kLog2Pi = 1.8378770664093454836;
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - spec.mean[i];
    acc += kLog2Pi + std::log(spec.variances[i]) + d * d / spec.variances[i];
  }
  return -0.5 * acc;
}

inline double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Bayes posterior of a two-Gaussian generative model at x.
inline std::vector<double> true_posterior(std::span<const double> x,
                                          const GaussianSpec& spec0,
                                          const GaussianSpec& spec1,
                                          double prior0 = 0.5) {
  if (!(prior0 > 0.0 && prior0 < 1.0))
    throw std::invalid_argument("true_posterior: prior0 must be in (0,1)");
  const double l0 = std::log(prior0) + log_gaussian_density(x, spec0);
  const double l1 = std::log(1.0 - prior0) + log_gaussian_density(x, spec1);
  const double norm = log_sum_exp(l0, l1);
  return {std::exp(l0 - norm), std::exp(l1 - norm)};
}

inline double log_mixture_density(std::span<const double> x,
                                  const MixtureSpec& mixture) {
  if (mixture.empty())
    throw std::invalid_argument("mixture density: no components");
  double acc = -std::numeric_limits<double>::infinity();
  for (const auto& comp : mixture) {
    acc = log_sum_exp(acc, std::log(comp.weight) + log_gaussian_density(x, comp.gaussian));
  }
  return acc;
}

inline std::vector<double> mixture_posterior(std::span<const double> x,
                                             const MixtureSpec& mixture0,
                                             const MixtureSpec& mixture1,
                                             double prior0 = 0.5) {
  const double l0 = std::log(prior0) + log_mixture_density(x, mixture0);
  const double l1 = std::log(1.0 - prior0) + log_mixture_density(x, mixture1);
  const double norm = log_sum_exp(l0, l1);
  return {std::exp(l0 - norm), std::exp(l1 - norm)};
}

// Closed-form Bhattacharyya distance between two diagonal Gaussians:
//   (1/8) dmu' S^-1 dmu + (1/2) ln( det S / sqrt(det S0 det S1) ),
// with S the average covariance.
inline double bhattacharyya(const GaussianSpec& spec0, const GaussianSpec& spec1) {
  spec0.validate();
  spec1.validate();
  if (spec0.dim() != spec1.dim())
    throw std::invalid_argument("bhattacharyya: dimension mismatch");
  double quad = 0.0, logdet = 0.0;
  for (std::size_t i = 0; i < spec0.dim(); ++i) {
    const double avg = 0.5 * (spec0.variances[i] + spec1.variances[i]);
    const double d = spec1.mean[i] - spec0.mean[i];
    quad += d * d / avg;
    logdet += std::log(avg) - 0.5 * (std::log(spec0.variances[i]) +
                                     std::log(spec1.variances[i]));
  }
  return 0.125 * quad + 0.5 * logdet;
}

namespace detail {

inline std::vector<double> draw_vector(Rng& rng, std::size_t d, double lo, double hi) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline void sample_rows(Dataset& data, Rng& rng, const GaussianSpec& spec,
                        int label, std::size_t count) {
  std::vector<double> x(spec.dim());
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < spec.dim(); ++j)
      x[j] = rng.normal(spec.mean[j], std::sqrt(spec.variances[j]));
    data.push_row(x, label);
  }
}

}  // namespace detail

struct TwoGaussianSample {
  Dataset data;
  GaussianSpec spec0, spec1;
};

using Range = std::pair<double, double>;

// Balanced sample from two fixed Gaussians, posteriors attached.
// Odd n rounds down per class, so the total is 2 * floor(n / 2).
inline Dataset sample_from_specs(const GaussianSpec& spec0,
                                 const GaussianSpec& spec1, std::size_t n,
                                 std::uint64_t seed, double prior0 = 0.5) {
  spec0.validate();
  spec1.validate();
  if (spec0.dim() != spec1.dim())
    throw std::invalid_argument("sample_from_specs: dimension mismatch");
  Rng rng(seed);
  Dataset data;
  data.n_features = spec0.dim();
  data.n_classes = 2;
  const std::size_t per_class = n / 2;
  detail::sample_rows(data, rng, spec0, 0, per_class);
  detail::sample_rows(data, rng, spec1, 1, per_class);
  data.true_posteriors.reserve(data.n_rows * 2);
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    const auto q = true_posterior(data.row(i), spec0, spec1, prior0);
    data.true_posteriors.insert(data.true_posteriors.end(), q.begin(), q.end());
  }
  data.validate();
  return data;
}

// Two-Gaussian generator: class means drawn from per-class uniform ranges,
// one shared variance vector for both classes.
inline TwoGaussianSample sample_two_gaussians(int d, std::size_t n,
                                              std::uint64_t seed,
                                              Range mean0_range = {0.0, 1.0},
                                              Range mean1_range = {1.0, 3.0},
                                              Range var_range = {1.0, 2.0}) {
  if (d < 1) throw std::invalid_argument("sample_two_gaussians: d must be >= 1");
  if (n < 2) throw std::invalid_argument("sample_two_gaussians: n must be >= 2");
  Rng rng(seed);
  const std::size_t dim = static_cast<std::size_t>(d);
  TwoGaussianSample out;
  out.spec0.mean = detail::draw_vector(rng, dim, mean0_range.first, mean0_range.second);
  out.spec1.mean = detail::draw_vector(rng, dim, mean1_range.first, mean1_range.second);
  out.spec0.variances = detail::draw_vector(rng, dim, var_range.first, var_range.second);
  out.spec1.variances = out.spec0.variances;
  out.data = sample_from_specs(out.spec0, out.spec1, n, derive_seed(seed, 1));
  return out;
}

struct MixtureSample {
  Dataset data;
  MixtureSpec mixture0, mixture1;
};

// Balanced sample from two fixed mixtures, posteriors attached.
inline Dataset sample_from_mixtures(const MixtureSpec& mixture0,
                                    const MixtureSpec& mixture1, std::size_t n,
                                    std::uint64_t seed) {
  if (mixture0.empty() || mixture1.empty())
    throw std::invalid_argument("sample_from_mixtures: empty mixture");
  const std::size_t dim = mixture0.front().gaussian.dim();
  Dataset data;
  data.n_features = dim;
  data.n_classes = 2;
  const std::size_t per_class = n / 2;
  Rng rng(seed);
  for (int cls = 0; cls < 2; ++cls) {
    const MixtureSpec& mix = (cls == 0) ? mixture0 : mixture1;
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto& comp = mix[rng.uniform_int(mix.size())];
      std::vector<double> x(dim);
      for (std::size_t j = 0; j < dim; ++j)
        x[j] = rng.normal(comp.gaussian.mean[j],
                          std::sqrt(comp.gaussian.variances[j]));
      data.push_row(x, cls);
    }
  }
  data.true_posteriors.reserve(data.n_rows * 2);
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    const auto q = mixture_posterior(data.row(i), mixture0, mixture1);
    data.true_posteriors.insert(data.true_posteriors.end(), q.begin(), q.end());
  }
  data.validate();
  return data;
}

// Per-class equal-weight Gaussian mixture; posteriors from the exact
// mixture densities.
inline MixtureSample sample_mixture(int d, std::size_t n,
                                    int clusters_per_class, std::uint64_t seed,
                                    Range mean_range = {0.0, 20.0},
                                    Range var_range = {1.0, 5.0}) {
  if (d < 1 || clusters_per_class < 1)
    throw std::invalid_argument("sample_mixture: bad dimension or cluster count");
  Rng rng(seed);
  const std::size_t dim = static_cast<std::size_t>(d);
  MixtureSample out;
  const double w = 1.0 / clusters_per_class;
  for (int cls = 0; cls < 2; ++cls) {
    MixtureSpec& mix = (cls == 0) ? out.mixture0 : out.mixture1;
    for (int c = 0; c < clusters_per_class; ++c) {
      GaussianSpec g;
      g.mean = detail::draw_vector(rng, dim, mean_range.first, mean_range.second);
      g.variances = detail::draw_vector(rng, dim, var_range.first, var_range.second);
      mix.push_back({std::move(g), w});
    }
  }
  out.data = sample_from_mixtures(out.mixture0, out.mixture1, n, derive_seed(seed, 1));
  return out;
}

struct OverlapSweepSpec {
  int dim = 2;
  int steps = 20;
  double target_bd = 5.72;
  std::size_t samples_per_step = 1000;
  std::uint64_t seed = 0;
};

struct OverlapStep {
  double shift = 0.0;
  double bd = 0.0;
  GaussianSpec spec0, spec1;
  Dataset data;
};

// Both classes start on one mean vector (full overlap); class 1 is shifted
// along the all-ones direction in equal increments until the Bhattacharyya
// distance hits the target. The final shift is solved by bisection.
inline std::vector<OverlapStep> overlap_sweep(const OverlapSweepSpec& spec) {
  if (spec.dim < 1 || spec.steps < 2)
    throw std::invalid_argument("overlap_sweep: need dim >= 1 and steps >= 2");
  if (!(spec.target_bd > 0.0))
    throw std::invalid_argument("overlap_sweep: target distance must be positive");
  Rng rng(spec.seed);
  const std::size_t dim = static_cast<std::size_t>(spec.dim);
  GaussianSpec base;
  base.mean = detail::draw_vector(rng, dim, 0.0, 1.0);
  base.variances = detail::draw_vector(rng, dim, 1.0, 2.0);

  const auto shifted = [&](double s) {
    GaussianSpec g = base;
    for (double& m : g.mean) m += s;
    return g;
  };
  const auto bd_at = [&](double s) { return bhattacharyya(base, shifted(s)); };

  double lo = 0.0, hi = 100.0;
  if (bd_at(hi) < spec.target_bd)
    throw std::runtime_error("overlap_sweep: target distance not bracketed");
  double mid = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
    mid = 0.5 * (lo + hi);
    (bd_at(mid) < spec.target_bd ? lo : hi) = mid;
  }
  if (hi - lo > 1e-9)
    throw std::runtime_error("overlap_sweep: bisection failed to converge");
  const double final_shift = 0.5 * (lo + hi);

  std::vector<OverlapStep> out;
  out.reserve(static_cast<std::size_t>(spec.steps));
  for (int k = 0; k < spec.steps; ++k) {
    OverlapStep step;
    step.shift = final_shift * k / (spec.steps - 1);
    step.spec0 = base;
    step.spec1 = shifted(step.shift);
    step.bd = bhattacharyya(step.spec0, step.spec1);
    step.data = sample_from_specs(step.spec0, step.spec1, spec.samples_per_step,
                                  derive_seed(spec.seed, 1000 + static_cast<std::uint64_t>(k)));
    out.push_back(std::move(step));
  }
  return out;
}

}  // namespace rfcal
