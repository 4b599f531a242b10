#pragma once

// Statistical machinery for method comparison: Student-t CDF (via the
// regularized incomplete beta function), paired t-tests, midrank-based
// average ranks, and the Friedman test with the Nemenyi post-hoc critical
// difference.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rfcal {

namespace detail {

// Continued-fraction evaluation of the regularized incomplete beta
// function I_x(a, b) (Lentz's method).
inline double incomplete_beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

inline double regularized_incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0)
    throw std::invalid_argument("incomplete beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) -
                                std::lgamma(b) + a * std::log(x) +
                                b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * detail::incomplete_beta_cf(a, b, x) / a;
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                        b * std::log(1.0 - x) + a * std::log(x)) *
                   detail::incomplete_beta_cf(b, a, 1.0 - x) / b;
}

inline double student_t_cdf(double t, int df) {
  if (df < 1) throw std::invalid_argument("student_t_cdf: df must be >= 1");
  const double nu = static_cast<double>(df);
  const double x = nu / (nu + t * t);
  const double tail = 0.5 * regularized_incomplete_beta(nu / 2.0, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool significant = false;
  int direction = 0;  // sign of mean(a - b)
};

// Two-sided paired t-test on the differences a[i] - b[i].
inline TTestResult paired_ttest(const std::vector<double>& a,
                                const std::vector<double>& b,
                                double alpha = 0.05) {
  if (a.size() != b.size())
    throw std::invalid_argument("paired_ttest: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired_ttest: need at least 2 pairs");
  std::vector<double> diff(n);
  bool all_zero = true;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = a[i] - b[i];
    if (diff[i] != 0.0) all_zero = false;
  }
  if (all_zero)
    throw std::invalid_argument("paired_ttest: all differences are zero");
  double mean = 0.0;
  for (double d : diff) mean += d;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean);
  var /= static_cast<double>(n - 1);
  if (var <= 0.0)
    throw std::invalid_argument(
        "paired_ttest: zero variance in differences (constant offset)");
  TTestResult out;
  out.t = mean / std::sqrt(var / static_cast<double>(n));
  out.p = 2.0 * (1.0 - student_t_cdf(std::abs(out.t), static_cast<int>(n - 1)));
  out.significant = out.p < alpha;
  out.direction = (mean > 0.0) - (mean < 0.0);
  return out;
}

// Midranks of one observation vector: ranks 1..m, ties averaged.
inline std::vector<double> midranks(const std::vector<double>& values,
                                    bool lower_is_better = true) {
  const std::size_t m = values.size();
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return lower_is_better ? values[x] < values[y] : values[x] > values[y];
  });
  std::vector<double> ranks(m, 0.0);
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j + 1 < m && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

// Mean rank per method over a matrix of per-dataset metric values
// (rows = datasets, columns = methods).
inline std::vector<double> average_ranks(
    const std::vector<std::vector<double>>& values, bool lower_is_better = true) {
  if (values.empty()) throw std::invalid_argument("average_ranks: no datasets");
  const std::size_t m = values.front().size();
  if (m == 0) throw std::invalid_argument("average_ranks: no methods");
  std::vector<double> mean(m, 0.0);
  for (const auto& row : values) {
    if (row.size() != m)
      throw std::invalid_argument("average_ranks: ragged value matrix");
    const auto r = midranks(row, lower_is_better);
    for (std::size_t j = 0; j < m; ++j) mean[j] += r[j];
  }
  for (double& v : mean) v /= static_cast<double>(values.size());
  return mean;
}

// Studentized range quantiles at infinite degrees of freedom divided by
// sqrt(2), indexed by the number of methods m = 2..20 (Demsar 2006).
inline double nemenyi_q(int n_methods, double alpha) {
  static constexpr double q05[] = {
      1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219,
      3.268, 3.313, 3.354, 3.391, 3.426, 3.458, 3.489, 3.517, 3.544};
  static constexpr double q10[] = {
      1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978,
      3.030, 3.077, 3.120, 3.159, 3.196, 3.230, 3.261, 3.291, 3.319};
  if (n_methods < 2 || n_methods > 20)
    throw std::invalid_argument(
        "nemenyi_q: tabulated only for 2..20 methods, got " +
        std::to_string(n_methods));
  if (alpha == 0.05) return q05[n_methods - 2];
  if (alpha == 0.10) return q10[n_methods - 2];
  throw std::invalid_argument("nemenyi_q: alpha must be 0.05 or 0.10");
}

struct RankSummary {
  std::vector<double> mean_ranks;
  double friedman_stat = 0.0;
  double critical_difference = 0.0;
  double alpha = 0.05;
  std::size_t n_datasets = 0;
  // significant[i][j] = mean-rank gap of methods i and j reaches the CD
  std::vector<std::vector<bool>> significant;
};

// Friedman chi-square statistic over a rank matrix (rows = datasets,
// columns = methods, entries are ranks 1..m with midranks for ties), plus
// the Nemenyi critical difference and pairwise significance flags.
inline RankSummary friedman_nemenyi(const std::vector<std::vector<double>>& ranks,
                                    double alpha = 0.05) {
  if (ranks.empty()) throw std::invalid_argument("friedman_nemenyi: no datasets");
  const std::size_t m = ranks.front().size();
  const std::size_t n = ranks.size();
  if (m < 2) throw std::invalid_argument("friedman_nemenyi: need >= 2 methods");
  RankSummary out;
  out.alpha = alpha;
  out.n_datasets = n;
  out.mean_ranks.assign(m, 0.0);
  for (const auto& row : ranks) {
    if (row.size() != m)
      throw std::invalid_argument("friedman_nemenyi: ragged rank matrix");
    for (std::size_t j = 0; j < m; ++j) out.mean_ranks[j] += row[j];
  }
  for (double& v : out.mean_ranks) v /= static_cast<double>(n);

  const double dm = static_cast<double>(m);
  const double dn = static_cast<double>(n);
  double sum_sq = 0.0;
  for (double r : out.mean_ranks) sum_sq += r * r;
  out.friedman_stat =
      12.0 * dn / (dm * (dm + 1.0)) * (sum_sq - dm * (dm + 1.0) * (dm + 1.0) / 4.0);
  // guard against tiny negative values from float cancellation
  if (out.friedman_stat < 0.0 && out.friedman_stat > -1e-9) out.friedman_stat = 0.0;

  out.critical_difference =
      nemenyi_q(static_cast<int>(m), alpha) * std::sqrt(dm * (dm + 1.0) / (6.0 * dn));
  out.significant.assign(m, std::vector<bool>(m, false));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      out.significant[i][j] = std::abs(out.mean_ranks[i] - out.mean_ranks[j]) >=
                              out.critical_difference;
    }
  }
  return out;
}

// Data for a critical-difference diagram: methods ordered by mean rank and
// maximal intervals of methods whose rank spread stays below the CD.
struct CdDiagram {
  std::vector<std::size_t> order;  // method indices, best rank first
  std::vector<std::pair<std::size_t, std::size_t>> groups;  // index ranges in `order`
};

inline CdDiagram cd_diagram(const RankSummary& summary) {
  CdDiagram out;
  const std::size_t m = summary.mean_ranks.size();
  out.order.resize(m);
  for (std::size_t i = 0; i < m; ++i) out.order[i] = i;
  std::sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
    return summary.mean_ranks[a] < summary.mean_ranks[b];
  });
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t j = i;
    while (j + 1 < m && summary.mean_ranks[out.order[j + 1]] -
                                summary.mean_ranks[out.order[i]] <
                            summary.critical_difference)
      ++j;
    if (j > i) {
      const bool nested = !out.groups.empty() && out.groups.back().second >= j;
      if (!nested) out.groups.emplace_back(i, j);
    }
  }
  return out;
}

}  // namespace rfcal
