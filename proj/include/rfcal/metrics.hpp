#pragma once

// Calibration metrics over predicted class distributions: instance-wise
// scores (TCE, Brier, log-loss), the binned expected calibration error,
// and the decomposition of a proper scoring rule into calibration,
// grouping and irreducible loss.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfcal {

using ProbVector = std::vector<double>;
using ProbMatrix = std::vector<ProbVector>;

enum class Loss { brier, logloss };

inline constexpr double kLogLossFloor = 1e-15;

// Squared distance between a prediction and the known true posterior.
inline double tce(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw std::invalid_argument("tce: dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double d = p[j] - q[j];
    s += d * d;
  }
  return s;
}

inline double brier(std::span<const double> p, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= p.size())
    throw std::invalid_argument("brier: label out of range");
  double s = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double d = p[j] - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0);
    s += d * d;
  }
  return s;
}

// Natural log; the predicted probability of the observed class is floored
// at 1e-15 so that hard zero predictions stay finite.
inline double log_loss(std::span<const double> p, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= p.size())
    throw std::invalid_argument("log_loss: label out of range");
  return -std::log(std::max(p[static_cast<std::size_t>(y)], kLogLossFloor));
}

// Fraction of rows whose argmax matches the label; argmax ties resolve to
// the lowest class index.
inline int argmax_class(std::span<const double> p) {
  int best = 0;
  for (std::size_t j = 1; j < p.size(); ++j) {
    if (p[j] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  }
  return best;
}

inline double accuracy(const ProbMatrix& predictions,
                       const std::vector<int>& labels) {
  if (predictions.size() != labels.size() || predictions.empty())
    throw std::invalid_argument("accuracy: empty input or size mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (argmax_class(predictions[i]) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

// Equal-width binning of [0,1]; intervals are [left, right) except the last
// bin, which is closed so that probability 1.0 lands in it.
struct BinningSpec {
  int n_bins = 20;

  std::size_t bin_index(double p) const {
    const int idx = static_cast<int>(p * n_bins);
    return static_cast<std::size_t>(std::clamp(idx, 0, n_bins - 1));
  }
  double left(std::size_t b) const { return static_cast<double>(b) / n_bins; }
  double right(std::size_t b) const {
    return static_cast<double>(b + 1) / n_bins;
  }
  void validate() const {
    if (n_bins <= 0) throw std::invalid_argument("binning: n_bins must be positive");
  }
};

// Per-class ECE averaged over classes. For each class j, rows are bucketed
// by the predicted probability of j; each nonempty bin contributes its
// weighted gap between observed class frequency and mean prediction.
inline double ece(const ProbMatrix& predictions, const std::vector<int>& labels,
                  const BinningSpec& binning = {}) {
  binning.validate();
  if (predictions.empty() || predictions.size() != labels.size())
    throw std::invalid_argument("ece: empty input or size mismatch");
  const std::size_t n = predictions.size();
  const std::size_t k = predictions[0].size();
  const std::size_t m = static_cast<std::size_t>(binning.n_bins);
  double total = 0.0;
  std::vector<double> sum_pred(m), sum_label(m);
  std::vector<std::size_t> count(m);
  for (std::size_t j = 0; j < k; ++j) {
    std::fill(sum_pred.begin(), sum_pred.end(), 0.0);
    std::fill(sum_label.begin(), sum_label.end(), 0.0);
    std::fill(count.begin(), count.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t b = binning.bin_index(predictions[i][j]);
      sum_pred[b] += predictions[i][j];
      sum_label[b] += (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
      ++count[b];
    }
    double ece_j = 0.0;
    for (std::size_t b = 0; b < m; ++b) {
      if (count[b] == 0) continue;
      const double freq = sum_label[b] / static_cast<double>(count[b]);
      const double mean_pred = sum_pred[b] / static_cast<double>(count[b]);
      ece_j += (static_cast<double>(count[b]) / static_cast<double>(n)) *
               std::abs(freq - mean_pred);
    }
    total += ece_j;
  }
  return total / static_cast<double>(k);
}

// Expected score s(p,q), entropy e(q) = s(q,q) and divergence d = s - e of
// a proper scoring rule. For Brier, d is the squared distance and e the
// Gini index; for log-loss, d is KL divergence and e Shannon entropy.
struct ScoreComponents {
  double score = 0.0;       // s(p, q)
  double divergence = 0.0;  // d(p, q) = s(p, q) - e(q)
  double entropy = 0.0;     // e(q)
};

inline ScoreComponents score_components(std::span<const double> p,
                                        std::span<const double> q, Loss loss) {
  if (p.size() != q.size())
    throw std::invalid_argument("score_components: dimension mismatch");
  ScoreComponents out;
  if (loss == Loss::brier) {
    double sq_p = 0.0, sq_q = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      sq_p += p[j] * p[j];
      sq_q += q[j] * q[j];
      dot += p[j] * q[j];
    }
    out.score = sq_p - 2.0 * dot + 1.0;
    out.entropy = 1.0 - sq_q;
  } else {
    double s = 0.0, e = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      s += q[j] * -std::log(std::max(p[j], kLogLossFloor));
      if (q[j] > 0.0) e += q[j] * -std::log(q[j]);
    }
    out.score = s;
    out.entropy = e;
  }
  out.divergence = out.score - out.entropy;
  return out;
}

// Key for grouping rows that received the same prediction; entries are
// compared after rounding to 12 decimal places.
inline std::vector<long long> rounded_key(std::span<const double> p) {
  std::vector<long long> key(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    key[j] = std::llround(p[j] * 1e12);
  }
  return key;
}

// Rows with an identical prediction vector form one group; every row of a
// group is assigned the group's mean true posterior. This is the empirical
// stand-in for the calibrated distribution, so it is available only when
// true posteriors are known.
inline ProbMatrix calibrated_groups(const ProbMatrix& predictions,
                                    const ProbMatrix& true_posteriors) {
  if (predictions.size() != true_posteriors.size() || predictions.empty())
    throw std::invalid_argument("calibrated_groups: empty input or size mismatch");
  std::map<std::vector<long long>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    groups[rounded_key(predictions[i])].push_back(i);
  }
  ProbMatrix c(predictions.size());
  for (const auto& [key, rows] : groups) {
    const std::size_t k = true_posteriors[rows.front()].size();
    ProbVector mean(k, 0.0);
    for (std::size_t i : rows) {
      for (std::size_t j = 0; j < k; ++j) mean[j] += true_posteriors[i][j];
    }
    for (double& v : mean) v /= static_cast<double>(rows.size());
    for (std::size_t i : rows) c[i] = mean;
  }
  return c;
}

struct Decomposition {
  double cl = 0.0;  // calibration loss, mean d(p, c)
  double gl = 0.0;  // grouping loss, mean d(c, q)
  double il = 0.0;  // irreducible loss, mean e(q)
  double total() const { return cl + gl + il; }
};

inline Decomposition decompose(const ProbMatrix& predictions,
                               const ProbMatrix& c_vectors,
                               const ProbMatrix& true_posteriors, Loss loss) {
  const std::size_t n = predictions.size();
  if (n == 0 || c_vectors.size() != n || true_posteriors.size() != n)
    throw std::invalid_argument("decompose: empty input or size mismatch");
  Decomposition out;
  for (std::size_t i = 0; i < n; ++i) {
    out.cl += score_components(predictions[i], c_vectors[i], loss).divergence;
    out.gl += score_components(c_vectors[i], true_posteriors[i], loss).divergence;
    out.il += score_components(true_posteriors[i], true_posteriors[i], loss).entropy;
  }
  out.cl /= static_cast<double>(n);
  out.gl /= static_cast<double>(n);
  out.il /= static_cast<double>(n);
  return out;
}

// Shannon entropy (base 2) of the histogram of positive-class probabilities.
// A low value means predictions pile up in few bins, which inflates the
// statistical stability of ECE for that predictor.
inline double bin_entropy(const ProbMatrix& predictions,
                          const BinningSpec& binning = {}) {
  binning.validate();
  if (predictions.empty())
    throw std::invalid_argument("bin_entropy: empty input");
  if (predictions[0].size() != 2)
    throw std::invalid_argument("bin_entropy: defined for binary predictions");
  std::vector<std::size_t> count(static_cast<std::size_t>(binning.n_bins), 0);
  for (const auto& p : predictions) ++count[binning.bin_index(p[1])];
  double h = 0.0;
  const double n = static_cast<double>(predictions.size());
  for (std::size_t c : count) {
    if (c == 0) continue;
    const double f = static_cast<double>(c) / n;
    h -= f * std::log2(f);
  }
  return h;
}

struct ReliabilityBin {
  double bin_left = 0.0;
  double bin_right = 0.0;
  double mean_pred = 0.0;
  double observed = 0.0;  // class frequency, or mean true posterior
  std::size_t count = 0;
};

enum class ReliabilityRef { labels, posteriors };

// Per-bin reliability records for one class (default: class 1), against
// either observed labels or known true posteriors.
inline std::vector<ReliabilityBin> reliability_data(
    const ProbMatrix& predictions, const std::vector<int>& labels,
    const ProbMatrix& true_posteriors, ReliabilityRef ref,
    const BinningSpec& binning = {}, int class_index = 1) {
  binning.validate();
  if (ref == ReliabilityRef::posteriors && true_posteriors.size() != predictions.size())
    throw std::invalid_argument("reliability_data: posteriors missing");
  if (ref == ReliabilityRef::labels && labels.size() != predictions.size())
    throw std::invalid_argument("reliability_data: labels missing");
  const std::size_t m = static_cast<std::size_t>(binning.n_bins);
  const std::size_t j = static_cast<std::size_t>(class_index);
  std::vector<double> sum_pred(m, 0.0), sum_obs(m, 0.0);
  std::vector<std::size_t> count(m, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (j >= predictions[i].size())
      throw std::invalid_argument("reliability_data: class index out of range");
    const std::size_t b = binning.bin_index(predictions[i][j]);
    sum_pred[b] += predictions[i][j];
    sum_obs[b] += (ref == ReliabilityRef::labels)
                      ? ((static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0)
                      : true_posteriors[i][j];
    ++count[b];
  }
  std::vector<ReliabilityBin> out;
  for (std::size_t b = 0; b < m; ++b) {
    if (count[b] == 0) continue;
    out.push_back({binning.left(b), binning.right(b),
                   sum_pred[b] / static_cast<double>(count[b]),
                   sum_obs[b] / static_cast<double>(count[b]), count[b]});
  }
  return out;
}

struct MetricReport {
  double accuracy = 0.0;
  double brier = 0.0;
  double log_loss = 0.0;
  double ece = 0.0;
  int ece_bins = 20;
  std::optional<double> tce;
  std::optional<Decomposition> brier_decomposition;
  std::optional<double> bin_entropy;
};

// Full report over a prediction matrix. TCE and the Brier decomposition are
// filled in when true posteriors are supplied; bin entropy only for binary.
inline MetricReport evaluate(const ProbMatrix& predictions,
                             const std::vector<int>& labels,
                             const ProbMatrix& true_posteriors = {},
                             const BinningSpec& binning = {}) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw std::invalid_argument("evaluate: empty input or size mismatch");
  MetricReport r;
  r.ece_bins = binning.n_bins;
  r.accuracy = accuracy(predictions, labels);
  double b = 0.0, ll = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    b += brier(predictions[i], labels[i]);
    ll += log_loss(predictions[i], labels[i]);
  }
  r.brier = b / static_cast<double>(predictions.size());
  r.log_loss = ll / static_cast<double>(predictions.size());
  r.ece = ece(predictions, labels, binning);
  if (!true_posteriors.empty()) {
    double t = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
      t += tce(predictions[i], true_posteriors[i]);
    r.tce = t / static_cast<double>(predictions.size());
    const ProbMatrix c = calibrated_groups(predictions, true_posteriors);
    r.brier_decomposition = decompose(predictions, c, true_posteriors, Loss::brier);
  }
  if (!predictions.empty() && predictions[0].size() == 2)
    r.bin_entropy = bin_entropy(predictions, binning);
  return r;
}

}  // namespace rfcal
