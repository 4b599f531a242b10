#pragma once

// Row-major tabular dataset with integer class labels. Synthetic generators
// can attach the true per-row class posterior, which unlocks the
// instance-wise calibration metrics.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfcal {

struct Dataset {
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<double> features;  // n_rows * n_features, row-major
  std::vector<int> labels;       // values in {0 .. n_classes-1}
  int n_classes = 0;
  std::vector<double> true_posteriors;  // empty, or n_rows * n_classes

  bool has_posteriors() const { return !true_posteriors.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * n_features, n_features};
  }

  std::span<const double> posterior(std::size_t i) const {
    return {true_posteriors.data() + i * static_cast<std::size_t>(n_classes),
            static_cast<std::size_t>(n_classes)};
  }

  void push_row(std::span<const double> x, int label) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
    ++n_rows;
  }

  // Throws std::invalid_argument on any violated invariant.
  void validate() const {
    if (n_classes < 2) throw std::invalid_argument("dataset: n_classes must be >= 2");
    if (features.size() != n_rows * n_features)
      throw std::invalid_argument("dataset: feature matrix is not rectangular");
    if (labels.size() != n_rows)
      throw std::invalid_argument("dataset: label count does not match row count");
    for (std::size_t i = 0; i < n_rows; ++i) {
      if (labels[i] < 0 || labels[i] >= n_classes)
        throw std::invalid_argument("dataset: label out of range at row " +
                                    std::to_string(i));
    }
    for (double v : features) {
      if (!std::isfinite(v))
        throw std::invalid_argument("dataset: non-finite feature value");
    }
    if (!true_posteriors.empty()) {
      if (true_posteriors.size() != n_rows * static_cast<std::size_t>(n_classes))
        throw std::invalid_argument("dataset: posterior matrix has wrong shape");
      for (std::size_t i = 0; i < n_rows; ++i) {
        double sum = 0.0;
        for (double q : posterior(i)) {
          if (!(q >= 0.0 && q <= 1.0))
            throw std::invalid_argument("dataset: posterior entry outside [0,1] at row " +
                                        std::to_string(i));
          sum += q;
        }
        if (std::abs(sum - 1.0) > 1e-9)
          throw std::invalid_argument("dataset: posterior does not sum to 1 at row " +
                                      std::to_string(i));
      }
    }
  }

  // Rows selected by index, preserving posteriors when present.
  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.n_features = n_features;
    out.n_classes = n_classes;
    out.features.reserve(indices.size() * n_features);
    out.labels.reserve(indices.size());
    if (has_posteriors())
      out.true_posteriors.reserve(indices.size() * static_cast<std::size_t>(n_classes));
    for (std::size_t i : indices) {
      const auto r = row(i);
      out.features.insert(out.features.end(), r.begin(), r.end());
      out.labels.push_back(labels[i]);
      if (has_posteriors()) {
        const auto q = posterior(i);
        out.true_posteriors.insert(out.true_posteriors.end(), q.begin(), q.end());
      }
    }
    out.n_rows = indices.size();
    return out;
  }
};

}  // namespace rfcal
