#pragma once

// CSV ingestion and emission. Datasets use a header row with numeric
// feature columns, a label column named "label" (otherwise the last
// non-posterior column), and optional q0/q1 true-posterior columns.
// Doubles are written in shortest round-trip form, so save/load cycles are
// bit exact.

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfcal/bench.hpp"
#include "rfcal/dataset.hpp"
#include "rfcal/metrics.hpp"

namespace rfcal {

inline std::string format_double(double v) {
  char buffer[32];
  const auto res = std::to_chars(buffer, buffer + sizeof(buffer), v);
  return std::string(buffer, res.ptr);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

inline double parse_number(const std::string& field, std::size_t line_no,
                           const std::string& path) {
  const std::string text = trim(field);
  if (text.empty())
    throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                ": empty cell");
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || !std::isfinite(v))
    throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                ": non-numeric cell '" + text + "'");
  return v;
}

}  // namespace detail

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument(path + ": empty file, header row required");

  const auto header = detail::split_csv_line(line);
  int label_col = -1, q0_col = -1, q1_col = -1;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = detail::trim(header[c]);
    if (name == "label") {
      if (label_col >= 0)
        throw std::invalid_argument(path + ": duplicate label column");
      label_col = static_cast<int>(c);
    } else if (name == "q0") {
      q0_col = static_cast<int>(c);
    } else if (name == "q1") {
      q1_col = static_cast<int>(c);
    }
  }
  if ((q0_col >= 0) != (q1_col >= 0))
    throw std::invalid_argument(path + ": q0 and q1 must appear together");
  if (label_col < 0) {
    // last column that is not a posterior column
    for (int c = static_cast<int>(header.size()) - 1; c >= 0; --c) {
      if (c != q0_col && c != q1_col) {
        label_col = c;
        break;
      }
    }
  }
  if (label_col < 0)
    throw std::invalid_argument(path + ": no label column found");
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (static_cast<int>(c) == label_col || static_cast<int>(c) == q0_col ||
        static_cast<int>(c) == q1_col)
      continue;
    feature_cols.push_back(c);
  }
  if (feature_cols.empty())
    throw std::invalid_argument(path + ": no feature columns");

  Dataset data;
  data.n_features = feature_cols.size();
  const bool has_q = q0_col >= 0;
  int max_label = -1;
  std::size_t line_no = 1;
  std::vector<double> row(feature_cols.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected " + std::to_string(header.size()) +
                                  " fields, got " + std::to_string(fields.size()));
    for (std::size_t j = 0; j < feature_cols.size(); ++j)
      row[j] = detail::parse_number(fields[feature_cols[j]], line_no, path);
    const double label_value =
        detail::parse_number(fields[static_cast<std::size_t>(label_col)], line_no, path);
    const int label = static_cast<int>(label_value);
    if (label < 0 || static_cast<double>(label) != label_value)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": label must be a nonnegative integer");
    data.push_row(row, label);
    max_label = std::max(max_label, label);
    if (has_q) {
      const double q0 =
          detail::parse_number(fields[static_cast<std::size_t>(q0_col)], line_no, path);
      const double q1 =
          detail::parse_number(fields[static_cast<std::size_t>(q1_col)], line_no, path);
      data.true_posteriors.push_back(q0);
      data.true_posteriors.push_back(q1);
    }
  }
  if (data.n_rows == 0)
    throw std::invalid_argument(path + ": no data rows");
  data.n_classes = max_label + 1;
  if (data.n_classes < 2)
    throw std::invalid_argument(path + ": need at least two classes");
  if (has_q && data.n_classes != 2)
    throw std::invalid_argument(path + ": posterior columns require binary labels");

  // labels must cover 0..K-1 with no gaps
  std::vector<bool> present(static_cast<std::size_t>(data.n_classes), false);
  for (int y : data.labels) present[static_cast<std::size_t>(y)] = true;
  for (std::size_t k = 0; k < present.size(); ++k) {
    if (!present[k])
      throw std::invalid_argument(path + ": label gap, class " + std::to_string(k) +
                                  " never occurs");
  }
  data.validate();
  return data;
}

inline void save_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  for (std::size_t j = 0; j < data.n_features; ++j) out << "f" << j << ",";
  out << "label";
  if (data.has_posteriors()) out << ",q0,q1";
  out << "\n";
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    const auto row = data.row(i);
    for (double v : row) out << format_double(v) << ",";
    out << data.labels[i];
    if (data.has_posteriors()) {
      const auto q = data.posterior(i);
      out << "," << format_double(q[0]) << "," << format_double(q[1]);
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Results, reliability and sweep tables
// ---------------------------------------------------------------------------

inline void save_results_csv(const ResultsTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out << "dataset,method,repeat,fold,metric,value\n";
  for (const auto& rec : table.records) {
    out << rec.dataset << "," << rec.method << "," << rec.repeat << ","
        << rec.fold << "," << rec.metric << "," << format_double(rec.value)
        << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline ResultsTable load_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      detail::trim(line) != "dataset,method,repeat,fold,metric,value")
    throw std::invalid_argument(path + ": not a results table (bad header)");
  ResultsTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 6)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected 6 fields");
    ResultRecord rec;
    rec.dataset = fields[0];
    rec.method = fields[1];
    rec.repeat = static_cast<int>(detail::parse_number(fields[2], line_no, path));
    rec.fold = static_cast<int>(detail::parse_number(fields[3], line_no, path));
    rec.metric = fields[4];
    rec.value = detail::parse_number(fields[5], line_no, path);
    table.records.push_back(std::move(rec));
  }
  return table;
}

inline void save_reliability_csv(const std::vector<ReliabilityBin>& bins,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out << "bin_left,bin_right,mean_pred,observed,count\n";
  for (const auto& b : bins) {
    out << format_double(b.bin_left) << "," << format_double(b.bin_right) << ","
        << format_double(b.mean_pred) << "," << format_double(b.observed) << ","
        << b.count << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline void save_sweep_csv(const std::vector<SweepRow>& rows,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out << "sweep,x,method,repeat,metric,value\n";
  for (const auto& row : rows) {
    out << row.sweep << "," << format_double(row.x) << "," << row.method << ","
        << row.repeat << "," << row.metric << "," << format_double(row.value)
        << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace rfcal
