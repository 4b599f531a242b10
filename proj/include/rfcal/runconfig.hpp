#pragma once

// Sectioned key=value run configuration. Lines are `key = value` under
// `[section]` headers; `#` starts a comment. Unknown sections or keys are
// rejected so typos fail loudly. Command-line flags override file values.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfcal/bench.hpp"
#include "rfcal/forest.hpp"

namespace rfcal {

// String converters shared by the config file and CLI flags.
inline Criterion parse_criterion(const std::string& s) {
  if (s == "gini") return Criterion::gini;
  if (s == "entropy") return Criterion::entropy;
  throw std::invalid_argument("criterion must be gini or entropy, got '" + s + "'");
}

inline MaxFeatures parse_max_features(const std::string& s) {
  MaxFeatures mf;
  if (s == "sqrt") {
    mf.mode = MaxFeatures::Mode::sqrt_mode;
  } else if (s == "log2") {
    mf.mode = MaxFeatures::Mode::log2_mode;
  } else if (s == "all" || s == "none") {  // "none" disables subsetting
    mf.mode = MaxFeatures::Mode::all;
  } else {
    try {
      mf.fixed_k = std::stoi(s);
    } catch (...) {
      throw std::invalid_argument("max_features must be sqrt, log2, all or a count");
    }
    mf.mode = MaxFeatures::Mode::fixed;
  }
  return mf;
}

inline ClassWeight parse_class_weight(const std::string& s) {
  if (s == "none") return ClassWeight::none;
  if (s == "balanced") return ClassWeight::balanced;
  if (s == "balanced_subsample") return ClassWeight::balanced_subsample;
  throw std::invalid_argument(
      "class_weight must be none, balanced or balanced_subsample");
}

inline TreeKind parse_tree_kind(const std::string& s) {
  if (s == "pet") return TreeKind::pet;
  if (s == "ct") return TreeKind::ct;
  throw std::invalid_argument("tree_kind must be pet or ct");
}

inline CalibSource parse_source(const std::string& s) {
  if (s == "fold") return CalibSource::heldout_fold;
  if (s == "oob") return CalibSource::oob;
  throw std::invalid_argument("source must be fold or oob");
}

inline std::vector<Method> parse_methods(const std::string& csv) {
  std::vector<Method> methods;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    const auto begin = token.find_first_not_of(" \t");
    if (begin == std::string::npos) continue;
    const auto end = token.find_last_not_of(" \t");
    const std::string name = token.substr(begin, end - begin + 1);
    const auto m = parse_method(name);
    if (!m) {
      std::string valid;
      for (const auto& [method, n] : method_names()) valid += n + " ";
      throw std::invalid_argument("unknown method '" + name + "', valid: " + valid);
    }
    methods.push_back(*m);
  }
  if (methods.empty()) throw std::invalid_argument("empty method list");
  return methods;
}

class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path);
    RunConfig cfg;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const std::string text = trim(line);
      if (text.empty()) continue;
      if (text.front() == '[') {
        if (text.back() != ']')
          throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                      ": malformed section header");
        section = trim(text.substr(1, text.size() - 2));
        if (!known_sections().count(section))
          throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                      ": unknown section [" + section + "]");
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                    ": expected key = value");
      if (section.empty())
        throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                    ": key outside any section");
      const std::string key = trim(text.substr(0, eq));
      const std::string value = trim(text.substr(eq + 1));
      if (!known_keys().count(section + "." + key))
        throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                    ": unknown key '" + key + "' in [" + section +
                                    "]");
      if (cfg.values_.count(section + "." + key))
        throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                    ": duplicate key '" + key + "'");
      cfg.values_[section + "." + key] = value;
    }
    return cfg;
  }

  std::optional<std::string> get(const std::string& section,
                                 const std::string& key) const {
    const auto it = values_.find(section + "." + key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  // Applies `forest.*` keys onto a config; CLI flags are applied afterwards
  // and therefore win.
  void apply_forest(ForestConfig& cfg) const {
    if (const auto v = get("forest", "trees")) cfg.n_trees = to_int(*v, "trees");
    if (const auto v = get("forest", "criterion")) cfg.criterion = parse_criterion(*v);
    if (const auto v = get("forest", "max_depth")) {
      if (*v == "none") cfg.max_depth.reset();
      else cfg.max_depth = to_int(*v, "max_depth");
    }
    if (const auto v = get("forest", "min_samples_split"))
      cfg.min_samples_split = to_int(*v, "min_samples_split");
    if (const auto v = get("forest", "min_samples_leaf"))
      cfg.min_samples_leaf = to_int(*v, "min_samples_leaf");
    if (const auto v = get("forest", "max_features"))
      cfg.max_features = parse_max_features(*v);
    if (const auto v = get("forest", "class_weight"))
      cfg.class_weight = parse_class_weight(*v);
    if (const auto v = get("forest", "bootstrap")) cfg.bootstrap = to_bool(*v, "bootstrap");
    if (const auto v = get("forest", "laplace")) cfg.laplace = to_bool(*v, "laplace");
    if (const auto v = get("forest", "tree_kind")) cfg.tree_kind = parse_tree_kind(*v);
  }

  void apply_experiment(ExperimentConfig& cfg) const {
    if (const auto v = get("data", "datasets")) cfg.dataset_ids = to_list(*v);
    if (const auto v = get("experiment", "methods")) cfg.methods = parse_methods(*v);
    if (const auto v = get("experiment", "folds")) cfg.folds = to_int(*v, "folds");
    if (const auto v = get("experiment", "repeats")) cfg.repeats = to_int(*v, "repeats");
    if (const auto v = get("experiment", "source")) cfg.source = parse_source(*v);
    if (const auto v = get("experiment", "ece_bins"))
      cfg.ece_bins = to_int(*v, "ece_bins");
    if (const auto v = get("experiment", "search_iterations"))
      cfg.search_iterations = to_int(*v, "search_iterations");
    if (const auto v = get("experiment", "research_per_fold"))
      cfg.research_per_fold = to_bool(*v, "research_per_fold");
    if (const auto v = get("run", "seed")) cfg.seed = to_u64(*v, "seed");
    apply_forest(cfg.base_forest);
  }

  static int to_int(const std::string& v, const std::string& key) {
    try {
      std::size_t used = 0;
      const int x = std::stoi(v, &used);
      if (used != v.size()) throw std::invalid_argument("");
      return x;
    } catch (...) {
      throw std::invalid_argument("config key " + key + ": '" + v +
                                  "' is not an integer");
    }
  }

  static std::uint64_t to_u64(const std::string& v, const std::string& key) {
    try {
      std::size_t used = 0;
      const unsigned long long x = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument("");
      return static_cast<std::uint64_t>(x);
    } catch (...) {
      throw std::invalid_argument("config key " + key + ": '" + v +
                                  "' is not an unsigned integer");
    }
  }

  static bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw std::invalid_argument("config key " + key + ": '" + v +
                                "' is not a boolean");
  }

  static std::vector<std::string> to_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string token;
    while (std::getline(ss, token, ',')) {
      const std::string t = trim(token);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
  }

  static const std::set<std::string>& known_sections() {
    static const std::set<std::string> sections{"data", "forest", "experiment",
                                                "output", "run"};
    return sections;
  }

  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "data.datasets",
        "data.train",
        "data.test",
        "data.calib",
        "forest.trees",
        "forest.criterion",
        "forest.max_depth",
        "forest.min_samples_split",
        "forest.min_samples_leaf",
        "forest.max_features",
        "forest.class_weight",
        "forest.bootstrap",
        "forest.laplace",
        "forest.tree_kind",
        "experiment.methods",
        "experiment.folds",
        "experiment.repeats",
        "experiment.source",
        "experiment.ece_bins",
        "experiment.search_iterations",
        "experiment.research_per_fold",
        "output.results",
        "output.summary",
        "run.seed",
        "run.threads",
    };
    return keys;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace rfcal
