#pragma once

// Versioned JSON persistence for trained forests and fitted calibrators.
// Trees serialize as nested objects; the loader rejects documents with a
// newer major format version.

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "rfcal/bench.hpp"
#include "rfcal/calibrate.hpp"
#include "rfcal/forest.hpp"

namespace rfcal {

inline constexpr const char* kModelFormatVersion = "1.0";

struct ModelDocument {
  RandomForestModel forest;
  std::optional<FittedCalibrator> calibrator;
};

namespace detail {

using nlohmann::json;

inline json node_to_json(const DecisionTree& tree, std::size_t index) {
  const TreeNode& node = tree.nodes[index];
  json j;
  j["counts"] = node.class_counts;
  j["n"] = node.n_samples;
  if (!node.is_leaf()) {
    j["feature"] = node.feature;
    j["threshold"] = node.threshold;
    j["left"] = node_to_json(tree, static_cast<std::size_t>(node.left));
    j["right"] = node_to_json(tree, static_cast<std::size_t>(node.right));
  }
  return j;
}

inline int node_from_json(const json& j, DecisionTree& tree) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes.back().class_counts = j.at("counts").get<std::vector<double>>();
  tree.nodes.back().n_samples = j.at("n").get<std::size_t>();
  if (j.contains("feature")) {
    const int feature = j.at("feature").get<int>();
    const double threshold = j.at("threshold").get<double>();
    const int left = node_from_json(j.at("left"), tree);
    const int right = node_from_json(j.at("right"), tree);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = feature;
    node.threshold = threshold;
    node.left = left;
    node.right = right;
  }
  return index;
}

inline std::string criterion_name(Criterion c) {
  return c == Criterion::gini ? "gini" : "entropy";
}
inline Criterion criterion_from(const std::string& s) {
  if (s == "gini") return Criterion::gini;
  if (s == "entropy") return Criterion::entropy;
  throw std::invalid_argument("unknown criterion '" + s + "'");
}

inline std::string class_weight_name(ClassWeight w) {
  switch (w) {
    case ClassWeight::none: return "none";
    case ClassWeight::balanced: return "balanced";
    case ClassWeight::balanced_subsample: return "balanced_subsample";
  }
  return "none";
}
inline ClassWeight class_weight_from(const std::string& s) {
  if (s == "none") return ClassWeight::none;
  if (s == "balanced") return ClassWeight::balanced;
  if (s == "balanced_subsample") return ClassWeight::balanced_subsample;
  throw std::invalid_argument("unknown class_weight '" + s + "'");
}

inline std::string tree_kind_name(TreeKind k) {
  return k == TreeKind::pet ? "pet" : "ct";
}
inline TreeKind tree_kind_from(const std::string& s) {
  if (s == "pet") return TreeKind::pet;
  if (s == "ct") return TreeKind::ct;
  throw std::invalid_argument("unknown tree_kind '" + s + "'");
}

inline json max_features_to_json(const MaxFeatures& mf) {
  switch (mf.mode) {
    case MaxFeatures::Mode::sqrt_mode: return "sqrt";
    case MaxFeatures::Mode::log2_mode: return "log2";
    case MaxFeatures::Mode::all: return "all";
    case MaxFeatures::Mode::fixed: return mf.fixed_k;
  }
  return "sqrt";
}
inline MaxFeatures max_features_from_json(const json& j) {
  MaxFeatures mf;
  if (j.is_number_integer()) {
    mf.mode = MaxFeatures::Mode::fixed;
    mf.fixed_k = j.get<int>();
    return mf;
  }
  const std::string s = j.get<std::string>();
  if (s == "sqrt") mf.mode = MaxFeatures::Mode::sqrt_mode;
  else if (s == "log2") mf.mode = MaxFeatures::Mode::log2_mode;
  else if (s == "all") mf.mode = MaxFeatures::Mode::all;
  else throw std::invalid_argument("unknown max_features '" + s + "'");
  return mf;
}

inline json config_to_json(const ForestConfig& cfg) {
  json j;
  j["n_trees"] = cfg.n_trees;
  j["criterion"] = criterion_name(cfg.criterion);
  j["max_depth"] = cfg.max_depth ? json(*cfg.max_depth) : json(nullptr);
  j["min_samples_split"] = cfg.min_samples_split;
  j["min_samples_leaf"] = cfg.min_samples_leaf;
  j["max_features"] = max_features_to_json(cfg.max_features);
  j["class_weight"] = class_weight_name(cfg.class_weight);
  j["bootstrap"] = cfg.bootstrap;
  j["laplace"] = cfg.laplace;
  j["tree_kind"] = tree_kind_name(cfg.tree_kind);
  j["seed"] = cfg.seed;
  return j;
}

inline ForestConfig config_from_json(const json& j) {
  ForestConfig cfg;
  cfg.n_trees = j.at("n_trees").get<int>();
  cfg.criterion = criterion_from(j.at("criterion").get<std::string>());
  if (!j.at("max_depth").is_null()) cfg.max_depth = j.at("max_depth").get<int>();
  cfg.min_samples_split = j.at("min_samples_split").get<int>();
  cfg.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  cfg.max_features = max_features_from_json(j.at("max_features"));
  cfg.class_weight = class_weight_from(j.at("class_weight").get<std::string>());
  cfg.bootstrap = j.at("bootstrap").get<bool>();
  cfg.laplace = j.at("laplace").get<bool>();
  cfg.tree_kind = tree_kind_from(j.at("tree_kind").get<std::string>());
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

inline json forest_to_json(const RandomForestModel& model) {
  json j;
  j["config"] = config_to_json(model.config);
  j["n_classes"] = model.n_classes;
  j["n_features"] = model.n_features;
  j["n_train_rows"] = model.n_train_rows;
  json trees = json::array();
  for (const auto& tree : model.trees) trees.push_back(node_to_json(tree, 0));
  j["trees"] = std::move(trees);
  j["bootstrap_indices"] = model.bootstrap_indices;
  j["oob_indices"] = model.oob_indices;
  return j;
}

inline RandomForestModel forest_from_json(const json& j) {
  RandomForestModel model;
  model.config = config_from_json(j.at("config"));
  model.n_classes = j.at("n_classes").get<int>();
  model.n_features = j.at("n_features").get<std::size_t>();
  model.n_train_rows = j.at("n_train_rows").get<std::size_t>();
  for (const auto& tree_json : j.at("trees")) {
    DecisionTree tree;
    node_from_json(tree_json, tree);
    model.trees.push_back(std::move(tree));
  }
  model.bootstrap_indices =
      j.at("bootstrap_indices").get<std::vector<std::vector<std::size_t>>>();
  model.oob_indices =
      j.at("oob_indices").get<std::vector<std::vector<std::size_t>>>();
  if (model.bootstrap_indices.size() != model.trees.size() ||
      model.oob_indices.size() != model.trees.size())
    throw std::invalid_argument("model json: index sets do not match tree count");
  return model;
}

inline json isotonic_to_json(const IsotonicModel& m) {
  return json{{"breakpoints", m.breakpoints}, {"values", m.values}};
}
inline IsotonicModel isotonic_from_json(const json& j) {
  IsotonicModel m;
  m.breakpoints = j.at("breakpoints").get<std::vector<double>>();
  m.values = j.at("values").get<std::vector<double>>();
  return m;
}

inline json calibrator_to_json(const FittedCalibrator& c) {
  json j;
  j["method"] = c.method;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PlattModel>) {
          j["gamma"] = m.gamma;
          j["delta"] = m.delta;
        } else if constexpr (std::is_same_v<T, BetaModel>) {
          j["a"] = m.a;
          j["b"] = m.b;
          j["c"] = m.c;
        } else if constexpr (std::is_same_v<T, IsotonicModel>) {
          j["iso"] = isotonic_to_json(m);
        } else if constexpr (std::is_same_v<T, VennAbersModel>) {
          json samples = json::array();
          for (const auto& s : m.samples)
            samples.push_back(json::array({s.score, s.label}));
          j["samples"] = std::move(samples);
        } else if constexpr (std::is_same_v<T, PPAModel>) {
          j["r"] = m.r;
        } else if constexpr (std::is_same_v<T, CurtailModel>) {
          j["v"] = m.v;
        } else {
          j["normalized_scores"] = m.normalized_scores;
          j["iso"] = isotonic_to_json(m.iso);
          j["calib_scores"] = m.calib_scores;
          j["rank_forest"] = forest_to_json(m.rank_forest);
        }
      },
      c.model);
  return j;
}

inline FittedCalibrator calibrator_from_json(const json& j) {
  FittedCalibrator c;
  c.method = j.at("method").get<std::string>();
  if (c.method == "platt") {
    c.model = PlattModel{j.at("gamma").get<double>(), j.at("delta").get<double>()};
  } else if (c.method == "beta") {
    c.model = BetaModel{j.at("a").get<double>(), j.at("b").get<double>(),
                        j.at("c").get<double>()};
  } else if (c.method == "iso") {
    c.model = isotonic_from_json(j.at("iso"));
  } else if (c.method == "va") {
    VennAbersModel m;
    for (const auto& s : j.at("samples"))
      m.samples.push_back({s.at(0).get<double>(), s.at(1).get<int>()});
    c.model = std::move(m);
  } else if (c.method == "ppa") {
    c.model = PPAModel{j.at("r").get<double>()};
  } else if (c.method == "ct") {
    c.model = CurtailModel{j.at("v").get<std::size_t>()};
  } else if (c.method == "rank") {
    RankModel m;
    m.normalized_scores = j.at("normalized_scores").get<bool>();
    m.iso = isotonic_from_json(j.at("iso"));
    m.calib_scores = j.at("calib_scores").get<std::vector<std::vector<double>>>();
    m.rank_forest = forest_from_json(j.at("rank_forest"));
    c.model = std::move(m);
  } else {
    throw std::invalid_argument("model json: unknown calibrator method '" +
                                c.method + "'");
  }
  return c;
}

inline void check_format_version(const json& j, const std::string& path) {
  const std::string version = j.at("format_version").get<std::string>();
  int major = 0;
  try {
    major = std::stoi(version.substr(0, version.find('.')));
  } catch (...) {
    throw std::invalid_argument(path + ": malformed format_version '" + version +
                                "'");
  }
  const int supported = std::stoi(
      std::string(kModelFormatVersion)
          .substr(0, std::string(kModelFormatVersion).find('.')));
  if (major > supported)
    throw std::invalid_argument(path + ": format version " + version +
                                " is newer than supported " +
                                kModelFormatVersion);
}

}  // namespace detail

inline void save_model(const ModelDocument& doc, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = "rfcal_model";
  j["forest"] = detail::forest_to_json(doc.forest);
  j["calibrator"] = doc.calibrator
                        ? detail::calibrator_to_json(*doc.calibrator)
                        : nlohmann::json(nullptr);
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline ModelDocument load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": invalid JSON (" + e.what() + ")");
  }
  try {
    detail::check_format_version(j, path);
    if (j.at("kind").get<std::string>() != "rfcal_model")
      throw std::invalid_argument(path + ": not a model document");
    ModelDocument doc;
    doc.forest = detail::forest_from_json(j.at("forest"));
    if (!j.at("calibrator").is_null())
      doc.calibrator = detail::calibrator_from_json(j.at("calibrator"));
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": malformed model document (" +
                                std::string(e.what()) + ")");
  }
}

}  // namespace rfcal
