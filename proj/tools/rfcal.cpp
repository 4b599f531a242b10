// rfcal: train random forests, fit post-hoc calibrators, score calibration
// metrics, and run the benchmark and sweep protocols. Outputs are plot-ready
// CSV/JSON; nothing is rendered and no input file is ever modified.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rfcal/bench.hpp"
#include "rfcal/calibrate.hpp"
#include "rfcal/csv.hpp"
#include "rfcal/forest.hpp"
#include "rfcal/metrics.hpp"
#include "rfcal/model_json.hpp"
#include "rfcal/runconfig.hpp"
#include "rfcal/stats.hpp"
#include "rfcal/sweeps.hpp"
#include "rfcal/synthgen.hpp"

namespace {

using namespace rfcal;
using nlohmann::json;

constexpr const char* kDocFormatVersion = "1.0";

std::pair<double, double> parse_range(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos)
    throw std::invalid_argument("range must be 'lo,hi', got '" + text + "'");
  return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) out.push_back(std::stoi(token));
  }
  if (out.empty()) throw std::invalid_argument("empty integer list");
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) out.push_back(std::stod(token));
  }
  if (out.empty()) throw std::invalid_argument("empty number list");
  return out;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

// Forest options shared by `train` and available in config files.
struct ForestFlags {
  std::optional<int> trees, max_depth, min_split, min_leaf;
  std::optional<std::string> criterion, max_features, class_weight, tree_kind;
  std::optional<bool> bootstrap, laplace;

  void attach(CLI::App* cmd) {
    cmd->add_option("--trees", trees, "number of trees");
    cmd->add_option("--criterion", criterion, "split criterion: gini|entropy");
    cmd->add_option("--max-depth", max_depth, "depth bound (omit for none)");
    cmd->add_option("--min-split", min_split, "min samples to split a node");
    cmd->add_option("--min-leaf", min_leaf, "min samples per leaf");
    cmd->add_option("--max-features", max_features,
                    "features per split: sqrt|log2|all|<count>");
    cmd->add_option("--class-weight", class_weight,
                    "none|balanced|balanced_subsample");
    cmd->add_option("--bootstrap", bootstrap, "bootstrap sampling on/off");
    cmd->add_option("--laplace", laplace, "Laplace-corrected leaf probabilities");
    cmd->add_option("--tree-kind", tree_kind, "leaf mode: pet|ct");
  }

  void apply(ForestConfig& cfg) const {
    if (trees) cfg.n_trees = *trees;
    if (criterion) cfg.criterion = parse_criterion(*criterion);
    if (max_depth) cfg.max_depth = *max_depth;
    if (min_split) cfg.min_samples_split = *min_split;
    if (min_leaf) cfg.min_samples_leaf = *min_leaf;
    if (max_features) cfg.max_features = parse_max_features(*max_features);
    if (class_weight) cfg.class_weight = parse_class_weight(*class_weight);
    if (bootstrap) cfg.bootstrap = *bootstrap;
    if (laplace) cfg.laplace = *laplace;
    if (tree_kind) cfg.tree_kind = parse_tree_kind(*tree_kind);
  }
};

ProbMatrix load_predictions_csv(const std::string& path, std::size_t expect_rows) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument(path + ": empty predictions file");
  const auto header = rfcal::detail::split_csv_line(line);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (rfcal::detail::trim(header[c]) != "p" + std::to_string(c))
      throw std::invalid_argument(path + ": predictions header must be p0,p1,...");
  }
  ProbMatrix preds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (rfcal::detail::trim(line).empty()) continue;
    const auto fields = rfcal::detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": ragged row");
    ProbVector p;
    for (const auto& f : fields)
      p.push_back(rfcal::detail::parse_number(f, line_no, path));
    preds.push_back(std::move(p));
  }
  if (preds.size() != expect_rows)
    throw std::invalid_argument(path + ": " + std::to_string(preds.size()) +
                                " prediction rows for " +
                                std::to_string(expect_rows) + " data rows");
  return preds;
}

json report_to_json(const MetricReport& r, std::size_t n_rows) {
  json j;
  j["format_version"] = kDocFormatVersion;
  j["kind"] = "rfcal_metric_report";
  j["n_rows"] = n_rows;
  j["accuracy"] = r.accuracy;
  j["brier"] = r.brier;
  j["log_loss"] = r.log_loss;
  j["ece"] = r.ece;
  j["ece_bins"] = r.ece_bins;
  j["tce"] = r.tce ? json(*r.tce) : json(nullptr);
  if (r.brier_decomposition) {
    j["cl"] = r.brier_decomposition->cl;
    j["gl"] = r.brier_decomposition->gl;
    j["il"] = r.brier_decomposition->il;
  } else {
    j["cl"] = nullptr;
    j["gl"] = nullptr;
    j["il"] = nullptr;
  }
  j["bin_entropy"] = r.bin_entropy ? json(*r.bin_entropy) : json(nullptr);
  return j;
}

int threads_from(const RunConfig* rc, std::optional<int> flag) {
  if (flag) return std::max(1, *flag);
  if (rc) {
    if (const auto v = rc->get("run", "threads"))
      return std::max(1, RunConfig::to_int(*v, "threads"));
  }
  return 1;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

void setup_synth(CLI::App& app) {
  auto* synth = app.add_subcommand("synth", "generate synthetic datasets");
  synth->require_subcommand(1);

  {
    auto* cmd = synth->add_subcommand("gaussians", "two-Gaussian binary data");
    auto dim = std::make_shared<int>(2);
    auto n = std::make_shared<std::size_t>(1000);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto out = std::make_shared<std::string>();
    auto mean0 = std::make_shared<std::string>("0,1");
    auto mean1 = std::make_shared<std::string>("1,3");
    auto var = std::make_shared<std::string>("1,2");
    cmd->add_option("--dim", *dim, "feature count");
    cmd->add_option("--n", *n, "total sample size (split evenly)");
    cmd->add_option("--seed", *seed, "rng seed");
    cmd->add_option("--mean0", *mean0, "class-0 mean range lo,hi");
    cmd->add_option("--mean1", *mean1, "class-1 mean range lo,hi");
    cmd->add_option("--var", *var, "shared variance range lo,hi");
    cmd->add_option("--out", *out, "output CSV")->required();
    cmd->callback([=] {
      const auto sample =
          sample_two_gaussians(*dim, *n, *seed, parse_range(*mean0),
                               parse_range(*mean1), parse_range(*var));
      save_csv(sample.data, *out);
    });
  }
  {
    auto* cmd = synth->add_subcommand("mixture", "Gaussian-mixture binary data");
    auto dim = std::make_shared<int>(2);
    auto n = std::make_shared<std::size_t>(2000);
    auto clusters = std::make_shared<int>(4);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto out = std::make_shared<std::string>();
    auto mean = std::make_shared<std::string>("0,20");
    auto var = std::make_shared<std::string>("1,5");
    cmd->add_option("--dim", *dim, "feature count");
    cmd->add_option("--n", *n, "total sample size");
    cmd->add_option("--clusters", *clusters, "components per class");
    cmd->add_option("--seed", *seed, "rng seed");
    cmd->add_option("--mean", *mean, "component mean range lo,hi");
    cmd->add_option("--var", *var, "component variance range lo,hi");
    cmd->add_option("--out", *out, "output CSV")->required();
    cmd->callback([=] {
      const auto sample = sample_mixture(*dim, *n, *clusters, *seed,
                                         parse_range(*mean), parse_range(*var));
      save_csv(sample.data, *out);
    });
  }
  {
    auto* cmd = synth->add_subcommand(
        "sweep", "overlap sweep: one dataset per separation step");
    auto dim = std::make_shared<int>(2);
    auto steps = std::make_shared<int>(20);
    auto target = std::make_shared<double>(5.72);
    auto n = std::make_shared<std::size_t>(1000);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto out_dir = std::make_shared<std::string>();
    cmd->add_option("--dim", *dim, "feature count");
    cmd->add_option("--steps", *steps, "number of separation steps");
    cmd->add_option("--target-bd", *target, "final Bhattacharyya distance");
    cmd->add_option("--n", *n, "samples per step");
    cmd->add_option("--seed", *seed, "rng seed");
    cmd->add_option("--out-dir", *out_dir, "output directory")->required();
    cmd->callback([=] {
      OverlapSweepSpec spec;
      spec.dim = *dim;
      spec.steps = *steps;
      spec.target_bd = *target;
      spec.samples_per_step = *n;
      spec.seed = *seed;
      const auto sweep = overlap_sweep(spec);
      std::filesystem::create_directories(*out_dir);
      std::ofstream index(*out_dir + "/index.csv");
      if (!index) throw std::invalid_argument("cannot write " + *out_dir);
      index << "step,shift,bd,file\n";
      for (std::size_t s = 0; s < sweep.size(); ++s) {
        char name[32];
        std::snprintf(name, sizeof(name), "step_%02zu.csv", s);
        save_csv(sweep[s].data, *out_dir + "/" + name);
        index << s << "," << format_double(sweep[s].shift) << ","
              << format_double(sweep[s].bd) << "," << name << "\n";
      }
    });
  }
}

// ---------------------------------------------------------------------------
// train / calibrate / eval
// ---------------------------------------------------------------------------

void setup_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "train a random forest");
  auto data_path = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto config_path = std::make_shared<std::string>();
  auto seed = std::make_shared<std::optional<std::uint64_t>>();
  auto threads = std::make_shared<std::optional<int>>();
  auto flags = std::make_shared<ForestFlags>();
  cmd->add_option("--data", *data_path, "training CSV")->required();
  cmd->add_option("--out", *out, "output model JSON")->required();
  cmd->add_option("--config", *config_path, "run config file");
  cmd->add_option("--seed", *seed, "rng seed");
  cmd->add_option("--threads", *threads, "worker threads");
  flags->attach(cmd);
  cmd->callback([=] {
    ForestConfig cfg;
    std::optional<RunConfig> rc;
    if (!config_path->empty()) {
      rc = RunConfig::from_file(*config_path);
      rc->apply_forest(cfg);
      if (const auto v = rc->get("run", "seed"))
        cfg.seed = RunConfig::to_u64(*v, "seed");
    }
    flags->apply(cfg);  // flags win over the file
    if (*seed) cfg.seed = **seed;
    const Dataset data = load_csv(*data_path);
    ModelDocument doc;
    doc.forest =
        train_forest(data, cfg, threads_from(rc ? &*rc : nullptr, *threads));
    save_model(doc, *out);
  });
}

void setup_calibrate(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "calibrate", "fit a calibration method onto a trained model");
  auto model_path = std::make_shared<std::string>();
  auto method_name_arg = std::make_shared<std::string>();
  auto source_name = std::make_shared<std::string>("fold");
  auto calib_path = std::make_shared<std::string>();
  auto train_path = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto threads = std::make_shared<std::optional<int>>();
  cmd->add_option("--model", *model_path, "model JSON from `train`")->required();
  cmd->add_option("--method", *method_name_arg,
                  "platt|iso|beta|va|ppa|ct|rank")
      ->required();
  cmd->add_option("--source", *source_name, "calibration data source: fold|oob");
  cmd->add_option("--calib", *calib_path, "calibration CSV (fold source)");
  cmd->add_option("--train", *train_path,
                  "training CSV (oob source, and any rank fit)");
  cmd->add_option("--out", *out, "output model JSON")->required();
  cmd->add_option("--threads", *threads, "worker threads");
  cmd->callback([=] {
    const auto method = parse_method(*method_name_arg);
    if (!method || *method == Method::rf_d || *method == Method::rf_opt ||
        *method == Method::rf_large) {
      std::string valid;
      for (Method m : {Method::platt, Method::iso, Method::beta, Method::va,
                       Method::ppa, Method::ct, Method::rank})
        valid += method_name(m) + " ";
      throw std::invalid_argument("method must be one of: " + valid);
    }
    const CalibSource source = parse_source(*source_name);
    ModelDocument doc = load_model(*model_path);
    std::optional<Dataset> train, calib;
    if (!train_path->empty()) train = load_csv(*train_path);
    if (!calib_path->empty()) calib = load_csv(*calib_path);
    if (source == CalibSource::heldout_fold && !calib)
      throw std::invalid_argument("--source fold requires --calib");
    if ((source == CalibSource::oob || *method == Method::rank) && !train)
      throw std::invalid_argument(
          "--source oob and --method rank require --train");
    doc.calibrator = fit_calibrator(*method, doc.forest,
                                    train ? &*train : nullptr,
                                    calib ? &*calib : nullptr, source,
                                    *threads ? std::max(1, **threads) : 1);
    save_model(doc, *out);
  });
}

void setup_eval(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "eval", "score a model (or a predictions file) on a dataset");
  auto model_path = std::make_shared<std::string>();
  auto pred_path = std::make_shared<std::string>();
  auto data_path = std::make_shared<std::string>();
  auto report_path = std::make_shared<std::string>();
  auto reliability_path = std::make_shared<std::string>();
  auto bins = std::make_shared<int>(20);
  auto ref = std::make_shared<std::string>("labels");
  cmd->add_option("--model", *model_path, "model JSON");
  cmd->add_option("--predictions", *pred_path,
                  "CSV of prediction vectors (p0,p1,...) instead of a model");
  cmd->add_option("--data", *data_path, "evaluation CSV")->required();
  cmd->add_option("--report", *report_path, "metric report JSON")->required();
  cmd->add_option("--reliability", *reliability_path, "reliability CSV");
  cmd->add_option("--bins", *bins, "ECE bin count");
  cmd->add_option("--ref", *ref,
                  "reliability reference: labels|posteriors");
  cmd->callback([=] {
    if (model_path->empty() == pred_path->empty())
      throw std::invalid_argument("provide exactly one of --model, --predictions");
    const Dataset data = load_csv(*data_path);
    ProbMatrix preds;
    if (!model_path->empty()) {
      const ModelDocument doc = load_model(*model_path);
      preds.resize(data.n_rows);
      for (std::size_t i = 0; i < data.n_rows; ++i) {
        const auto raw = predict_forest(doc.forest, data.row(i));
        preds[i] = doc.calibrator
                       ? apply_calibrator(*doc.calibrator, doc.forest,
                                          data.row(i), raw)
                       : raw;
      }
    } else {
      preds = load_predictions_csv(*pred_path, data.n_rows);
    }
    ProbMatrix q;
    if (data.has_posteriors()) {
      q.resize(data.n_rows);
      for (std::size_t i = 0; i < data.n_rows; ++i)
        q[i].assign(data.posterior(i).begin(), data.posterior(i).end());
    }
    const MetricReport report = evaluate(preds, data.labels, q, {*bins});
    write_json(report_to_json(report, data.n_rows), *report_path);
    if (!reliability_path->empty()) {
      ReliabilityRef reference = ReliabilityRef::labels;
      if (*ref == "posteriors") {
        if (!data.has_posteriors())
          throw std::invalid_argument(
              "--ref posteriors requires q0/q1 columns in the data");
        reference = ReliabilityRef::posteriors;
      } else if (*ref != "labels") {
        throw std::invalid_argument("--ref must be labels or posteriors");
      }
      save_reliability_csv(
          reliability_data(preds, data.labels, q, reference, {*bins}),
          *reliability_path);
    }
  });
}

// ---------------------------------------------------------------------------
// bench / stats
// ---------------------------------------------------------------------------

void setup_bench(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "bench", "repeated stratified-CV benchmark over datasets and methods");
  auto config_path = std::make_shared<std::string>();
  auto results_path = std::make_shared<std::string>();
  auto summary_path = std::make_shared<std::string>();
  auto seed = std::make_shared<std::optional<std::uint64_t>>();
  auto threads = std::make_shared<std::optional<int>>();
  auto methods = std::make_shared<std::string>();
  auto folds = std::make_shared<std::optional<int>>();
  auto repeats = std::make_shared<std::optional<int>>();
  auto source = std::make_shared<std::string>();
  auto datasets_arg = std::make_shared<std::vector<std::string>>();
  cmd->add_option("--config", *config_path, "run config file");
  cmd->add_option("--data", *datasets_arg,
                  "dataset CSV paths (overrides the config list)");
  cmd->add_option("--results", *results_path, "results CSV path");
  cmd->add_option("--summary", *summary_path, "summary JSON path");
  cmd->add_option("--seed", *seed, "master seed");
  cmd->add_option("--threads", *threads, "worker threads");
  cmd->add_option("--methods", *methods, "comma-separated method list");
  cmd->add_option("--folds", *folds, "CV folds");
  cmd->add_option("--repeats", *repeats, "CV repeats");
  cmd->add_option("--source", *source, "calibration source: fold|oob");
  cmd->callback([=] {
    ExperimentConfig cfg;
    std::optional<RunConfig> rc;
    std::string results_out = *results_path;
    std::string summary_out = *summary_path;
    if (!config_path->empty()) {
      rc = RunConfig::from_file(*config_path);
      rc->apply_experiment(cfg);
      if (results_out.empty())
        if (const auto v = rc->get("output", "results")) results_out = *v;
      if (summary_out.empty())
        if (const auto v = rc->get("output", "summary")) summary_out = *v;
    }
    if (!datasets_arg->empty()) cfg.dataset_ids = *datasets_arg;
    if (!methods->empty()) cfg.methods = parse_methods(*methods);
    if (*folds) cfg.folds = **folds;
    if (*repeats) cfg.repeats = **repeats;
    if (!source->empty()) cfg.source = parse_source(*source);
    if (*seed) cfg.seed = **seed;
    if (results_out.empty())
      throw std::invalid_argument("no results path (flag --results or [output])");

    std::map<std::string, Dataset> datasets;
    for (const auto& path : cfg.dataset_ids) datasets[path] = load_csv(path);

    const ResultsTable table =
        run_experiment(cfg, datasets, threads_from(rc ? &*rc : nullptr, *threads));
    save_results_csv(table, results_out);

    if (!summary_out.empty()) {
      json j;
      j["format_version"] = kDocFormatVersion;
      j["kind"] = "rfcal_summary";
      json cfg_json;
      cfg_json["datasets"] = cfg.dataset_ids;
      std::vector<std::string> method_list;
      for (Method m : cfg.methods) method_list.push_back(method_name(m));
      cfg_json["methods"] = method_list;
      cfg_json["folds"] = cfg.folds;
      cfg_json["repeats"] = cfg.repeats;
      cfg_json["seed"] = cfg.seed;
      cfg_json["source"] =
          cfg.source == CalibSource::heldout_fold ? "fold" : "oob";
      cfg_json["ece_bins"] = cfg.ece_bins;
      j["config"] = cfg_json;
      json metrics = json::object();
      const bool has_q =
          std::any_of(table.records.begin(), table.records.end(),
                      [](const ResultRecord& r) { return r.metric == "tce"; });
      for (const auto& metric : cell_metric_names(has_q)) {
        json per_dataset = json::object();
        for (const auto& [dataset, per_method] : mean_table(table, metric)) {
          per_dataset[dataset] = per_method;
        }
        metrics[metric] = std::move(per_dataset);
      }
      j["metrics"] = std::move(metrics);
      json failures = json::array();
      for (const auto& f : table.failures) {
        failures.push_back({{"dataset", f.dataset},
                            {"method", f.method},
                            {"repeat", f.repeat},
                            {"fold", f.fold},
                            {"reason", f.reason}});
      }
      j["failures"] = std::move(failures);
      write_json(j, summary_out);
    }
  });
}

void setup_stats(CLI::App& app) {
  auto* stats = app.add_subcommand("stats", "rank and significance analyses");
  stats->require_subcommand(1);

  {
    auto* cmd = stats->add_subcommand("ranks", "mean rank per method");
    auto results_path = std::make_shared<std::string>();
    auto metric = std::make_shared<std::string>("brier");
    auto higher = std::make_shared<bool>(false);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--results", *results_path, "results CSV")->required();
    cmd->add_option("--metric", *metric, "metric to rank on");
    cmd->add_flag("--higher-better", *higher, "rank descending values first");
    cmd->add_option("--out", *out, "output CSV")->required();
    cmd->callback([=] {
      const ResultsTable table = load_results_csv(*results_path);
      const auto datasets = table_datasets(table);
      const auto methods = table_methods(table);
      const auto matrix = values_matrix(table, *metric, datasets, methods);
      const auto ranks = average_ranks(matrix, !*higher);
      std::vector<std::size_t> order(methods.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return ranks[a] < ranks[b]; });
      std::ofstream file(*out);
      if (!file) throw std::invalid_argument("cannot write " + *out);
      file << "method,mean_rank\n";
      for (std::size_t i : order)
        file << methods[i] << "," << format_double(ranks[i]) << "\n";
    });
  }
  {
    auto* cmd = stats->add_subcommand(
        "cd", "Friedman test and Nemenyi critical-difference diagram data");
    auto results_path = std::make_shared<std::string>();
    auto metric = std::make_shared<std::string>("brier");
    auto higher = std::make_shared<bool>(false);
    auto alpha = std::make_shared<double>(0.05);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--results", *results_path, "results CSV")->required();
    cmd->add_option("--metric", *metric, "metric to rank on");
    cmd->add_flag("--higher-better", *higher, "rank descending values first");
    cmd->add_option("--alpha", *alpha, "significance level (0.05 or 0.10)");
    cmd->add_option("--out", *out, "output JSON")->required();
    cmd->callback([=] {
      const ResultsTable table = load_results_csv(*results_path);
      const auto datasets = table_datasets(table);
      const auto methods = table_methods(table);
      const auto matrix = values_matrix(table, *metric, datasets, methods);
      std::vector<std::vector<double>> rank_matrix;
      for (const auto& row : matrix)
        rank_matrix.push_back(midranks(row, !*higher));
      const RankSummary summary = friedman_nemenyi(rank_matrix, *alpha);
      const CdDiagram diagram = cd_diagram(summary);
      json j;
      j["format_version"] = kDocFormatVersion;
      j["kind"] = "rfcal_cd_diagram";
      j["metric"] = *metric;
      j["alpha"] = summary.alpha;
      j["n_datasets"] = summary.n_datasets;
      j["friedman_statistic"] = summary.friedman_stat;
      j["critical_difference"] = summary.critical_difference;
      json names = json::array(), ordered_ranks = json::array();
      for (std::size_t i : diagram.order) {
        names.push_back(methods[i]);
        ordered_ranks.push_back(summary.mean_ranks[i]);
      }
      j["methods"] = std::move(names);
      j["mean_ranks"] = std::move(ordered_ranks);
      json groups = json::array();
      for (const auto& [lo, hi] : diagram.groups)
        groups.push_back(json::array({lo, hi}));
      j["groups"] = std::move(groups);
      write_json(j, *out);
    });
  }
  {
    auto* cmd = stats->add_subcommand("ttest", "pairwise paired t-tests");
    auto results_path = std::make_shared<std::string>();
    auto metric = std::make_shared<std::string>("brier");
    auto method_a = std::make_shared<std::string>();
    auto method_b = std::make_shared<std::string>();
    auto alpha = std::make_shared<double>(0.05);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--results", *results_path, "results CSV")->required();
    cmd->add_option("--metric", *metric, "metric to compare");
    cmd->add_option("--method-a", *method_a, "first method (default: all pairs)");
    cmd->add_option("--method-b", *method_b, "second method");
    cmd->add_option("--alpha", *alpha, "significance level");
    cmd->add_option("--out", *out, "output CSV")->required();
    cmd->callback([=] {
      const ResultsTable table = load_results_csv(*results_path);
      const auto datasets = table_datasets(table);
      const auto methods = table_methods(table);
      const auto matrix = values_matrix(table, *metric, datasets, methods);
      std::vector<std::pair<std::size_t, std::size_t>> pairs;
      if (!method_a->empty() || !method_b->empty()) {
        const auto find = [&](const std::string& name) {
          const auto it = std::find(methods.begin(), methods.end(), name);
          if (it == methods.end())
            throw std::invalid_argument("method '" + name +
                                        "' not present in the results");
          return static_cast<std::size_t>(it - methods.begin());
        };
        pairs.emplace_back(find(*method_a), find(*method_b));
      } else {
        for (std::size_t a = 0; a < methods.size(); ++a)
          for (std::size_t b = a + 1; b < methods.size(); ++b)
            pairs.emplace_back(a, b);
      }
      std::ofstream file(*out);
      if (!file) throw std::invalid_argument("cannot write " + *out);
      file << "method_a,method_b,metric,t,p,significant,direction\n";
      for (const auto& [a, b] : pairs) {
        std::vector<double> va, vb;
        for (const auto& row : matrix) {
          va.push_back(row[a]);
          vb.push_back(row[b]);
        }
        std::string t = "nan", p = "nan", sig = "false", dir = "0";
        try {
          const TTestResult r = paired_ttest(va, vb, *alpha);
          t = format_double(r.t);
          p = format_double(r.p);
          sig = r.significant ? "true" : "false";
          dir = std::to_string(r.direction);
        } catch (const std::invalid_argument&) {
          // identical columns: no test possible, keep the nan row
        }
        file << methods[a] << "," << methods[b] << "," << *metric << "," << t
             << "," << p << "," << sig << "," << dir << "\n";
      }
    });
  }
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

void setup_sweep(CLI::App& app) {
  auto* sweep = app.add_subcommand("sweep", "synthetic-data sweep protocols");
  sweep->require_subcommand(1);

  const auto add_grid = [](CLI::App* cmd, auto dim, auto n, auto n_test,
                           auto repeats, auto trees, auto seed, auto threads,
                           auto out) {
    cmd->add_option("--dim", *dim, "feature count");
    cmd->add_option("--n", *n, "training sample size");
    cmd->add_option("--test-n", *n_test, "test sample size");
    cmd->add_option("--repeats", *repeats, "independent repeats");
    cmd->add_option("--trees", *trees, "trees per forest");
    cmd->add_option("--seed", *seed, "master seed");
    cmd->add_option("--threads", *threads, "worker threads");
    cmd->add_option("--out", *out, "output CSV")->required();
  };

  {
    auto* cmd = sweep->add_subcommand("depth", "max-depth sweep");
    auto dim = std::make_shared<int>(2);
    auto n = std::make_shared<std::size_t>(1000);
    auto n_test = std::make_shared<std::size_t>(1000);
    auto repeats = std::make_shared<int>(5);
    auto trees = std::make_shared<int>(100);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto threads = std::make_shared<int>(1);
    auto out = std::make_shared<std::string>();
    auto depths = std::make_shared<std::string>("1,2,3,4,6,8,10,12");
    add_grid(cmd, dim, n, n_test, repeats, trees, seed, threads, out);
    cmd->add_option("--depths", *depths, "comma-separated depth list");
    cmd->callback([=] {
      GridSweepSpec spec;
      spec.dim = *dim;
      spec.n_train = *n;
      spec.n_test = *n_test;
      spec.repeats = *repeats;
      spec.seed = *seed;
      spec.base.n_trees = *trees;
      save_sweep_csv(depth_sweep(spec, parse_int_list(*depths), *threads), *out);
    });
  }
  {
    auto* cmd = sweep->add_subcommand("trees", "ensemble-size sweep");
    auto dim = std::make_shared<int>(2);
    auto n = std::make_shared<std::size_t>(1000);
    auto n_test = std::make_shared<std::size_t>(1000);
    auto repeats = std::make_shared<int>(5);
    auto trees = std::make_shared<int>(100);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto threads = std::make_shared<int>(1);
    auto out = std::make_shared<std::string>();
    auto counts = std::make_shared<std::string>("5,50,500");
    add_grid(cmd, dim, n, n_test, repeats, trees, seed, threads, out);
    cmd->add_option("--counts", *counts, "comma-separated tree counts");
    cmd->callback([=] {
      GridSweepSpec spec;
      spec.dim = *dim;
      spec.n_train = *n;
      spec.n_test = *n_test;
      spec.repeats = *repeats;
      spec.seed = *seed;
      spec.base.n_trees = *trees;
      save_sweep_csv(tree_count_sweep(spec, parse_int_list(*counts), *threads),
                     *out);
    });
  }
  {
    auto* cmd = sweep->add_subcommand(
        "calibsize", "calibration-set-size sweep on mixture data");
    auto dim = std::make_shared<int>(2);
    auto n = std::make_shared<std::size_t>(1000);
    auto n_test = std::make_shared<std::size_t>(1000);
    auto repeats = std::make_shared<int>(5);
    auto trees = std::make_shared<int>(100);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto threads = std::make_shared<int>(1);
    auto out = std::make_shared<std::string>();
    auto methods = std::make_shared<std::string>(
        "rf_d,platt,iso,beta,va,ct,ppa,rank");
    auto fractions = std::make_shared<std::string>(
        "0.02,0.05,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0");
    add_grid(cmd, dim, n, n_test, repeats, trees, seed, threads, out);
    cmd->add_option("--methods", *methods, "comma-separated method list");
    cmd->add_option("--fractions", *fractions, "pool fractions in (0,1]");
    cmd->callback([=] {
      CalibSizeProtocolSpec spec;
      spec.dim = *dim;
      spec.n_train = *n;
      spec.n_test = *n_test;
      spec.repeats = *repeats;
      spec.seed = *seed;
      spec.base.n_trees = *trees;
      spec.methods = parse_methods(*methods);
      spec.fractions = parse_double_list(*fractions);
      save_sweep_csv(calibsize_protocol(spec, *threads), *out);
    });
  }
  {
    auto* cmd = sweep->add_subcommand(
        "overlap", "class-separation sweep with calibration methods");
    auto dim = std::make_shared<int>(2);
    auto steps = std::make_shared<int>(20);
    auto target = std::make_shared<double>(5.72);
    auto n = std::make_shared<std::size_t>(1000);
    auto repeats = std::make_shared<int>(5);
    auto trees = std::make_shared<int>(100);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto threads = std::make_shared<int>(1);
    auto out = std::make_shared<std::string>();
    auto methods = std::make_shared<std::string>("rf_d,platt,iso,beta,va,ct,ppa");
    cmd->add_option("--dim", *dim, "feature count");
    cmd->add_option("--steps", *steps, "separation steps");
    cmd->add_option("--target-bd", *target, "final Bhattacharyya distance");
    cmd->add_option("--n", *n, "samples per step");
    cmd->add_option("--repeats", *repeats, "independent repeats");
    cmd->add_option("--trees", *trees, "trees per forest");
    cmd->add_option("--seed", *seed, "master seed");
    cmd->add_option("--threads", *threads, "worker threads");
    cmd->add_option("--methods", *methods, "comma-separated method list");
    cmd->add_option("--out", *out, "output CSV")->required();
    cmd->callback([=] {
      OverlapProtocolSpec spec;
      spec.sweep.dim = *dim;
      spec.sweep.steps = *steps;
      spec.sweep.target_bd = *target;
      spec.sweep.samples_per_step = *n;
      spec.sweep.seed = *seed;
      spec.repeats = *repeats;
      spec.base.n_trees = *trees;
      spec.methods = parse_methods(*methods);
      save_sweep_csv(overlap_protocol(spec, *threads), *out);
    });
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"random-forest probability calibration laboratory"};
  app.require_subcommand(1);
  setup_synth(app);
  setup_train(app);
  setup_calibrate(app);
  setup_eval(app);
  setup_bench(app);
  setup_stats(app);
  setup_sweep(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
