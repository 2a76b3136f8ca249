// probforest: simulation grid, model fitting, prediction, evaluation and
// heatmap export from the command line.
//
// Exit codes: 0 success, 1 invalid input or failure, 2 simulation finished
// with some failed runs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "probforest/dataset.hpp"
#include "probforest/dataspace.hpp"
#include "probforest/dgm.hpp"
#include "probforest/forest.hpp"
#include "probforest/glm.hpp"
#include "probforest/harness.hpp"
#include "probforest/metrics.hpp"

namespace fs = std::filesystem;
using namespace probforest;

namespace {

constexpr const char* kEnv = "PROBFOREST_";

std::string env(const char* name) { return std::string(kEnv) + name; }

// Failure that maps to exit code 1 with a message.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Model files

struct LoadedModel {
  std::optional<forest::Forest> forest;
  std::optional<glm::SplineGlm> glm;

  std::vector<std::string> feature_names() const {
    if (forest) {
      return forest->feature_names().empty()
                 ? default_feature_names(static_cast<std::size_t>(forest->n_features()))
                 : forest->feature_names();
    }
    return glm->feature_names;
  }
  Matrix predict(const Matrix& x, unsigned workers) const {
    return forest ? forest->predict_proba(x, workers) : glm->predict(x);
  }
};

LoadedModel load_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open model file " + path.string());
  std::string first;
  in >> first;
  LoadedModel m;
  if (first == "probforest-forest") {
    m.forest = forest::Forest::load(path);
  } else {
    m.glm = glm::SplineGlm::load(path);
  }
  return m;
}

void check_features(const Dataset& data, const std::vector<std::string>& expected,
                    const fs::path& path) {
  if (data.n_features() != expected.size()) {
    throw UsageError(path.string() + ": has " + std::to_string(data.n_features()) +
                     " feature columns, the model expects " + std::to_string(expected.size()));
  }
  for (std::size_t j = 0; j < expected.size(); ++j) {
    if (data.feature_names[j] != expected[j]) {
      throw UsageError(path.string() + ": column '" + data.feature_names[j] + "' where the model expects '" +
                       expected[j] + "'");
    }
  }
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> test_size;
  std::optional<std::string> filter;
  std::optional<unsigned> workers;
  std::optional<std::string> out;
  bool write_runs = false;
  bool quiet = false;
};

int run_simulate(const SimulateArgs& a) {
  harness::HarnessConfig config;
  if (!a.config.empty()) config = harness::HarnessConfig::load(a.config);
  if (a.seed) config.master_seed = *a.seed;
  if (a.runs) config.r_runs = *a.runs;
  if (a.test_size) config.n_test = *a.test_size;
  if (a.filter) config.filter = *a.filter;
  if (a.workers) config.workers = *a.workers;
  if (a.out) config.output_dir = *a.out;
  if (a.write_runs) config.write_runs = true;
  config.validate();

  auto progress = [&](const harness::SummaryRow& row, std::size_t done, std::size_t total) {
    if (a.quiet) return;
    std::fprintf(stderr, "[%zu/%zu] %s train c %.3f test c %.3f test slope %.3f (%d runs)\n", done,
                 total, row.scenario_id.c_str(), row.train_c.median, row.test_c.median,
                 row.test_slope.median, row.runs_completed);
  };
  const auto output = harness::run_simulation(config, progress);
  if (!a.quiet) {
    std::fprintf(stderr, "%zu scenarios, %d failed runs, %.1f s -> %s\n", output.rows.size(),
                 output.failed_runs, output.wall_seconds, (config.output_dir / "summary.csv").c_str());
  }
  return output.failed_runs > 0 ? 2 : 0;
}

// ---------------------------------------------------------------------------
// scenarios

int run_scenarios(const std::string& filter, const std::string& labels_name, bool ids_only) {
  const auto labels = harness::parse_node_size_labels(labels_name);
  const auto scenarios = harness::filter_scenarios(harness::enumerate_scenarios(), filter);
  if (!ids_only) std::cout << "scenario,predictors,noise,distribution,target_auc,correlation,strength,n_train,min_node_size\n";
  for (const auto& s : scenarios) {
    if (ids_only) {
      std::cout << s.id() << '\n';
      continue;
    }
    const auto& d = s.dgm;
    std::cout << s.id() << ',' << d.n_predictors << ',' << d.n_noise << ','
              << (d.distribution == dgm::PredictorDistribution::binary ? "binary" : "continuous") << ','
              << d.target_auc << ',' << d.correlation << ','
              << (d.strength == dgm::CoefficientStrength::balanced ? "balanced" : "unbalanced") << ','
              << s.n_train << ',' << s.min_node_size(labels) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// generate / dgm-check

int run_generate(const std::string& id, int n, std::uint64_t seed, const std::string& out) {
  const auto spec = dgm::find_builtin(id);
  Rng rng(mix_seed(seed, hash_string(id)));
  write_dataset_csv(dgm::generate_dataset(spec, n, rng), out);
  return 0;
}

int run_dgm_check(const std::string& filter, int n, std::uint64_t seed, double tolerance) {
  bool all_ok = true;
  std::cout << "dgm,event_fraction,true_c,target_c,ok\n";
  for (const auto& spec : dgm::builtin_dgm_table()) {
    if (!harness::matches_filter(spec.id(), filter)) continue;
    const auto data = harness::make_test_set(spec, n, seed);
    const double events = std::accumulate(data.y.begin(), data.y.end(), 0.0) / n;
    const double c = harness::true_c_statistic(data);
    const bool ok = std::abs(events - 0.2) <= tolerance && std::abs(c - spec.target_auc) <= tolerance;
    all_ok = all_ok && ok;
    std::cout << spec.id() << ',' << format_significant(events, 4) << ',' << format_significant(c, 4) << ','
              << spec.target_auc << ',' << (ok ? "yes" : "no") << '\n';
  }
  return all_ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// fit / predict / evaluate

struct FitArgs {
  std::string data;
  std::string model = "forest";
  std::string out;
  std::uint64_t seed = 1;
  double split = 1.0;
  std::string train_out;
  std::string test_out;
  int n_tree = 500;
  int mtry = 0;
  int min_node_size = 2;
  std::string node_size_rule = "child";
  std::vector<std::string> splines;
  double ridge = 0.0;
  unsigned workers = 1;
};

int run_fit(const FitArgs& a) {
  Dataset data = read_dataset_csv(a.data);
  if (!(a.split > 0.0 && a.split <= 1.0)) throw UsageError("--split must be in (0, 1]");
  if (a.split < 1.0) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(a.seed, hash_string("split")));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(a.split * static_cast<double>(data.size())));
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    const Dataset test = data.subset(test_idx);
    data = data.subset(train_idx);
    if (!a.test_out.empty()) write_dataset_csv(test, a.test_out);
    if (!a.train_out.empty()) write_dataset_csv(data, a.train_out);
  }
  if (a.model == "forest") {
    forest::ForestParams params;
    params.n_tree = a.n_tree;
    params.mtry = a.mtry;
    params.min_node_size = a.min_node_size;
    params.node_size_rule = forest::parse_node_size_rule(a.node_size_rule);
    params.seed = mix_seed(a.seed, hash_string("forest"));
    forest::fit_forest(data, params, a.workers).save(a.out);
  } else {
    std::vector<int> spline_idx;
    for (const auto& name : a.splines) {
      const auto it = std::find(data.feature_names.begin(), data.feature_names.end(), name);
      if (it == data.feature_names.end()) throw UsageError("--spline: no column named '" + name + "'");
      spline_idx.push_back(static_cast<int>(it - data.feature_names.begin()));
    }
    const auto model = glm::fit_spline_glm(data, spline_idx, a.ridge);
    if (!model.model.converged) std::fprintf(stderr, "warning: GLM did not converge\n");
    model.save(a.out);
  }
  return 0;
}

int run_predict(const std::string& model_path, const std::string& data_path, const std::string& out,
                unsigned workers) {
  const auto model = load_model(model_path);
  const Dataset data = read_dataset_csv(data_path, false);
  check_features(data, model.feature_names(), data_path);
  const Matrix p = model.predict(data.x, workers);
  std::ofstream file(out);
  if (!file) throw UsageError("cannot open " + out + " for writing");
  file << "id";
  for (std::size_t k = 0; k < p.cols(); ++k) file << ",p_class" << k;
  file << '\n';
  for (std::size_t i = 0; i < p.rows(); ++i) {
    file << i;
    for (double v : p.row(i)) file << ',' << format_double(v);
    file << '\n';
  }
  if (!file) throw UsageError("write failed for " + out);
  return 0;
}

Matrix read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw UsageError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "id") {
    throw UsageError(path.string() + ": expected header id,p_class0,p_class1,...");
  }
  for (std::size_t k = 1; k < header.size(); ++k) {
    if (header[k] != "p_class" + std::to_string(k - 1)) {
      throw UsageError(path.string() + ": unexpected column '" + header[k] + "'");
    }
  }
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(rows + 2);
    if (f.size() != header.size()) throw UsageError(where + ": wrong field count");
    for (std::size_t k = 1; k < f.size(); ++k) values.push_back(parse_double(f[k], where));
    ++rows;
  }
  return Matrix(rows, header.size() - 1, std::move(values));
}

int run_evaluate(const std::string& pred_path, const std::string& data_path, const std::string& out,
                 std::uint64_t seed, std::uint64_t pdi_tuples) {
  const Matrix probs = read_predictions(pred_path);
  const Dataset data = read_dataset_csv(data_path);
  if (probs.rows() != data.size()) {
    throw UsageError(pred_path + " has " + std::to_string(probs.rows()) + " rows but " + data_path + " has " +
                     std::to_string(data.size()));
  }
  for (int label : data.y) {
    if (static_cast<std::size_t>(label) >= probs.cols()) {
      throw UsageError(data_path + " column 'y': label " + std::to_string(label) + " has no probability column");
    }
  }
  nlohmann::json j{{"n", data.size()}, {"n_classes", probs.cols()}};
  if (probs.cols() == 2) {
    const auto p = probs.column(1);
    const auto slope = metrics::calibration_slope(p, data.y);
    j["c_statistic"] = metrics::c_statistic(p, data.y);
    j["calibration_slope"] = slope.converged ? nlohmann::json(slope.slope) : nlohmann::json(nullptr);
    j["calibration_intercept"] = slope.converged ? nlohmann::json(slope.intercept) : nlohmann::json(nullptr);
    j["calibration_converged"] = slope.converged;
    j["brier"] = metrics::brier(p, data.y);
    j["logloss"] = metrics::logloss(p, data.y);
  } else {
    Rng rng(mix_seed(seed, hash_string("pdi")));
    j["pdi"] = metrics::pdi(probs, data.y, pdi_tuples, rng);
    j["brier"] = metrics::brier_multiclass(probs, data.y);
    j["logloss"] = metrics::logloss_multiclass(probs, data.y);
  }
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(j, out);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// heatmap

int run_heatmap(const std::string& model_path, const std::string& slice_path, const std::string& data_path,
                const std::string& out_prefix, const std::string& colormap, unsigned workers) {
  const auto model = load_model(model_path);
  const auto names = model.feature_names();
  std::optional<Dataset> data;
  if (!data_path.empty()) {
    data = read_dataset_csv(data_path);
    check_features(*data, names, data_path);
  }
  std::ifstream in(slice_path);
  if (!in) throw UsageError("cannot open slice file " + slice_path);
  std::stringstream text;
  text << in.rdbuf();
  const auto slice = dataspace::SliceSpec::from_json(text.str(), names, data ? &*data : nullptr);
  const auto map = dataspace::parse_colormap(colormap);
  auto grid = model.forest ? dataspace::compute_grid(*model.forest, slice, workers)
                           : dataspace::compute_grid(*model.glm, slice);
  if (data) grid = dataspace::overlay_cases(std::move(grid), *data, slice);
  dataspace::export_grid_csv(grid, out_prefix + ".csv");
  dataspace::export_ppm(grid, out_prefix + ".ppm", map);
  std::fprintf(stderr, "%dx%d grid, probabilities %.4g to %.4g, %zu overlay cases\n", slice.resolution,
               slice.resolution, grid.color_min, grid.color_max, grid.overlay.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probability-estimating random forests: simulation grid and diagnostics"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run the simulation grid and write summary.csv");
  simulate->add_option("--config", sim.config, "JSON configuration file")->envname(env("CONFIG"));
  simulate->add_option("--seed", sim.seed, "Master seed")->envname(env("SEED"));
  simulate->add_option("--runs", sim.runs, "Simulation runs per scenario")->envname(env("RUNS"));
  simulate->add_option("--test-size", sim.test_size, "Test set size per DGM")->envname(env("TEST_SIZE"));
  simulate->add_option("--filter", sim.filter, "Glob on scenario ids")->envname(env("FILTER"));
  simulate->add_option("--workers", sim.workers, "Worker threads")->envname(env("WORKERS"));
  simulate->add_option("--out", sim.out, "Existing output directory")->envname(env("OUT"));
  simulate->add_flag("--write-runs", sim.write_runs, "Also write runs_<scenario>.csv");
  simulate->add_flag("--quiet", sim.quiet, "No progress output");

  std::string filter = "*";
  std::string labels = "swapped";
  bool ids_only = false;
  auto* scenarios = app.add_subcommand("scenarios", "List scenarios and their settings");
  scenarios->add_option("--filter", filter, "Glob on scenario ids")->envname(env("FILTER"));
  scenarios->add_option("--labels", labels, "Node-size label convention")
      ->check(CLI::IsMember({"swapped", "literal"}));
  scenarios->add_flag("--ids", ids_only, "Print ids only");

  std::string gen_dgm, gen_out;
  int gen_n = 1000;
  std::uint64_t seed = 1;
  auto* generate = app.add_subcommand("generate", "Draw a dataset from a built-in DGM");
  generate->add_option("--dgm", gen_dgm, "DGM id, e.g. 4c_75_0_bal")->required();
  generate->add_option("--n", gen_n, "Number of cases")->check(CLI::PositiveNumber);
  generate->add_option("--seed", seed, "Seed")->envname(env("SEED"));
  generate->add_option("--out", gen_out, "Output CSV")->required()->envname(env("OUT"));

  std::string check_filter = "*";
  int check_n = 100'000;
  double check_tol = 0.01;
  auto* dgm_check = app.add_subcommand("dgm-check", "Verify event fraction and true c of built-in DGMs");
  dgm_check->add_option("--filter", check_filter, "Glob on DGM ids")->envname(env("FILTER"));
  dgm_check->add_option("--test-size", check_n, "Sample size per DGM")->envname(env("TEST_SIZE"))
      ->check(CLI::PositiveNumber);
  dgm_check->add_option("--seed", seed, "Seed")->envname(env("SEED"));
  dgm_check->add_option("--tolerance", check_tol, "Allowed deviation from targets");

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit a forest or spline GLM to a dataset CSV");
  fit->add_option("--data", fit_args.data, "Training CSV with a y column")->required()->check(CLI::ExistingFile);
  fit->add_option("--model", fit_args.model, "forest or glm")->check(CLI::IsMember({"forest", "glm"}));
  fit->add_option("--out", fit_args.out, "Model file")->required()->envname(env("OUT"));
  fit->add_option("--seed", fit_args.seed, "Seed for the split and the forest")->envname(env("SEED"));
  fit->add_option("--split", fit_args.split, "Fraction of rows used for training (default: all)");
  fit->add_option("--train-out", fit_args.train_out, "Write the training part of the split");
  fit->add_option("--test-out", fit_args.test_out, "Write the held-out part of the split");
  fit->add_option("--n-tree", fit_args.n_tree, "Trees")->check(CLI::PositiveNumber);
  fit->add_option("--mtry", fit_args.mtry, "Features tried per split (0: ceil(sqrt(P)))");
  fit->add_option("--min-node-size", fit_args.min_node_size, "Minimum node size")->check(CLI::PositiveNumber);
  fit->add_option("--node-size-rule", fit_args.node_size_rule, "child or parent")
      ->check(CLI::IsMember({"child", "parent"}));
  fit->add_option("--spline", fit_args.splines, "GLM: features given a 3-knot spline");
  fit->add_option("--ridge", fit_args.ridge, "GLM: ridge penalty")->check(CLI::NonNegativeNumber);
  fit->add_option("--workers", fit_args.workers, "Worker threads")->envname(env("WORKERS"));

  std::string model_path, data_path, out_path;
  unsigned workers = 1;
  auto* predict = app.add_subcommand("predict", "Write class probabilities for a dataset");
  predict->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  predict->add_option("--data", data_path, "Feature CSV")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", out_path, "Prediction CSV")->required()->envname(env("OUT"));
  predict->add_option("--workers", workers, "Worker threads")->envname(env("WORKERS"));

  std::string pred_path;
  std::uint64_t pdi_tuples = 1'000'000;
  auto* evaluate = app.add_subcommand("evaluate", "Performance metrics for a prediction CSV");
  evaluate->add_option("--predictions", pred_path, "Prediction CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", data_path, "CSV with the true y")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", out_path, "Metrics JSON (default: stdout)")->envname(env("OUT"));
  evaluate->add_option("--seed", seed, "Seed for sampled PDI tuples")->envname(env("SEED"));
  evaluate->add_option("--pdi-tuples", pdi_tuples, "Sampled tuples when exact PDI is too large");

  std::string slice_path, colormap = "viridis";
  auto* heatmap = app.add_subcommand("heatmap", "Export a probability heatmap over a data-space slice");
  heatmap->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  heatmap->add_option("--slice", slice_path, "Slice JSON")->required()->check(CLI::ExistingFile);
  heatmap->add_option("--data", data_path, "Cases to overlay")->check(CLI::ExistingFile);
  heatmap->add_option("--out", out_path, "Output prefix (.csv and .ppm)")->required()->envname(env("OUT"));
  heatmap->add_option("--colormap", colormap, "viridis or grayscale")
      ->check(CLI::IsMember({"viridis", "grayscale"}));
  heatmap->add_option("--workers", workers, "Worker threads")->envname(env("WORKERS"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*scenarios) return run_scenarios(filter, labels, ids_only);
    if (*generate) return run_generate(gen_dgm, gen_n, seed, gen_out);
    if (*dgm_check) return run_dgm_check(check_filter, check_n, seed, check_tol);
    if (*fit) return run_fit(fit_args);
    if (*predict) return run_predict(model_path, data_path, out_path, workers);
    if (*evaluate) return run_evaluate(pred_path, data_path, out_path, seed, pdi_tuples);
    if (*heatmap) return run_heatmap(model_path, slice_path, data_path, out_path, colormap, workers);
  } catch (const harness::ConfigError& e) {
    std::cerr << "error: invalid configuration key " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
