#include "probforest/harness.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "probforest/parallel.hpp"

namespace probforest::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// ---------------------------------------------------------------------------
// Scenarios

std::string Scenario::id() const {
  return "b_" + dgm.id() + '_' + std::to_string(node_label) + '_' + std::to_string(n_train);
}

int Scenario::min_node_size(NodeSizeLabels labels) const {
  if (labels == NodeSizeLabels::literal) return node_label;
  return node_label == 2 ? 20 : node_label == 20 ? 2 : node_label;
}

Scenario Scenario::parse(std::string_view id) {
  auto fail = [&](const char* why) {
    return std::invalid_argument("scenario id '" + std::string(id) + "': " + why);
  };
  if (!id.starts_with("b_")) throw fail("must start with b_");
  const auto last = id.rfind('_');
  if (last == std::string_view::npos || last < 2) throw fail("missing training size");
  const auto second = id.rfind('_', last - 1);
  if (second == std::string_view::npos || second < 2) throw fail("missing node size");
  Scenario s;
  try {
    s.n_train = std::stoi(std::string(id.substr(last + 1)));
    s.node_label = std::stoi(std::string(id.substr(second + 1, last - second - 1)));
  } catch (const std::exception&) {
    throw fail("node size and training size must be integers");
  }
  try {
    s.dgm = dgm::find_builtin(id.substr(2, second - 2));
  } catch (const std::out_of_range&) {
    throw fail("unknown data-generating mechanism");
  }
  if (s.id() != id) throw fail("not in canonical form");
  return s;
}

std::vector<Scenario> enumerate_scenarios() {
  std::vector<Scenario> out;
  for (const auto& spec : dgm::builtin_dgm_table()) {
    for (int n : {200, 4000}) {
      for (int node : {2, 20}) out.push_back({spec, n, node});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Scenario& a, const Scenario& b) { return a.id() < b.id(); });
  return out;
}

bool matches_filter(std::string_view id, std::string_view pattern) {
  return fnmatch(std::string(pattern).c_str(), std::string(id).c_str(), 0) == 0;
}

std::vector<Scenario> filter_scenarios(const std::vector<Scenario>& all, std::string_view pattern) {
  std::vector<Scenario> out;
  std::copy_if(all.begin(), all.end(), std::back_inserter(out),
               [&](const Scenario& s) { return matches_filter(s.id(), pattern); });
  return out;
}

Dataset make_test_set(const dgm::DgmSpec& spec, int n_test, std::uint64_t master_seed) {
  Rng rng(mix_seed(master_seed, hash_string(spec.id()), hash_string("test")));
  return dgm::generate_dataset(spec, n_test, rng);
}

double true_c_statistic(const Dataset& test) {
  if (!test.true_p) throw std::invalid_argument("true_c_statistic: test set has no true_p");
  return metrics::c_statistic(*test.true_p, test.y);
}

std::uint64_t training_seed(std::uint64_t master_seed, std::string_view scenario_id, int run) {
  return mix_seed(master_seed, hash_string(scenario_id), static_cast<std::uint64_t>(run));
}

std::string to_string(NodeSizeLabels labels) {
  return labels == NodeSizeLabels::swapped ? "swapped" : "literal";
}

NodeSizeLabels parse_node_size_labels(std::string_view s) {
  if (s == "swapped") return NodeSizeLabels::swapped;
  if (s == "literal") return NodeSizeLabels::literal;
  throw std::invalid_argument("unknown node size labels '" + std::string(s) +
                              "' (expected swapped or literal)");
}

// ---------------------------------------------------------------------------
// Configuration

void HarnessConfig::validate() const {
  if (r_runs < 1) throw ConfigError("r_runs", "must be at least 1");
  if (n_test < 2) throw ConfigError("n_test", "must be at least 2");
  if (workers < 1) throw ConfigError("workers", "must be at least 1");
  if (n_tree < 1) throw ConfigError("n_tree", "must be at least 1");
  if (max_retries < 0) throw ConfigError("max_retries", "must be non-negative");
  if (filter.empty()) throw ConfigError("filter", "must not be empty");
}

HarnessConfig HarnessConfig::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<document>", e.what());
  }
  if (!j.is_object()) throw ConfigError("<document>", "expected a JSON object");
  HarnessConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "master_seed") c.master_seed = value.get<std::uint64_t>();
      else if (key == "r_runs") c.r_runs = value.get<int>();
      else if (key == "n_test") c.n_test = value.get<int>();
      else if (key == "filter") c.filter = value.get<std::string>();
      else if (key == "workers") c.workers = value.get<unsigned>();
      else if (key == "output_dir") c.output_dir = value.get<std::string>();
      else if (key == "n_tree") c.n_tree = value.get<int>();
      else if (key == "node_size_rule")
        c.node_size_rule = forest::parse_node_size_rule(value.get<std::string>());
      else if (key == "node_size_labels")
        c.node_size_labels = parse_node_size_labels(value.get<std::string>());
      else if (key == "memory_budget") c.memory_budget = value.get<std::uint64_t>();
      else if (key == "write_runs") c.write_runs = value.get<bool>();
      else if (key == "max_retries") c.max_retries = value.get<int>();
      else throw ConfigError(key, "unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(key, e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  }
  c.validate();
  return c;
}

HarnessConfig HarnessConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<document>", "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

std::string HarnessConfig::to_json() const {
  nlohmann::json j{{"master_seed", master_seed},
                   {"r_runs", r_runs},
                   {"n_test", n_test},
                   {"filter", filter},
                   {"workers", workers},
                   {"output_dir", output_dir.string()},
                   {"n_tree", n_tree},
                   {"node_size_rule", forest::to_string(node_size_rule)},
                   {"node_size_labels", to_string(node_size_labels)},
                   {"memory_budget", memory_budget},
                   {"write_runs", write_runs},
                   {"max_retries", max_retries}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Running

namespace {

// Runs x observations of test predictions, in memory or in a scratch file.
class PredictionStore {
 public:
  PredictionStore(std::size_t runs, std::size_t n, std::uint64_t budget,
                  const std::filesystem::path& scratch_dir)
      : runs_(runs), n_(n) {
    if (static_cast<double>(runs) * static_cast<double>(n) <= static_cast<double>(budget)) {
      memory_.assign(runs * n, 0.0);
      return;
    }
    path_ = scratch_dir / ("predictions-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) +
                           ".bin");
    file_.open(path_, std::ios::binary | std::ios::in | std::ios::out | std::ios::trunc);
    if (!file_) throw std::runtime_error("cannot create scratch file " + path_.string());
  }
  PredictionStore(const PredictionStore&) = delete;
  PredictionStore& operator=(const PredictionStore&) = delete;
  ~PredictionStore() {
    if (!path_.empty()) {
      file_.close();
      std::error_code ec;
      std::filesystem::remove(path_, ec);
    }
  }

  void put(std::size_t run, std::span<const double> values) {
    if (path_.empty()) {
      std::copy(values.begin(), values.end(), memory_.begin() + static_cast<std::ptrdiff_t>(run * n_));
      return;
    }
    std::lock_guard lock(mutex_);
    file_.seekp(static_cast<std::streamoff>(run * n_ * sizeof(double)));
    file_.write(reinterpret_cast<const char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!file_) throw std::runtime_error("write failed for " + path_.string());
  }

  void get(std::size_t run, std::span<double> out) {
    if (path_.empty()) {
      std::copy_n(memory_.begin() + static_cast<std::ptrdiff_t>(run * n_), n_, out.begin());
      return;
    }
    std::lock_guard lock(mutex_);
    file_.seekg(static_cast<std::streamoff>(run * n_ * sizeof(double)));
    file_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n_ * sizeof(double)));
    if (!file_) throw std::runtime_error("read failed for " + path_.string());
  }

  std::size_t runs() const noexcept { return runs_; }

 private:
  std::size_t runs_;
  std::size_t n_;
  std::vector<double> memory_;
  std::filesystem::path path_;
  std::fstream file_;
  std::mutex mutex_;
};

// Two streaming passes over the completed runs: means, then squared
// deviations. Matches metrics::per_observation_error.
metrics::MseDecomposition decompose_stored(PredictionStore& store, const std::vector<RunRecord>& runs,
                                           std::span<const double> true_p) {
  const std::size_t n = true_p.size();
  std::vector<std::size_t> completed;
  for (const auto& r : runs)
    if (r.completed) completed.push_back(static_cast<std::size_t>(r.run));
  if (completed.size() < 2) return {kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
  std::vector<double> row(n), mean(n, 0.0), var(n, 0.0);
  for (std::size_t r : completed) {
    store.get(r, row);
    for (std::size_t j = 0; j < n; ++j) mean[j] += row[j];
  }
  const double count = static_cast<double>(completed.size());
  for (auto& m : mean) m /= count;
  for (std::size_t r : completed) {
    store.get(r, row);
    for (std::size_t j = 0; j < n; ++j) var[j] += (row[j] - mean[j]) * (row[j] - mean[j]);
  }
  metrics::PerObservationError e{std::vector<double>(n), std::vector<double>(n),
                                 std::vector<double>(n)};
  for (std::size_t j = 0; j < n; ++j) {
    e.variance[j] = var[j] / count;
    const double b = mean[j] - true_p[j];
    e.squared_bias[j] = b * b;
    e.mse[j] = e.squared_bias[j] + e.variance[j];
  }
  return metrics::decompose(e);
}

bool has_both_classes(std::span<const int> y) {
  return std::find(y.begin(), y.end(), 0) != y.end() && std::find(y.begin(), y.end(), 1) != y.end();
}

}  // namespace

ScenarioResult run_scenario(const Scenario& s, const Dataset& test, const HarnessConfig& config) {
  config.validate();
  if (!test.true_p) throw std::invalid_argument("run_scenario: test set has no true_p");
  ScenarioResult result;
  result.scenario_id = s.id();
  result.true_c = true_c_statistic(test);
  const auto runs = static_cast<std::size_t>(config.r_runs);
  result.runs.resize(runs);
  PredictionStore store(runs, test.size(), config.memory_budget, config.output_dir);

  forest::ForestParams params;
  params.n_tree = config.n_tree;
  params.min_node_size = s.min_node_size(config.node_size_labels);
  params.node_size_rule = config.node_size_rule;

  parallel_for(runs, config.workers, [&](std::size_t r) {
    RunRecord& rec = result.runs[r];
    rec.run = static_cast<int>(r);
    const std::uint64_t base = training_seed(config.master_seed, result.scenario_id, rec.run);
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
      rec.seed = attempt == 0 ? base : mix_seed(base, hash_string("retry"), attempt);
      rec.retries = attempt;
      Rng rng(rec.seed);
      const Dataset train = dgm::generate_dataset(s.dgm, s.n_train, rng);
      if (!has_both_classes(train.y)) {
        rec.error = "training draw has a single outcome class";
        continue;
      }
      try {
        auto p = params;
        p.seed = mix_seed(rec.seed, hash_string("forest"));
        const auto forest = forest::fit_forest(train, p);
        const auto train_p = forest.predict_proba(train.x).column(1);
        const auto test_p = forest.predict_proba(test.x).column(1);
        rec.metrics = metrics::evaluate_run(train_p, train.y, test_p, test.y);
        rec.test_c_expected = metrics::expected_c_statistic(test_p, *test.true_p);
        store.put(r, test_p);
        rec.completed = true;
        rec.error.clear();
        return;
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
    }
  });

  result.decomposition = decompose_stored(store, result.runs, *test.true_p);
  return result;
}

SummaryRow aggregate(const ScenarioResult& result) {
  std::vector<double> train_c, test_c, train_slope, test_slope;
  SummaryRow row;
  row.scenario_id = result.scenario_id;
  for (const auto& r : result.runs) {
    row.retries += r.retries;
    if (!r.completed) continue;
    ++row.runs_completed;
    train_c.push_back(r.metrics.train_c);
    test_c.push_back(r.metrics.test_c);
    if (r.metrics.train_slope.converged) train_slope.push_back(r.metrics.train_slope.slope);
    else ++row.n_slope_nonconverged;
    if (r.metrics.test_slope.converged) test_slope.push_back(r.metrics.test_slope.slope);
    else ++row.n_slope_nonconverged;
  }
  if (row.runs_completed == 0) {
    throw std::invalid_argument("aggregate: no completed runs for " + result.scenario_id);
  }
  auto summarize_or_nan = [](const std::vector<double>& v) {
    return v.empty() ? metrics::Summary{kNaN, kNaN, kNaN, kNaN} : metrics::summarize(v);
  };
  row.train_c = metrics::summarize(train_c);
  row.test_c = metrics::summarize(test_c);
  row.train_slope = summarize_or_nan(train_slope);
  row.test_slope = summarize_or_nan(test_slope);
  row.decomposition = result.decomposition;
  row.true_c = result.true_c;
  row.discrimination_loss = metrics::discrimination_loss(result.true_c, test_c);
  return row;
}

// ---------------------------------------------------------------------------
// Persistence

const char* const kSummaryHeader =
    "scenario,median_train_auc,iqr_train_auc,median_test_auc,iqr_test_auc,median_train_slope,"
    "iqr_train_slope,median_test_slope,iqr_test_slope,mean_variance,sd_variance,mean_sq_bias,"
    "sd_sq_bias,mean_mse,sd_mse,true_auc,discrimination_loss,runs_completed";

void write_summary(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    const double values[] = {r.train_c.median,
                             r.train_c.iqr,
                             r.test_c.median,
                             r.test_c.iqr,
                             r.train_slope.median,
                             r.train_slope.iqr,
                             r.test_slope.median,
                             r.test_slope.iqr,
                             r.decomposition.variance,
                             r.decomposition.sd_variance,
                             r.decomposition.squared_bias,
                             r.decomposition.sd_squared_bias,
                             r.decomposition.mse,
                             r.decomposition.sd_mse,
                             r.true_c,
                             r.discrimination_loss};
    out << r.scenario_id;
    for (double v : values) out << ',' << format_significant(v, 6);
    out << ',' << r.runs_completed << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<SummaryRow> read_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSummaryHeader) throw std::runtime_error(path.string() + ": unexpected header");
  std::vector<SummaryRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (f.size() != 18) throw std::runtime_error(where + ": expected 18 fields");
    auto num = [&](std::size_t i) { return parse_double(f[i], where); };
    SummaryRow r;
    r.scenario_id = f[0];
    r.train_c.median = num(1);
    r.train_c.iqr = num(2);
    r.test_c.median = num(3);
    r.test_c.iqr = num(4);
    r.train_slope.median = num(5);
    r.train_slope.iqr = num(6);
    r.test_slope.median = num(7);
    r.test_slope.iqr = num(8);
    r.decomposition.variance = num(9);
    r.decomposition.sd_variance = num(10);
    r.decomposition.squared_bias = num(11);
    r.decomposition.sd_squared_bias = num(12);
    r.decomposition.mse = num(13);
    r.decomposition.sd_mse = num(14);
    r.true_c = num(15);
    r.discrimination_loss = num(16);
    r.runs_completed = static_cast<int>(num(17));
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_runs_csv(const ScenarioResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "run,seed,retries,completed,train_c,test_c,train_slope,train_slope_converged,test_slope,"
         "test_slope_converged,train_brier,test_brier,train_logloss,test_logloss,test_c_expected\n";
  for (const auto& r : result.runs) {
    const auto& m = r.metrics;
    out << r.run << ',' << r.seed << ',' << r.retries << ',' << (r.completed ? 1 : 0);
    if (!r.completed) {
      out << ",,,,,,,,,,,\n";
      continue;
    }
    out << ',' << format_double(m.train_c) << ',' << format_double(m.test_c) << ','
        << format_double(m.train_slope.slope) << ',' << (m.train_slope.converged ? 1 : 0) << ','
        << format_double(m.test_slope.slope) << ',' << (m.test_slope.converged ? 1 : 0) << ','
        << format_double(m.train_brier) << ',' << format_double(m.test_brier) << ','
        << format_double(m.train_logloss) << ',' << format_double(m.test_logloss) << ','
        << format_double(r.test_c_expected) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

SimulationOutput run_simulation(const HarnessConfig& config, const ProgressFn& progress) {
  config.validate();
  if (!std::filesystem::is_directory(config.output_dir)) {
    throw ConfigError("output_dir", "directory " + config.output_dir.string() + " does not exist");
  }
  const auto scenarios = filter_scenarios(enumerate_scenarios(), config.filter);
  const auto start = std::chrono::steady_clock::now();

  SimulationOutput output;
  nlohmann::json per_scenario = nlohmann::json::array();
  std::map<std::string, Dataset> test_sets;
  for (const auto& s : scenarios) {
    const auto dgm_id = s.dgm.id();
    auto it = test_sets.find(dgm_id);
    if (it == test_sets.end()) {
      it = test_sets.emplace(dgm_id, make_test_set(s.dgm, config.n_test, config.master_seed)).first;
    }
    const auto result = run_scenario(s, it->second, config);
    if (config.write_runs) write_runs_csv(result, config.output_dir / ("runs_" + s.id() + ".csv"));
    int failed = 0;
    for (const auto& r : result.runs) failed += r.completed ? 0 : 1;
    output.failed_runs += failed;
    SummaryRow row;
    if (failed < config.r_runs) {
      row = aggregate(result);
      output.rows.push_back(row);
    }
    per_scenario.push_back({{"scenario", s.id()},
                            {"min_node_size", s.min_node_size(config.node_size_labels)},
                            {"runs_failed", failed},
                            {"retries", row.retries},
                            {"slope_fits_nonconverged", row.n_slope_nonconverged}});
    if (progress) progress(row, per_scenario.size(), scenarios.size());
  }
  output.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_summary(output.rows, config.output_dir / "summary.csv");
  nlohmann::json meta{{"config", nlohmann::json::parse(config.to_json())},
                      {"scenarios", per_scenario},
                      {"failed_runs", output.failed_runs},
                      {"wall_seconds", output.wall_seconds},
                      {"compiler", __VERSION__},
                      {"cplusplus", __cplusplus}};
  std::ofstream out(config.output_dir / "metadata.json");
  if (!out) throw std::runtime_error("cannot write metadata.json in " + config.output_dir.string());
  out << meta.dump(2) << '\n';
  return output;
}

}  // namespace probforest::harness
