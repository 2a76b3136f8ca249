#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "probforest/dataset.hpp"
#include "probforest/dgm.hpp"
#include "probforest/forest.hpp"
#include "probforest/metrics.hpp"

// Simulation grid: scenario enumeration, per-run fitting and evaluation,
// aggregation into summary rows, and persistence.
namespace probforest::harness {

/// How the node-size token of a scenario id maps to min_node_size.
/// `swapped` runs label 2 with node size 20 and label 20 with node size 2,
/// the convention under which the reference results were labelled;
/// `literal` reads the token as is.
enum class NodeSizeLabels { swapped, literal };

struct Scenario {
  dgm::DgmSpec dgm;
  int n_train = 200;
  int node_label = 2;  ///< node-size token in the id: 2 or 20

  /// "b_<dgm id>_<node label>_<n_train>", e.g. "b_4b_75_0_bal_2_4000".
  std::string id() const;
  int min_node_size(NodeSizeLabels labels) const;

  /// Inverse of id(); the DGM must be built in. Throws std::invalid_argument.
  static Scenario parse(std::string_view id);
};

/// All 192 scenarios (48 DGMs x n in {200, 4000} x node label in {2, 20}),
/// sorted by id.
std::vector<Scenario> enumerate_scenarios();

/// Shell-style glob (`*`, `?`, `[...]`) against the whole id.
bool matches_filter(std::string_view id, std::string_view pattern);
std::vector<Scenario> filter_scenarios(const std::vector<Scenario>& all, std::string_view pattern);

/// Test set shared by every scenario of one DGM, seeded from
/// (master_seed, dgm id, "test").
Dataset make_test_set(const dgm::DgmSpec& spec, int n_test, std::uint64_t master_seed);

/// c-statistic of the true probabilities on the test outcomes.
double true_c_statistic(const Dataset& test);

std::uint64_t training_seed(std::uint64_t master_seed, std::string_view scenario_id, int run);

struct ConfigError : std::runtime_error {
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), key(std::move(key)) {}
  std::string key;
};

struct HarnessConfig {
  std::uint64_t master_seed = 20190601;
  int r_runs = 100;
  int n_test = 10'000;
  std::string filter = "*";
  unsigned workers = 1;
  std::filesystem::path output_dir = "results";
  int n_tree = 500;
  forest::NodeSizeRule node_size_rule = forest::NodeSizeRule::parent;
  NodeSizeLabels node_size_labels = NodeSizeLabels::swapped;
  /// Test predictions (runs x n_test) kept in memory up to this many values;
  /// larger grids spill to a scratch file in output_dir.
  std::uint64_t memory_budget = 200'000'000;
  bool write_runs = false;
  int max_retries = 5;

  /// Throws ConfigError naming the offending key.
  void validate() const;

  /// Parses a JSON object; unknown keys and wrong types raise ConfigError.
  static HarnessConfig from_json(std::string_view text);
  static HarnessConfig load(const std::filesystem::path& path);
  std::string to_json() const;
};

struct RunRecord {
  int run = 0;
  std::uint64_t seed = 0;  ///< training seed of the attempt that was kept
  int retries = 0;
  bool completed = false;
  std::string error;
  metrics::RunMetrics metrics;
  double test_c_expected = 0.0;  ///< test c-statistic against true_p (diagnostic)
};

struct ScenarioResult {
  std::string scenario_id;
  std::vector<RunRecord> runs;
  metrics::MseDecomposition decomposition;  ///< NaN when fewer than 2 runs completed
  double true_c = 0.0;
};

/// Fits r_runs forests for `s` and evaluates each on the training data and
/// on `test`. Failed fits (a single-class training draw) are retried with a
/// derived seed up to config.max_retries times, then recorded as failed.
ScenarioResult run_scenario(const Scenario& s, const Dataset& test, const HarnessConfig& config);

struct SummaryRow {
  std::string scenario_id;
  metrics::Summary train_c, test_c, train_slope, test_slope;
  metrics::MseDecomposition decomposition;
  double true_c = 0.0;
  double discrimination_loss = 0.0;
  int runs_completed = 0;
  int n_slope_nonconverged = 0;  ///< train and test fits combined; not in the CSV
  int retries = 0;               ///< not in the CSV

  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

/// Medians and IQRs over completed runs; slopes over converged fits only.
/// Throws std::invalid_argument when no run completed.
SummaryRow aggregate(const ScenarioResult& result);

extern const char* const kSummaryHeader;

void write_summary(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);
/// Reads the columns written by write_summary; fields absent from the CSV
/// (mean/SD of the Summary structs, counts other than runs_completed) are
/// left at their defaults.
std::vector<SummaryRow> read_summary(const std::filesystem::path& path);

void write_runs_csv(const ScenarioResult& result, const std::filesystem::path& path);

struct SimulationOutput {
  std::vector<SummaryRow> rows;
  int failed_runs = 0;
  double wall_seconds = 0.0;
};

using ProgressFn = std::function<void(const SummaryRow&, std::size_t done, std::size_t total)>;

/// Runs every scenario matching config.filter, generating each DGM's test
/// set once. Writes summary.csv and metadata.json (and runs_<id>.csv when
/// requested) into config.output_dir, which must exist.
SimulationOutput run_simulation(const HarnessConfig& config, const ProgressFn& progress = {});

std::string to_string(NodeSizeLabels labels);
NodeSizeLabels parse_node_size_labels(std::string_view s);

}  // namespace probforest::harness
