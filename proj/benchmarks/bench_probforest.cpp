#include <benchmark/benchmark.h>

#include <numeric>

#include "probforest/dgm.hpp"
#include "probforest/forest.hpp"
#include "probforest/metrics.hpp"

namespace dgm = probforest::dgm;
namespace forest = probforest::forest;
namespace metrics = probforest::metrics;
using probforest::Dataset;
using probforest::Matrix;
using probforest::Rng;

namespace {

Dataset sample(const char* id, int n) {
  Rng rng(1);
  return dgm::generate_dataset(dgm::find_builtin(id), n, rng);
}

void BM_BestSplit(benchmark::State& state) {
  const auto d = sample("16c_75_0_bal", static_cast<int>(state.range(0)));
  std::vector<forest::WeightedCase> cases;
  for (std::uint32_t i = 0; i < d.size(); ++i) cases.push_back({i, 1});
  std::vector<int> features(16);
  std::iota(features.begin(), features.end(), 0);
  Rng rng(2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forest::best_split({d.x, d.y, 2}, cases, features, 2, rng));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BestSplit)->Arg(200)->Arg(4000);

void BM_GrowTree(benchmark::State& state) {
  const auto d = sample("16c_75_0_bal", static_cast<int>(state.range(0)));
  const std::vector<std::uint32_t> weights(d.size(), 1);
  forest::ForestParams params;
  params.min_node_size = 2;
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(forest::grow_tree({d.x, d.y, 2}, weights, params, rng));
}
BENCHMARK(BM_GrowTree)->Arg(200)->Arg(4000);

void BM_FitForest(benchmark::State& state) {
  const auto d = sample("4c_75_0_bal", 200);
  forest::ForestParams params;
  params.min_node_size = 2;
  for (auto _ : state) benchmark::DoNotOptimize(forest::fit_forest(d, params));
}
BENCHMARK(BM_FitForest)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  const auto train = sample("4c_75_0_bal", 200);
  const auto test = sample("4c_75_0_bal", 10'000);
  forest::ForestParams params;
  const auto f = forest::fit_forest(train, params);
  for (auto _ : state) benchmark::DoNotOptimize(f.predict_proba(test.x));
  state.SetItemsProcessed(state.iterations() * 10'000);
}
BENCHMARK(BM_Predict)->Unit(benchmark::kMillisecond);

void BM_CStatistic(benchmark::State& state) {
  const auto d = sample("4c_75_0_bal", static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(metrics::c_statistic(*d.true_p, d.y));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CStatistic)->Arg(10'000)->Arg(100'000);

void BM_Pdi(benchmark::State& state) {
  const std::size_t n = 1000, k = 4;
  Rng rng(4);
  Matrix probs(n, k);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % k);
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += probs(i, c) = rng.uniform();
    for (std::size_t c = 0; c < k; ++c) probs(i, c) /= s;
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::pdi(probs, y, static_cast<std::uint64_t>(state.range(0)), rng));
}
BENCHMARK(BM_Pdi)->Arg(100'000);

}  // namespace

BENCHMARK_MAIN();
