#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "../support/oracles.hpp"
#include "../support/tree_members.hpp"
#include "probforest/dgm.hpp"
#include "probforest/forest.hpp"
#include "probforest/metrics.hpp"

namespace forest = probforest::forest;
using probforest::Dataset;
using probforest::Matrix;
using probforest::Rng;

namespace {

std::vector<forest::WeightedCase> unit_cases(std::size_t n) {
  std::vector<forest::WeightedCase> cases;
  for (std::uint32_t i = 0; i < n; ++i) cases.push_back({i, 1});
  return cases;
}

std::vector<int> all_features(std::size_t p) {
  std::vector<int> f(p);
  std::iota(f.begin(), f.end(), 0);
  return f;
}

Dataset random_dataset(std::uint64_t seed, std::size_t n, std::size_t p, int classes, bool coarse) {
  Rng rng(seed);
  Dataset d;
  d.x = Matrix(n, p);
  for (auto& v : d.x.data()) v = coarse ? static_cast<double>(rng.uniform_index(4)) : rng.normal();
  for (std::size_t i = 0; i < n; ++i) d.y.push_back(static_cast<int>(rng.uniform_index(classes)));
  // Both classes present.
  d.y[0] = 0;
  d.y[1] = 1;
  return d;
}

Dataset simulated(const char* id, int n, std::uint64_t seed) {
  Rng rng(seed);
  return probforest::dgm::generate_dataset(probforest::dgm::find_builtin(id), n, rng);
}

}  // namespace

TEST(Gini, HandValues) {
  EXPECT_DOUBLE_EQ(forest::gini_impurity(std::vector<double>{2, 2}), 0.5);
  EXPECT_DOUBLE_EQ(forest::gini_impurity(std::vector<double>{4, 0}), 0.0);
  EXPECT_NEAR(forest::gini_impurity(std::vector<double>{1, 1, 1}), 2.0 / 3.0, 1e-15);
  EXPECT_THROW(forest::gini_impurity(std::vector<double>{0, 0}), std::invalid_argument);
}

TEST(BestSplit, SeparatesFourPointsAtMidpoint) {
  const Matrix x{{1}, {2}, {3}, {4}};
  const std::vector<int> y{0, 0, 1, 1};
  Rng rng(1);
  const auto cases = unit_cases(4);
  const auto split = forest::best_split({x, y, 2}, cases, all_features(1), 1, rng);
  ASSERT_TRUE(split.has_value());
  EXPECT_EQ(split->feature, 0);
  EXPECT_DOUBLE_EQ(split->threshold, 2.5);
  EXPECT_DOUBLE_EQ(split->gain, 0.5);
}

TEST(BestSplit, NoneWhenChildSizeUnsatisfiable) {
  const Matrix x{{1}, {2}, {3}};
  const std::vector<int> y{0, 1, 0};
  Rng rng(1);
  const auto cases = unit_cases(3);
  EXPECT_FALSE(forest::best_split({x, y, 2}, cases, all_features(1), 2, rng).has_value());
}

TEST(BestSplit, NoneForPureNodeOrConstantFeature) {
  Rng rng(1);
  const auto cases = unit_cases(4);
  const Matrix x{{1}, {2}, {3}, {4}};
  const std::vector<int> pure{1, 1, 1, 1};
  EXPECT_FALSE(forest::best_split({x, pure, 2}, cases, all_features(1), 1, rng).has_value());
  const Matrix flat{{5}, {5}, {5}, {5}};
  const std::vector<int> mixed{0, 1, 0, 1};
  EXPECT_FALSE(forest::best_split({flat, mixed, 2}, cases, all_features(1), 1, rng).has_value());
}

TEST(BestSplit, MatchesExhaustiveSearchWithMultiplicities) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto d = random_dataset(seed, 8, 3, seed % 3 == 0 ? 3 : 2, seed % 2 == 0);
    Rng wrng(seed + 1000);
    std::vector<forest::WeightedCase> cases;
    std::vector<double> weight(8, 0.0);
    std::vector<std::size_t> members;
    for (std::uint32_t i = 0; i < 8; ++i) {
      const auto w = static_cast<std::uint32_t>(wrng.uniform_index(3));
      weight[i] = w;
      if (w == 0) continue;
      cases.push_back({i, w});
      members.push_back(i);
    }
    if (members.empty()) continue;
    const int classes = d.n_classes();
    for (int min_node : {1, 2, 3}) {
      Rng rng(seed);
      const auto got = forest::best_split({d.x, d.y, classes}, cases, all_features(3), min_node, rng);
      const auto candidates = oracle::all_splits(d.x, d.y, weight, members, classes, min_node);
      const double best = oracle::max_gain(candidates);
      if (best <= 1e-12) {
        EXPECT_FALSE(got.has_value()) << "seed " << seed;
        continue;
      }
      ASSERT_TRUE(got.has_value()) << "seed " << seed;
      EXPECT_NEAR(got->gain, best, 1e-12) << "seed " << seed;
      const bool listed = std::any_of(candidates.begin(), candidates.end(), [&](const auto& c) {
        return c.feature == got->feature && c.threshold == got->threshold && std::abs(c.gain - best) < 1e-12;
      });
      EXPECT_TRUE(listed) << "seed " << seed;
    }
  }
}

TEST(BestSplit, TiesAreBrokenAtRandom) {
  // Two identical features: both give the same perfect split.
  const Matrix x{{1, 1}, {2, 2}, {3, 3}, {4, 4}};
  const std::vector<int> y{0, 0, 1, 1};
  const auto cases = unit_cases(4);
  int first = 0;
  for (std::uint64_t s = 0; s < 400; ++s) {
    Rng rng(s);
    first += forest::best_split({x, y, 2}, cases, all_features(2), 1, rng)->feature == 0 ? 1 : 0;
  }
  EXPECT_GT(first, 150);
  EXPECT_LT(first, 250);
}

TEST(GrowTree, EquivalentToExhaustiveCart) {
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    const std::size_t n = 4 + seed % 5;
    const auto d = random_dataset(seed, n, 2, 2, seed % 2 == 1);
    const std::vector<std::uint32_t> weights(n, 1);
    const std::vector<double> wd(n, 1.0);
    forest::ForestParams params;
    params.mtry = 2;
    params.min_node_size = 1;
    Rng rng(seed);
    const auto tree = forest::grow_tree({d.x, d.y, 2}, weights, params, rng);
    ASSERT_TRUE(tree.complete());
    const auto members = oracle::node_members(tree, d.x, weights);
    for (std::size_t node = 0; node < tree.node_count(); ++node) {
      const auto v = tree.node(node);
      const auto candidates = oracle::all_splits(d.x, d.y, wd, members[node], 2, 1);
      const double best = oracle::max_gain(candidates);
      if (v.is_leaf) {
        EXPECT_LE(best, 1e-12) << "seed " << seed << " leaf " << node << " could still split";
        double events = 0;
        for (std::size_t i : members[node]) events += d.y[i];
        ASSERT_FALSE(members[node].empty());
        EXPECT_DOUBLE_EQ(v.class_proportions[1], events / static_cast<double>(members[node].size()));
      } else {
        EXPECT_NEAR(v.split.gain, best, 1e-12) << "seed " << seed << " node " << node;
      }
    }
  }
}

TEST(GrowTree, SeparableDataGivesPureLeaves) {
  const Matrix x{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const std::vector<int> y{0, 0, 0, 1};  // AND: needs two levels
  Dataset d{x, y, std::nullopt, {}};
  forest::ForestParams params;
  params.n_tree = 1;
  params.mtry = 2;
  params.min_node_size = 1;
  const std::vector<std::uint32_t> weights(4, 1);
  Rng rng(3);
  const auto tree = forest::grow_tree({x, y, 2}, weights, params, rng);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto p = tree.predict(x.row(i));
    EXPECT_EQ(p[static_cast<std::size_t>(y[i])], 1.0);
  }
}

TEST(GrowTree, LeavesRespectChildSizeRule) {
  const auto d = simulated("4c_75_0_bal", 300, 8);
  for (int min_node : {1, 5, 20}) {
    forest::ForestParams params;
    params.min_node_size = min_node;
    Rng rng(min_node);
    std::vector<std::uint32_t> weights(300, 0);
    for (int i = 0; i < 300; ++i) ++weights[rng.uniform_index(300)];
    const auto tree = forest::grow_tree({d.x, d.y, 2}, weights, params, rng);
    for (std::size_t node = 0; node < tree.node_count(); ++node) {
      const auto v = tree.node(node);
      if (v.is_leaf) EXPECT_GE(v.n_cases, min_node);
    }
  }
}

TEST(GrowTree, ParentRuleStopsAtNodeSize) {
  const auto d = simulated("4c_75_0_bal", 300, 8);
  forest::ForestParams params;
  params.min_node_size = 10;
  params.node_size_rule = forest::NodeSizeRule::parent;
  const std::vector<std::uint32_t> weights(300, 1);
  Rng rng(1);
  const auto tree = forest::grow_tree({d.x, d.y, 2}, weights, params, rng);
  const auto members = oracle::node_members(tree, d.x, weights);
  bool small_leaf = false;
  for (std::size_t node = 0; node < tree.node_count(); ++node) {
    const auto v = tree.node(node);
    if (!v.is_leaf) EXPECT_GT(members[node].size(), 10u);
    if (v.is_leaf && v.n_cases < 10) small_leaf = true;
  }
  EXPECT_TRUE(small_leaf) << "parent rule should allow children below the node size";
}

TEST(Forest, SingleLeafPredictsPrevalence) {
  const auto d = simulated("4c_75_0_bal", 50, 2);
  forest::ForestParams params;
  params.n_tree = 1;
  params.min_node_size = 50;
  const auto f = forest::fit_forest(d, params);
  EXPECT_EQ(f.trees()[0].node_count(), 1u);
  double events = 0.0;
  for (std::size_t i = 0; i < 50; ++i) events += f.inbag(0)[i] * d.y[i];
  const auto p = f.predict_proba(d.x);
  for (std::size_t i = 0; i < p.rows(); ++i) EXPECT_DOUBLE_EQ(p(i, 1), events / 50.0);
}

TEST(Forest, RowsSumToOneAndDeterministicAcrossWorkers) {
  auto d = simulated("16c_75_4_unb", 200, 4);
  for (std::size_t i = 0; i < d.size(); i += 3) d.y[i] = 2;  // three classes
  forest::ForestParams params;
  params.n_tree = 60;
  params.seed = 77;
  const auto f1 = forest::fit_forest(d, params, 1);
  const auto f3 = forest::fit_forest(d, params, 3);
  EXPECT_EQ(f1, f3);
  const auto test = simulated("16c_75_4_unb", 300, 5);
  const auto p1 = f1.predict_proba(test.x, 1);
  EXPECT_EQ(p1, f3.predict_proba(test.x, 4));
  for (std::size_t i = 0; i < p1.rows(); ++i) {
    const auto row = p1.row(i);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Forest, MajorityVoteFractions) {
  const auto d = simulated("4c_75_0_bal", 200, 6);
  forest::ForestParams params;
  params.n_tree = 40;
  params.vote_mode = forest::VoteMode::majority_vote_fraction;
  const auto p = forest::fit_forest(d, params).predict_proba(d.x);
  for (double v : p.data()) {
    const double votes = v * 40.0;
    EXPECT_NEAR(votes, std::round(votes), 1e-9);
  }
}

TEST(Forest, BootstrapInbagCoverage) {
  const auto d = simulated("4c_75_0_bal", 1000, 7);
  forest::ForestParams params;
  params.n_tree = 200;
  params.min_node_size = 50;
  const auto f = forest::fit_forest(d, params);
  double inbag = 0.0;
  for (std::size_t t = 0; t < 200; ++t) {
    const auto counts = f.inbag(t);
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), 0u), 1000u);
    for (auto c : counts) inbag += c > 0 ? 1.0 : 0.0;
  }
  EXPECT_NEAR(inbag / (200.0 * 1000.0), 1.0 - std::exp(-1.0), 0.02);
}

TEST(Forest, OobNotBetterThanApparent) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = simulated("4c_75_0_bal", 200, seed);
    forest::ForestParams params;
    params.n_tree = 100;
    params.seed = seed;
    const auto f = forest::fit_forest(d, params);
    const auto apparent = f.predict_proba(d.x).column(1);
    const auto oob = f.predict_oob(d);
    std::vector<double> p;
    std::vector<int> y;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (oob.missing[i]) continue;
      p.push_back(oob.probabilities(i, 1));
      y.push_back(d.y[i]);
    }
    EXPECT_LE(probforest::metrics::c_statistic(p, y), probforest::metrics::c_statistic(apparent, d.y));
  }
}

TEST(Forest, OobUsesOnlyOutOfBagTrees) {
  const auto d = simulated("4c_75_0_bal", 60, 1);
  forest::ForestParams params;
  params.n_tree = 30;
  const auto f = forest::fit_forest(d, params);
  const auto oob = f.predict_oob(d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    int count = 0;
    double sum = 0.0;
    for (std::size_t t = 0; t < 30; ++t) {
      if (f.inbag(t)[i] != 0) continue;
      ++count;
      sum += f.trees()[t].predict(d.x.row(i))[1];
    }
    EXPECT_EQ(oob.n_oob_trees[i], count);
    EXPECT_EQ(static_cast<bool>(oob.missing[i]), count == 0);
    if (count > 0) EXPECT_NEAR(oob.probabilities(i, 1), sum / count, 1e-12);
  }
}

TEST(Forest, SaveLoadRoundTrip) {
  const auto d = simulated("4b_90_4_unb", 150, 9);
  forest::ForestParams params;
  params.n_tree = 25;
  params.node_size_rule = forest::NodeSizeRule::parent;
  const auto f = forest::fit_forest(d, params);
  const auto path = std::filesystem::temp_directory_path() / "probforest_forest_roundtrip.txt";
  f.save(path);
  const auto back = forest::Forest::load(path);
  EXPECT_EQ(back, f);
  EXPECT_EQ(back.predict_proba(d.x), f.predict_proba(d.x));
  std::filesystem::remove(path);
}

TEST(Forest, RejectsDegenerateTrainingData) {
  Dataset d{Matrix{{1}, {2}}, {1, 1}, std::nullopt, {}};
  EXPECT_THROW(forest::fit_forest(d, {}), std::invalid_argument);
  Dataset one{Matrix{{1}}, {0}, std::nullopt, {}};
  EXPECT_THROW(forest::fit_forest(one, {}), std::invalid_argument);
  forest::ForestParams bad;
  bad.mtry = 5;
  EXPECT_THROW(bad.validate(4), std::invalid_argument);
  EXPECT_EQ(forest::ForestParams{}.resolved_mtry(16), 4);
  EXPECT_EQ(forest::ForestParams{}.resolved_mtry(5), 3);
}

TEST(Forest, ApparentDiscriminationAtSmallNodeSize) {
  const auto d = simulated("16c_75_0_bal", 200, 21);
  forest::ForestParams params;
  params.min_node_size = 2;
  const auto p = forest::fit_forest(d, params).predict_proba(d.x).column(1);
  EXPECT_GE(probforest::metrics::c_statistic(p, d.y), 0.99);
}

TEST(Forest, ApparentDiscriminationWithFourBinaryPredictors) {
  // Sixteen distinct covariate patterns cap the apparent c-statistic near
  // the true one.
  const auto d = simulated("4b_75_0_bal", 4000, 22);
  forest::ForestParams params;
  params.min_node_size = 2;
  const auto p = forest::fit_forest(d, params).predict_proba(d.x).column(1);
  EXPECT_NEAR(probforest::metrics::c_statistic(p, d.y), 0.762, 0.02);
}
