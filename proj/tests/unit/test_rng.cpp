#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "probforest/rng.hpp"

using probforest::Rng;

TEST(SplitMix, MatchesReferenceFirstOutput) {
  // First output of the reference SplitMix64 generator started from state 0.
  EXPECT_EQ(probforest::splitmix64(0), 0xe220a8397b1dcdafULL);
}

TEST(HashString, MatchesFnv1aReference) {
  EXPECT_EQ(probforest::hash_string(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(probforest::hash_string("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(MixSeed, OrderMattersAndIsStable) {
  EXPECT_NE(probforest::mix_seed(1, 2), probforest::mix_seed(2, 1));
  EXPECT_EQ(probforest::mix_seed(1, 2, 3), probforest::mix_seed(probforest::mix_seed(1, 2), 3));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(probforest::mix_seed(42, i));
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(7), b(7), c(8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformInUnitInterval) {
  Rng rng(1);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Rng, UniformIndexCoversRangeEvenly) {
  Rng rng(2);
  const int k = 7, n = 70000;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) {
    const auto v = rng.uniform_index(k);
    ASSERT_LT(v, static_cast<std::uint64_t>(k));
    ++counts[v];
  }
  // Chi-square with 6 degrees of freedom; 22.46 is the 0.999 quantile.
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / k) * (c - n / k) / static_cast<double>(n / k);
  EXPECT_LT(chi2, 22.46);
  EXPECT_EQ(rng.uniform_index(1), 0u);
  EXPECT_EQ(rng.uniform_index(0), 0u);
}

TEST(Rng, NormalMoments) {
  Rng rng(3);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s1 += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s1 / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
  EXPECT_NEAR(s4 / n, 3.0, 0.06);
}

TEST(Rng, BernoulliFrequency) {
  Rng rng(4);
  int hits = 0;
  for (int i = 0; i < 100000; ++i) hits += rng.bernoulli(0.2) ? 1 : 0;
  EXPECT_NEAR(hits / 100000.0, 0.2, 0.005);
}
