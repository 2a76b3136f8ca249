#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "probforest/dgm.hpp"
#include "probforest/metrics.hpp"

namespace dgm = probforest::dgm;
using probforest::Matrix;
using probforest::Rng;

TEST(Equicorrelation, ShapeAndRange) {
  const Matrix m = dgm::equicorrelation_matrix(3, 0.4);
  EXPECT_EQ(m, (Matrix{{1, 0.4, 0.4}, {0.4, 1, 0.4}, {0.4, 0.4, 1}}));
  EXPECT_THROW(dgm::equicorrelation_matrix(4, -0.34), std::domain_error);
  EXPECT_THROW(dgm::equicorrelation_matrix(4, 1.0), std::domain_error);
  EXPECT_NO_THROW(dgm::equicorrelation_matrix(4, -0.33));
}

TEST(SampleMvn, CovarianceConvergesToEquicorrelation) {
  Rng rng(11);
  const int n = 100000, p = 4;
  const Matrix x = dgm::sample_mvn(n, p, 0.4, rng);
  for (int a = 0; a < p; ++a) {
    for (int b = a; b < p; ++b) {
      double ma = 0, mb = 0, sab = 0;
      for (int i = 0; i < n; ++i) {
        ma += x(i, a);
        mb += x(i, b);
      }
      ma /= n;
      mb /= n;
      for (int i = 0; i < n; ++i) sab += (x(i, a) - ma) * (x(i, b) - mb);
      EXPECT_NEAR(sab / (n - 1), a == b ? 1.0 : 0.4, 0.02) << a << "," << b;
    }
  }
}

TEST(Binarize, StrictlyAboveThreshold) {
  const Matrix x{{-0.5, 0.0}, {0.5, 2.0}};
  EXPECT_EQ(dgm::binarize(x, 0.0), (Matrix{{0, 0}, {1, 1}}));
}

TEST(DrawOutcomes, RejectsInvalidProbability) {
  Rng rng(1);
  const std::vector<double> bad{0.2, 1.5};
  EXPECT_THROW(dgm::draw_outcomes(bad, rng), std::domain_error);
  const std::vector<double> edge{0.0, 1.0};
  EXPECT_EQ(dgm::draw_outcomes(edge, rng), (std::vector<int>{0, 1}));
}

TEST(LinearPredictor, InterceptPlusWeightedSum) {
  dgm::DgmSpec spec;
  spec.n_predictors = 2;
  spec.intercept = -1.0;
  spec.betas = {0.5, 2.0};
  const auto lp = dgm::linear_predictor(Matrix{{1, 1}, {2, 0}}, spec);
  EXPECT_DOUBLE_EQ(lp[0], 1.5);
  EXPECT_DOUBLE_EQ(lp[1], 0.0);
}

TEST(BuiltinTable, FortyEightUniqueValidMechanisms) {
  const auto table = dgm::builtin_dgm_table();
  ASSERT_EQ(table.size(), 48u);
  std::set<std::string> ids;
  int noise = 0, binary = 0;
  for (const auto& s : table) {
    EXPECT_NO_THROW(s.validate()) << s.id();
    ids.insert(s.id());
    noise += s.n_noise > 0 ? 1 : 0;
    binary += s.distribution == dgm::PredictorDistribution::binary ? 1 : 0;
    EXPECT_EQ(static_cast<int>(s.betas.size()), s.n_predictors);
    EXPECT_EQ(dgm::find_builtin(s.id()), s);
  }
  EXPECT_EQ(ids.size(), 48u);
  EXPECT_EQ(noise, 16);
  EXPECT_EQ(binary, 24);
  EXPECT_THROW(dgm::find_builtin("5c_75_0_bal"), std::out_of_range);
}

TEST(BuiltinTable, NoiseVariantsAppendZeroCoefficients) {
  const auto base = dgm::find_builtin("4b_90_4_unb");
  const auto noisy = dgm::find_builtin("4b_90_4_unb_noise");
  EXPECT_EQ(noisy.n_predictors, 16);
  EXPECT_EQ(noisy.n_noise, 12);
  EXPECT_EQ(noisy.intercept, base.intercept);
  for (int j = 0; j < 4; ++j) EXPECT_EQ(noisy.betas[j], base.betas[j]);
  for (int j = 4; j < 16; ++j) EXPECT_EQ(noisy.betas[j], 0.0);
}

TEST(GenerateDataset, DeterministicAndBinaryWhereRequested) {
  const auto spec = dgm::find_builtin("16b_75_4_bal");
  Rng a(5), b(5);
  const auto d1 = dgm::generate_dataset(spec, 500, a);
  const auto d2 = dgm::generate_dataset(spec, 500, b);
  EXPECT_EQ(d1.x, d2.x);
  EXPECT_EQ(d1.y, d2.y);
  for (double v : d1.x.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
  ASSERT_TRUE(d1.true_p.has_value());
  EXPECT_NO_THROW(d1.validate());
}

// Full 48-mechanism check lives in the acceptance suite; two spot checks here.
TEST(GenerateDataset, EventFractionAndTrueC) {
  for (const char* id : {"4c_75_0_bal", "16b_90_4_unb"}) {
    const auto spec = dgm::find_builtin(id);
    Rng rng(99);
    const auto d = dgm::generate_dataset(spec, 100000, rng);
    const double events = std::accumulate(d.y.begin(), d.y.end(), 0.0) / 100000.0;
    EXPECT_NEAR(events, 0.2, 0.01) << id;
    EXPECT_NEAR(probforest::metrics::c_statistic(*d.true_p, d.y), spec.target_auc, 0.01) << id;
  }
}
