#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "../support/oracles.hpp"
#include "probforest/glm.hpp"
#include "probforest/numeric.hpp"
#include "probforest/rng.hpp"

namespace glm = probforest::glm;
using probforest::Dataset;
using probforest::Matrix;
using probforest::Rng;

namespace {

// Binary outcomes from logit P = b0 + b . x with standard normal x.
Dataset logistic_sample(std::uint64_t seed, int n, const std::vector<double>& beta) {
  Rng rng(seed);
  Dataset d;
  const std::size_t p = beta.size() - 1;
  d.x = Matrix(static_cast<std::size_t>(n), p);
  for (int i = 0; i < n; ++i) {
    double eta = beta[0];
    for (std::size_t j = 0; j < p; ++j) {
      d.x(i, j) = rng.normal();
      eta += beta[j + 1] * d.x(i, j);
    }
    d.y.push_back(rng.bernoulli(probforest::inverse_logit(eta)) ? 1 : 0);
  }
  return d;
}

// Softmax outcomes with class k linear predictor beta[k] . (1, x).
Dataset multinomial_sample(std::uint64_t seed, int n, const std::vector<std::vector<double>>& beta) {
  Rng rng(seed);
  Dataset d;
  const std::size_t p = beta[0].size() - 1;
  d.x = Matrix(static_cast<std::size_t>(n), p);
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) d.x(i, j) = rng.normal();
    std::vector<double> w{1.0};
    for (const auto& b : beta) {
      double eta = b[0];
      for (std::size_t j = 0; j < p; ++j) eta += b[j + 1] * d.x(i, j);
      w.push_back(std::exp(eta));
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double u = rng.uniform() * total;
    int k = 0;
    while (k + 1 < static_cast<int>(w.size()) && u >= w[k]) u -= w[k++];
    d.y.push_back(k);
  }
  return d;
}

}  // namespace

TEST(Rcs, NonlinearTermHandValues) {
  const glm::RcsBasis b{0.0, 1.0, 2.0};
  // Knots 0, 1, 2: C(x) = [x^3 - 2 (x-1)^3 + (x-2)^3] / 4 on the positive parts.
  EXPECT_DOUBLE_EQ(b.nonlinear_term(-1.0), 0.0);
  EXPECT_DOUBLE_EQ(b.nonlinear_term(0.0), 0.0);
  EXPECT_DOUBLE_EQ(b.nonlinear_term(0.5), 0.125 / 4.0);
  EXPECT_DOUBLE_EQ(b.nonlinear_term(1.5), (3.375 - 2 * 0.125) / 4.0);
  EXPECT_DOUBLE_EQ(b.nonlinear_term(3.0), (27.0 - 2 * 8.0 + 1.0) / 4.0);
}

TEST(Rcs, LinearBeyondOuterKnot) {
  const glm::RcsBasis b{-1.0, 0.3, 2.0};
  const double d1 = b.nonlinear_term(4.0) - b.nonlinear_term(3.0);
  const double d2 = b.nonlinear_term(10.0) - b.nonlinear_term(9.0);
  EXPECT_NEAR(d1, d2, 1e-9);
}

TEST(Rcs, KnotsAtDeciles) {
  std::vector<double> x(101);
  std::iota(x.begin(), x.end(), 0.0);
  const auto b = glm::RcsBasis::from_data(x);
  EXPECT_DOUBLE_EQ(b.t1, 10.0);
  EXPECT_DOUBLE_EQ(b.t2, 50.0);
  EXPECT_DOUBLE_EQ(b.t3, 90.0);
  EXPECT_THROW(glm::RcsBasis::from_data(std::vector<double>(10, 1.0)), std::invalid_argument);
  const auto m = glm::rcs_expand(std::vector<double>{20.0}, b);
  EXPECT_EQ(m(0, 0), 20.0);
  EXPECT_DOUBLE_EQ(m(0, 1), b.nonlinear_term(20.0));
}

TEST(BinaryLogistic, RecoversCoefficients) {
  const auto d = logistic_sample(1, 20000, {-1.0, 0.8, -0.5});
  const auto m = glm::fit_binary_logistic(d.x, d.y);
  ASSERT_TRUE(m.converged);
  EXPECT_NEAR(m.coefficients(0, 0), -1.0, 0.06);
  EXPECT_NEAR(m.coefficients(0, 1), 0.8, 0.06);
  EXPECT_NEAR(m.coefficients(0, 2), -0.5, 0.06);
}

TEST(BinaryLogistic, IndependentOutcomeGivesFlatFit) {
  const auto d = logistic_sample(2, 40000, {std::log(0.25), 0.0, 0.0});
  const auto m = glm::fit_binary_logistic(d.x, d.y);
  const double prevalence = std::accumulate(d.y.begin(), d.y.end(), 0.0) / 40000.0;
  EXPECT_NEAR(m.coefficients(0, 0), probforest::logit(prevalence), 0.05);
  EXPECT_NEAR(m.coefficients(0, 1), 0.0, 0.05);
  EXPECT_NEAR(m.coefficients(0, 2), 0.0, 0.05);
}

TEST(BinaryLogistic, GradientVanishesAtConvergence) {
  const auto d = logistic_sample(3, 2000, {0.3, 1.2, -0.7});
  for (double ridge : {0.0, 0.5}) {
    const auto m = glm::fit_binary_logistic(d.x, d.y, ridge);
    ASSERT_TRUE(m.converged);
    for (double g : glm::penalized_gradient(m.coefficients, d.x, d.y, ridge)) EXPECT_LT(std::abs(g), 1e-6);
  }
}

TEST(BinaryLogistic, SeparationIsReportedNotThrown) {
  const Matrix x{{-2}, {-1}, {1}, {2}};
  const std::vector<int> y{0, 0, 1, 1};
  glm::GlmModel m;
  ASSERT_NO_THROW(m = glm::fit_binary_logistic(x, y));
  EXPECT_FALSE(m.converged);
  EXPECT_TRUE(m.separated);
  EXPECT_TRUE(glm::fit_binary_logistic(x, y, 0.1).converged);
}

TEST(BinaryLogistic, InputErrors) {
  const Matrix x{{1, 5}, {2, 5}, {3, 5}};
  const std::vector<int> y{0, 1, 0};
  EXPECT_THROW(glm::fit_binary_logistic(x, y), glm::GlmError);
  EXPECT_THROW(glm::fit_binary_logistic(Matrix{{1}, {2}}, std::vector<int>{1, 1}), glm::GlmError);
  EXPECT_THROW(glm::fit_binary_logistic(Matrix{{1}, {2}}, std::vector<int>{0, 2}), std::invalid_argument);
  EXPECT_THROW(glm::fit_binary_logistic(Matrix{{1}, {2}}, std::vector<int>{0}), std::invalid_argument);
}

TEST(Gradient, MatchesFiniteDifferences) {
  const auto d = multinomial_sample(4, 300, {{0.2, 0.5, -0.3}, {-0.4, -0.2, 0.9}});
  std::vector<int> y_index = d.y;
  for (double ridge : {0.0, 0.7}) {
    Matrix coef{{0.1, -0.2, 0.3}, {0.05, 0.4, -0.1}};
    const auto grad = glm::penalized_gradient(coef, d.x, y_index, ridge);
    auto f = [&](const std::vector<double>& flat) {
      return glm::penalized_log_likelihood(Matrix(2, 3, flat), d.x, y_index, ridge);
    };
    const std::vector<double> flat(coef.data().begin(), coef.data().end());
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double fd = oracle::finite_difference(f, flat, i);
      EXPECT_NEAR(grad[i], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "coordinate " << i;
    }
  }
}

TEST(Multinomial, RecoversCoefficientsAndSumsToOne) {
  const std::vector<std::vector<double>> truth{{0.5, 1.0, 0.0}, {-0.5, 0.0, -1.0}};
  auto d = multinomial_sample(5, 30000, truth);
  // Arbitrary labels; the smallest becomes the reference.
  for (auto& v : d.y) v = v * 10 + 3;
  const auto m = glm::fit_multinomial(d.x, d.y);
  ASSERT_TRUE(m.converged);
  EXPECT_EQ(m.class_labels, (std::vector<int>{3, 13, 23}));
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(m.coefficients(k, j), truth[k][j], 0.06);
  const auto p = glm::predict_glm(m, d.x);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto row = p.row(i);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
  }
  for (double g : glm::penalized_gradient(m.coefficients, d.x,
                                          [&] {
                                            std::vector<int> idx;
                                            for (int v : d.y) idx.push_back((v - 3) / 10);
                                            return idx;
                                          }(),
                                          0.0)) {
    EXPECT_LT(std::abs(g), 1e-6);
  }
}

TEST(Multinomial, TwoClassesAgreeWithBinaryFit) {
  const auto d = logistic_sample(6, 3000, {-0.5, 1.0, 0.4});
  const auto a = glm::fit_binary_logistic(d.x, d.y);
  const auto b = glm::fit_multinomial(d.x, d.y);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.coefficients(0, j), b.coefficients(0, j), 1e-6);
}

TEST(Multinomial, ZeroCoefficientsGiveUniformProbabilities) {
  glm::GlmModel m;
  m.class_labels = {0, 1, 2, 3};
  m.coefficients = Matrix(3, 3);
  const auto p = glm::predict_glm(m, Matrix{{1.0, -4.0}, {100.0, 3.0}});
  for (double v : p.data()) EXPECT_DOUBLE_EQ(v, 0.25);
  EXPECT_THROW(glm::predict_glm(m, Matrix{{1.0}}), std::invalid_argument);
}

TEST(SplineGlm, FitsCurvatureAndRoundTrips) {
  Rng rng(7);
  Dataset d;
  d.x = Matrix(4000, 2);
  for (int i = 0; i < 4000; ++i) {
    d.x(i, 0) = rng.uniform() * 4.0 - 2.0;
    d.x(i, 1) = rng.normal();
    const double eta = -1.0 + d.x(i, 0) * d.x(i, 0) + 0.5 * d.x(i, 1);
    d.y.push_back(rng.bernoulli(probforest::inverse_logit(eta)) ? 1 : 0);
  }
  d.feature_names = {"u", "v"};
  const std::vector<int> splines{0};
  const auto g = glm::fit_spline_glm(d, splines);
  ASSERT_TRUE(g.model.converged);
  EXPECT_EQ(g.expansion.n_terms(), 3u);
  EXPECT_EQ(g.expansion.term_names(d.feature_names), (std::vector<std::string>{"u", "u'", "v"}));
  // U-shaped risk: the middle of the range is lower than both ends.
  const auto p = g.predict(Matrix{{-1.8, 0.0}, {0.0, 0.0}, {1.8, 0.0}});
  EXPECT_LT(p(1, 1), p(0, 1));
  EXPECT_LT(p(1, 1), p(2, 1));

  const auto path = std::filesystem::temp_directory_path() / "probforest_glm_roundtrip.json";
  g.save(path);
  const auto back = glm::SplineGlm::load(path);
  EXPECT_EQ(back.model.coefficients, g.model.coefficients);
  EXPECT_EQ(back.expansion.splines, g.expansion.splines);
  EXPECT_EQ(back.feature_names, g.feature_names);
  EXPECT_EQ(back.predict(d.x), g.predict(d.x));
  std::filesystem::remove(path);
}
