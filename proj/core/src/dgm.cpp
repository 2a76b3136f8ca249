#include "probforest/dgm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "probforest/numeric.hpp"

namespace probforest::dgm {

std::string DgmSpec::id() const {
  const int true_predictors = n_predictors - n_noise;
  std::string s = std::to_string(true_predictors);
  s += distribution == PredictorDistribution::binary ? 'b' : 'c';
  s += '_' + std::to_string(static_cast<int>(std::lround(target_auc * 100)));
  s += '_' + std::to_string(static_cast<int>(std::lround(correlation * 10)));
  s += strength == CoefficientStrength::balanced ? "_bal" : "_unb";
  if (n_noise > 0) s += "_noise";
  return s;
}

void DgmSpec::validate() const {
  if (n_predictors < 1) throw std::invalid_argument("DgmSpec: n_predictors must be >= 1");
  if (n_noise < 0 || n_noise >= n_predictors) {
    throw std::invalid_argument("DgmSpec: need 0 <= n_noise < n_predictors");
  }
  if (betas.size() != static_cast<std::size_t>(n_predictors)) {
    throw std::invalid_argument("DgmSpec: betas length differs from n_predictors");
  }
  int zeros = 0;
  for (double b : betas) zeros += b == 0.0;
  if (n_noise > 0 && zeros != n_noise) {
    throw std::invalid_argument("DgmSpec: expected exactly n_noise zero coefficients");
  }
}

Matrix equicorrelation_matrix(int p, double rho) {
  if (p < 1) throw std::domain_error("equicorrelation_matrix: p must be >= 1");
  const double lower = p > 1 ? -1.0 / (p - 1) : -std::numeric_limits<double>::infinity();
  if (!(rho > lower && rho < 1.0)) {
    throw std::domain_error("equicorrelation_matrix: rho=" + std::to_string(rho) +
                            " is outside the positive-definite range for p=" + std::to_string(p));
  }
  Matrix m(p, p, rho);
  for (int i = 0; i < p; ++i) m(i, i) = 1.0;
  return m;
}

Matrix sample_mvn(int n, int p, double rho, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_mvn: n must be >= 1");
  const Matrix l = cholesky_lower(equicorrelation_matrix(p, rho));
  Matrix out(n, p);
  std::vector<double> z(p);
  for (int i = 0; i < n; ++i) {
    for (auto& v : z) v = rng.normal();
    auto row = out.row(i);
    for (int a = 0; a < p; ++a) {
      double s = 0.0;
      for (int b = 0; b <= a; ++b) s += l(a, b) * z[b];
      row[a] = s;
    }
  }
  return out;
}

Matrix binarize(const Matrix& x, double threshold) {
  Matrix out(x.rows(), x.cols());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > threshold ? 1.0 : 0.0;
  return out;
}

std::vector<double> linear_predictor(const Matrix& x, const DgmSpec& spec) {
  if (x.cols() != spec.betas.size()) {
    throw std::invalid_argument("linear_predictor: x has " + std::to_string(x.cols()) +
                                " columns but the mechanism has " +
                                std::to_string(spec.betas.size()) + " coefficients");
  }
  std::vector<double> lp(x.rows(), spec.intercept);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) lp[i] += spec.betas[j] * row[j];
  }
  return lp;
}

std::vector<double> inverse_logit(std::span<const double> lp) {
  std::vector<double> p(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) p[i] = probforest::inverse_logit(lp[i]);
  return p;
}

std::vector<int> draw_outcomes(std::span<const double> p, Rng& rng) {
  std::vector<int> y(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
      throw std::domain_error("draw_outcomes: probability at index " + std::to_string(i) +
                              " is outside [0,1]");
    }
    y[i] = rng.bernoulli(p[i]) ? 1 : 0;
  }
  return y;
}

Dataset generate_dataset(const DgmSpec& spec, int n, Rng& rng) {
  spec.validate();
  Dataset data;
  data.x = sample_mvn(n, spec.n_predictors, spec.correlation, rng);
  if (spec.distribution == PredictorDistribution::binary) {
    data.x = binarize(data.x, spec.binarize_threshold);
  }
  auto p = inverse_logit(linear_predictor(data.x, spec));
  data.y = draw_outcomes(p, rng);
  data.true_p = std::move(p);
  data.feature_names = default_feature_names(spec.n_predictors);
  return data;
}

namespace {

struct TableRow {
  PredictorDistribution dist;
  int p;
  double rho;
  double auc;
  CoefficientStrength strength;
  double intercept;
  double large;
  double small;  // equals `large` for balanced rows
};

constexpr auto C = PredictorDistribution::continuous;
constexpr auto B = PredictorDistribution::binary;
constexpr auto BAL = CoefficientStrength::balanced;
constexpr auto UNB = CoefficientStrength::unbalanced;

// Intercepts and coefficients per mechanism. Unbalanced rows list the large
// and the small coefficient (ratio ~4).
constexpr TableRow kTable[] = {
    {C, 4, 0.0, 0.75, BAL, -1.6, 0.51, 0.51},
    {C, 4, 0.0, 0.75, UNB, -1.65, 0.97, 0.24},
    {C, 4, 0.4, 0.75, BAL, -1.67, 0.35, 0.35},
    {C, 4, 0.4, 0.75, UNB, -1.67, 0.74, 0.18},
    {C, 4, 0.0, 0.90, BAL, -2.5, 1.2, 1.2},
    {C, 4, 0.0, 0.90, UNB, -2.45, 2.2, 0.55},
    {C, 4, 0.4, 0.90, BAL, -2.55, 0.85, 0.85},
    {C, 4, 0.4, 0.90, UNB, -2.5, 1.71, 0.43},
    {B, 4, 0.0, 0.75, BAL, -3.9, 1.1, 1.1},
    {B, 4, 0.0, 0.75, UNB, -3.35, 1.91, 0.48},
    {B, 4, 0.4, 0.75, BAL, -3.28, 0.78, 0.78},
    {B, 4, 0.4, 0.75, UNB, -3.08, 1.59, 0.40},
    {B, 4, 0.0, 0.90, BAL, -8.0, 2.64, 2.64},
    {B, 4, 0.0, 0.90, UNB, -7.45, 5.02, 1.26},
    {B, 4, 0.4, 0.90, BAL, -6.4, 1.85, 1.85},
    {B, 4, 0.4, 0.90, UNB, -7.0, 4.37, 1.09},
    {C, 16, 0.0, 0.75, BAL, -1.66, 0.26, 0.26},
    {C, 16, 0.0, 0.75, UNB, -1.66, 0.48, 0.12},
    {C, 16, 0.4, 0.75, BAL, -1.67, 0.10, 0.10},
    {C, 16, 0.4, 0.75, UNB, -1.67, 0.22, 0.054},
    {C, 16, 0.0, 0.90, BAL, -2.5, 0.61, 0.61},
    {C, 16, 0.0, 0.90, UNB, -2.47, 1.09, 0.27},
    {C, 16, 0.4, 0.90, BAL, -2.51, 0.23, 0.23},
    {C, 16, 0.4, 0.90, UNB, -2.5, 0.50, 0.126},
    {B, 16, 0.0, 0.75, BAL, -5.8, 0.52, 0.52},
    {B, 16, 0.0, 0.75, UNB, -4.9, 0.93, 0.23},
    {B, 16, 0.4, 0.75, BAL, -3.5, 0.23, 0.23},
    {B, 16, 0.4, 0.75, UNB, -3.38, 0.50, 0.124},
    {B, 16, 0.0, 0.90, BAL, -12.6, 1.25, 1.25},
    {B, 16, 0.0, 0.90, UNB, -10.1, 2.17, 0.54},
    {B, 16, 0.4, 0.90, BAL, -7.0, 0.54, 0.54},
    {B, 16, 0.4, 0.90, UNB, -6.55, 1.14, 0.28},
};

DgmSpec make_spec(const TableRow& row, int noise) {
  DgmSpec spec;
  spec.distribution = row.dist;
  spec.n_predictors = row.p + noise;
  spec.n_noise = noise;
  spec.correlation = row.rho;
  spec.target_auc = row.auc;
  spec.strength = row.strength;
  spec.intercept = row.intercept;
  // First ceil(P/4) true predictors carry the large coefficient.
  const int n_large = (row.p + 3) / 4;
  for (int j = 0; j < row.p; ++j) spec.betas.push_back(j < n_large ? row.large : row.small);
  spec.betas.resize(spec.n_predictors, 0.0);
  return spec;
}

}  // namespace

std::vector<DgmSpec> builtin_dgm_table() {
  std::vector<DgmSpec> specs;
  specs.reserve(48);
  for (const auto& row : kTable) specs.push_back(make_spec(row, 0));
  for (const auto& row : kTable) {
    if (row.p == 4) specs.push_back(make_spec(row, 12));
  }
  return specs;
}

DgmSpec find_builtin(std::string_view id) {
  for (auto& spec : builtin_dgm_table()) {
    if (spec.id() == id) return spec;
  }
  throw std::out_of_range("unknown data-generating mechanism '" + std::string(id) + "'");
}

}  // namespace probforest::dgm
