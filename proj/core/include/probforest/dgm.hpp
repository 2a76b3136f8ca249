#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "probforest/dataset.hpp"
#include "probforest/linalg.hpp"
#include "probforest/matrix.hpp"
#include "probforest/rng.hpp"

// Logistic data-generating mechanisms: equicorrelated multivariate normal
// predictors, optionally dichotomised, with a Bernoulli outcome drawn from
// the logistic model.
namespace probforest::dgm {

enum class PredictorDistribution { continuous, binary };
enum class CoefficientStrength { balanced, unbalanced };

struct DgmSpec {
  PredictorDistribution distribution = PredictorDistribution::continuous;
  int n_predictors = 4;
  int n_noise = 0;
  double correlation = 0.0;
  double target_auc = 0.75;
  CoefficientStrength strength = CoefficientStrength::balanced;
  double intercept = 0.0;
  std::vector<double> betas;
  /// Latent cut point for binary predictors (values strictly above -> 1).
  double binarize_threshold = 0.0;

  /// Identifier in the simulation naming scheme, e.g. "16c_75_4_unb" or
  /// "4b_90_0_bal_noise" (4 true + 12 noise predictors).
  std::string id() const;

  /// Checks the structural invariants; throws std::invalid_argument.
  void validate() const;

  friend bool operator==(const DgmSpec&, const DgmSpec&) = default;
};

/// Unit diagonal, `rho` elsewhere. Throws std::domain_error unless
/// -1/(p-1) < rho < 1 (the positive-definite range).
Matrix equicorrelation_matrix(int p, double rho);

using probforest::cholesky_lower;
using probforest::NotPositiveDefinite;

/// n rows i.i.d. N(0, equicorrelation_matrix(p, rho)).
Matrix sample_mvn(int n, int p, double rho, Rng& rng);

/// 1 where the entry is strictly above `threshold`, else 0.
Matrix binarize(const Matrix& x, double threshold);

std::vector<double> linear_predictor(const Matrix& x, const DgmSpec& spec);

std::vector<double> inverse_logit(std::span<const double> lp);

/// Independent Bernoulli(p_i) draws. Throws std::domain_error if any p_i
/// is outside [0, 1].
std::vector<int> draw_outcomes(std::span<const double> p, Rng& rng);

/// sample_mvn -> binarize (binary specs) -> linear predictor -> inverse
/// logit -> Bernoulli outcomes. true_p is retained.
Dataset generate_dataset(const DgmSpec& spec, int n, Rng& rng);

/// The 48 built-in mechanisms: 16 with 4 true predictors, 16 with 16 true
/// predictors, and 16 with 4 true plus 12 noise predictors.
std::vector<DgmSpec> builtin_dgm_table();

/// Looks up a built-in mechanism by id(); throws std::out_of_range.
DgmSpec find_builtin(std::string_view id);

}  // namespace probforest::dgm
