#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "probforest/dataset.hpp"
#include "probforest/matrix.hpp"

// Logistic and multinomial logistic regression, plus a restricted cubic
// spline expansion for smooth baselines.
namespace probforest::glm {

struct GlmError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Three-knot restricted cubic spline basis.
struct RcsBasis {
  double t1 = 0.0, t2 = 0.5, t3 = 1.0;

  /// Knots at type-7 quantiles (0.10, 0.50, 0.90) of `x`.
  static RcsBasis from_data(std::span<const double> x);

  /// Throws std::invalid_argument unless t1 < t2 < t3.
  void validate() const;

  /// Nonlinear term C(x); zero at and below t1, linear above t3.
  double nonlinear_term(double x) const;

  friend bool operator==(const RcsBasis&, const RcsBasis&) = default;
};

/// n x 2 matrix with columns (x, C(x)).
Matrix rcs_expand(std::span<const double> x, const RcsBasis& basis);

/// Coefficients are (n_classes - 1) x (1 + n_features); row k holds the
/// intercept and slopes of class_labels[k + 1] against class_labels[0].
struct GlmModel {
  Matrix coefficients;
  std::vector<int> class_labels;
  bool converged = false;
  /// Did not converge and some fitted probability reached 0 or 1 within
  /// rounding (separation).
  bool separated = false;
  int iterations = 0;

  std::size_t n_classes() const noexcept { return class_labels.size(); }
  std::size_t n_features() const noexcept {
    return coefficients.cols() == 0 ? 0 : coefficients.cols() - 1;
  }
};

struct FitOptions {
  int max_iterations = 100;
  double coefficient_tolerance = 1e-8;  ///< binary: max |change| in any coefficient
  double gradient_tolerance = 1e-6;     ///< multinomial: max |gradient| entry
};

/// Newton-Raphson (IRLS) maximisation of the log-likelihood minus
/// ridge * (sum of squared non-intercept coefficients). y must hold 0/1 with
/// both present. A constant predictor column with ridge == 0 raises
/// GlmError. Separation is reported through `converged == false`.
GlmModel fit_binary_logistic(const Matrix& x, std::span<const int> y, double ridge = 0.0,
                             const FitOptions& options = {});

/// Softmax regression on arbitrary integer labels; the smallest label is
/// the reference class.
GlmModel fit_multinomial(const Matrix& x, std::span<const int> y, double ridge = 0.0,
                         const FitOptions& options = {});

/// n x n_classes class probabilities; rows sum to 1.
Matrix predict_glm(const GlmModel& model, const Matrix& x);

/// Penalised log-likelihood at `coefficients`, for class indices `y_index`
/// (positions in the label list, 0 = reference).
double penalized_log_likelihood(const Matrix& coefficients, const Matrix& x,
                                std::span<const int> y_index, double ridge);

/// Gradient of penalized_log_likelihood, flattened row-major like
/// `coefficients`.
std::vector<double> penalized_gradient(const Matrix& coefficients, const Matrix& x,
                                       std::span<const int> y_index, double ridge);

/// One row per non-reference class: `class,intercept,<feature names>`.
void write_coefficients_csv(const GlmModel& model, std::span<const std::string> feature_names,
                            const std::filesystem::path& path);

/// Per-input-feature expansion: a linear term, or (x, C(x)) for features
/// carrying a spline basis.
struct FeatureExpansion {
  std::vector<std::optional<RcsBasis>> splines;

  std::size_t n_inputs() const noexcept { return splines.size(); }
  std::size_t n_terms() const;
  Matrix expand(const Matrix& x) const;
  std::vector<std::string> term_names(std::span<const std::string> input_names) const;
};

/// Logistic (two classes) or multinomial regression on spline-expanded
/// inputs; the smooth comparator for heatmaps.
struct SplineGlm {
  FeatureExpansion expansion;
  GlmModel model;
  std::vector<std::string> feature_names;

  Matrix predict(const Matrix& x) const;
  void save(const std::filesystem::path& path) const;
  static SplineGlm load(const std::filesystem::path& path);
};

/// Fits a SplineGlm with 3-knot splines (default knots) on the listed
/// input features and linear terms elsewhere.
SplineGlm fit_spline_glm(const Dataset& data, std::span<const int> spline_features,
                         double ridge = 0.0);

}  // namespace probforest::glm
