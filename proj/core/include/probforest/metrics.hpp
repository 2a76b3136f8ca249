#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "probforest/matrix.hpp"
#include "probforest/rng.hpp"

namespace probforest::metrics {

/// Probability that a random event outranks a random non-event (ties count
/// one half), via midranks in O(n log n). Throws std::invalid_argument
/// unless both classes are present.
double c_statistic(std::span<const double> p, std::span<const int> y);

/// c-statistic expected under the true outcome probabilities: each case
/// counts as an event with weight true_p and as a non-event with weight
/// 1 - true_p, self-pairs excluded.
double expected_c_statistic(std::span<const double> p, std::span<const double> true_p);

/// Polytomous discrimination index for n x k probabilities and labels in
/// [0, k). Enumerates every tuple with one case per class when the tuple
/// count is at most `exact_limit`; otherwise averages over `tuples` random
/// tuples drawn with `rng`. A random model scores 1/k.
double pdi(const Matrix& probs, std::span<const int> y, std::uint64_t tuples, Rng& rng,
           std::uint64_t exact_limit = 1'000'000);

struct CalibrationFit {
  double slope = 0.0;
  double intercept = 0.0;
  bool converged = false;
  /// The predictions separate the classes, so the slope diverges; implies
  /// !converged.
  bool separated = false;
};

/// Logistic recalibration of y on logit(p), with p clipped to
/// [clip, 1 - clip].
CalibrationFit calibration_slope(std::span<const double> p, std::span<const int> y,
                                 double clip = 1e-6);

double brier(std::span<const double> p, std::span<const int> y);
double logloss(std::span<const double> p, std::span<const int> y, double clip = 1e-6);

/// Multiclass Brier score: mean over rows of sum_k (p_ik - 1{y_i = k})^2.
double brier_multiclass(const Matrix& probs, std::span<const int> y);
/// Mean of -log p_{i, y_i} with clipping.
double logloss_multiclass(const Matrix& probs, std::span<const int> y, double clip = 1e-6);

/// Apparent (training) and test performance of one fitted model.
struct RunMetrics {
  double train_c = 0.0;
  double test_c = 0.0;
  CalibrationFit train_slope;
  CalibrationFit test_slope;
  double train_brier = 0.0;
  double test_brier = 0.0;
  double train_logloss = 0.0;
  double test_logloss = 0.0;
};

RunMetrics evaluate_run(std::span<const double> train_p, std::span<const int> train_y,
                        std::span<const double> test_p, std::span<const int> test_y);

/// Squared bias, variance and their sum for each test observation.
struct PerObservationError {
  std::vector<double> squared_bias;
  std::vector<double> variance;
  std::vector<double> mse;
};

struct MseDecomposition {
  double squared_bias = 0.0;
  double variance = 0.0;
  double mse = 0.0;
  double sd_squared_bias = 0.0;
  double sd_variance = 0.0;
  double sd_mse = 0.0;

  friend bool operator==(const MseDecomposition&, const MseDecomposition&) = default;
};

/// Columns of `preds` are test observations, rows are simulation runs.
/// Throws std::invalid_argument when fewer than 2 runs are given.
PerObservationError per_observation_error(const Matrix& preds, std::span<const double> true_p);

/// Means and SDs (across observations) of a per-observation breakdown.
MseDecomposition decompose(const PerObservationError& errors);

inline MseDecomposition bias_variance(const Matrix& preds, std::span<const double> true_p) {
  return decompose(per_observation_error(preds, true_p));
}

/// true_c minus the median of the test c-statistics.
double discrimination_loss(double true_c, std::span<const double> test_c_values);

struct Summary {
  double median = 0.0;
  double iqr = 0.0;
  double mean = 0.0;
  double sd = 0.0;  ///< n - 1 denominator; 0 for a single value

  friend bool operator==(const Summary&, const Summary&) = default;
};

/// Type-7 quantiles for median and IQR.
Summary summarize(std::span<const double> values);

}  // namespace probforest::metrics
