#pragma once

#include <span>
#include <vector>

namespace probforest {

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7, the R default). `q` in [0, 1]; input need not be
/// sorted. Throws on empty input.
double quantile_type7(std::span<const double> values, double q);

/// Same as quantile_type7 but on data the caller has already sorted.
double quantile_type7_sorted(std::span<const double> sorted, double q);

/// Midpoint of the two central order statistics for even counts.
double median(std::span<const double> values);

double logit(double p);
double inverse_logit(double lp);

}  // namespace probforest
