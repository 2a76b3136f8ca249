#include "probforest/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace probforest {

double quantile_type7_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("quantile level outside [0,1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile_type7(std::span<const double> values, double q) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_type7_sorted(sorted, q);
}

double median(std::span<const double> values) { return quantile_type7(values, 0.5); }

double logit(double p) { return std::log(p) - std::log1p(-p); }

double inverse_logit(double lp) {
  // Split on sign so exp() never overflows.
  if (lp >= 0.0) return 1.0 / (1.0 + std::exp(-lp));
  const double e = std::exp(lp);
  return e / (1.0 + e);
}

}  // namespace probforest
