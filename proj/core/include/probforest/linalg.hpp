#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "probforest/matrix.hpp"

namespace probforest {

struct NotPositiveDefinite : std::domain_error {
  using std::domain_error::domain_error;
};

/// Lower Cholesky factor L with L * L^T = m. Throws NotPositiveDefinite on a
/// pivot that is non-positive relative to its diagonal entry.
Matrix cholesky_lower(const Matrix& m);

/// Solves (L * L^T) x = b given the factor from cholesky_lower.
std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b);

}  // namespace probforest
