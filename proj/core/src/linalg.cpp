#include "probforest/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace probforest {

Matrix cholesky_lower(const Matrix& m) {
  const std::size_t n = m.rows();
  if (m.cols() != n) throw std::invalid_argument("cholesky_lower: matrix is not square");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = m(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    // Relative tolerance: a pivot this small relative to the diagonal means
    // the matrix is singular up to rounding.
    if (!(pivot > 1e-12 * std::max(1.0, std::abs(m(j, j))))) {
      throw NotPositiveDefinite("cholesky_lower: non-positive pivot at column " +
                                std::to_string(j));
    }
    l(j, j) = std::sqrt(pivot);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b) {
  const std::size_t n = lower.rows();
  if (b.size() != n) throw std::invalid_argument("cholesky_solve: size mismatch");
  std::vector<double> z(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) z[i] -= lower(i, k) * z[k];
    z[i] /= lower(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) z[i] -= lower(k, i) * z[k];
    z[i] /= lower(i, i);
  }
  return z;
}

}  // namespace probforest
