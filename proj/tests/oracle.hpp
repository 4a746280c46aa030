#pragma once

// Test-side reference computations, written independently of the library.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Solves the normal equations in long double with partially pivoted
/// Gaussian elimination. Returns the coefficient vector.
inline std::vector<long double> normal_equations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const std::size_t p = static_cast<std::size_t>(x.cols());
  const std::size_t n = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<long double>> a(p, std::vector<long double>(p + 1, 0.0L));
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      long double s = 0.0L;
      for (std::size_t r = 0; r < n; ++r) s += static_cast<long double>(x(r, i)) * x(r, j);
      a[i][j] = s;
    }
    long double s = 0.0L;
    for (std::size_t r = 0; r < n; ++r) s += static_cast<long double>(x(r, i)) * y(r);
    a[i][p] = s;
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<long double> beta(p);
  for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
  return beta;
}

inline long double rss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<long double>& beta) {
  long double s = 0.0L;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    long double f = 0.0L;
    for (Eigen::Index j = 0; j < x.cols(); ++j) f += beta[static_cast<std::size_t>(j)] * x(r, j);
    const long double e = y(r) - f;
    s += e * e;
  }
  return s;
}

/// Gaussian deviance at the ML variance: n (log(2 pi RSS/n) + 1).
inline double deviance_from_rss(double rss, double n) {
  return n * (std::log(2.0 * M_PI * rss / n) + 1.0);
}

/// Plain power transform with the log convention for power 0.
inline double fp_pow(double z, double p) { return p == 0.0 ? std::log(z) : std::pow(z, p); }

}  // namespace oracle
