#pragma once

// Ordinary least squares with Gaussian inference, plus AIC-driven backward
// elimination over groups of design columns.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "soh/error.hpp"

namespace soh::linreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr const char* kIntercept = "intercept";

/// Smallest-to-largest singular value ratio (of the column-normalised design)
/// below which a design is rejected as rank deficient.
inline constexpr double kRankTolerance = 1e-10;

/// n x (q+1) design whose first column is all ones. Every column carries a
/// label and the name of the group (feature) that owns it, so that all columns
/// of one transformed feature can be dropped together.
struct DesignMatrix {
  Matrix x;
  std::vector<std::string> labels;
  std::vector<std::string> groups;

  static DesignMatrix intercept_only(Index n) {
    DesignMatrix d;
    d.x = Matrix::Ones(n, 1);
    d.labels = {kIntercept};
    d.groups = {kIntercept};
    return d;
  }

  Index rows() const { return x.rows(); }
  Index cols() const { return x.cols(); }

  void add_column(const Vector& column, std::string label, std::string group) {
    if (column.size() != x.rows()) {
      throw Error(Errc::DimensionMismatch, "column '" + label + "' has " +
                                               std::to_string(column.size()) + " rows, design has " +
                                               std::to_string(x.rows()));
    }
    x.conservativeResize(Eigen::NoChange, x.cols() + 1);
    x.col(x.cols() - 1) = column;
    labels.push_back(std::move(label));
    groups.push_back(std::move(group));
  }

  /// Distinct groups in column order, intercept excluded.
  std::vector<std::string> feature_groups() const {
    std::vector<std::string> out;
    for (const auto& g : groups) {
      if (g == kIntercept) continue;
      if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
    }
    return out;
  }

  DesignMatrix without_group(const std::string& group) const {
    DesignMatrix d;
    std::vector<Index> keep;
    for (Index j = 0; j < cols(); ++j) {
      if (groups[static_cast<std::size_t>(j)] != group) keep.push_back(j);
    }
    d.x.resize(rows(), static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      d.x.col(static_cast<Index>(k)) = x.col(keep[k]);
      d.labels.push_back(labels[static_cast<std::size_t>(keep[k])]);
      d.groups.push_back(groups[static_cast<std::size_t>(keep[k])]);
    }
    return d;
  }
};

struct FitResult {
  Vector coefficients;
  Vector std_errors;
  Vector t_statistics;
  Vector p_values;
  double sigma2_hat = 0.0;  // RSS / (n - q - 1)
  Vector residuals;
  double rss = 0.0;
  double r2 = 0.0;
  double r2_adj = 0.0;
  double log_likelihood = 0.0;  // Gaussian, at the ML variance RSS / n
  double deviance = 0.0;
  double aic = 0.0;
  Matrix xtx_inverse;
  Index n = 0;
  Index df_residual = 0;

  /// Number of non-intercept columns.
  Index q() const { return coefficients.size() - 1; }
};

namespace detail {

inline double two_sided_t_pvalue(double t, double df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

}  // namespace detail

/// Least-squares fit of y on X (first column must be all ones). The design is
/// column-equilibrated, factored with Householder QR, and rejected when the
/// singular values of R show a numerical rank below q+1.
inline FitResult fit_ols(const Matrix& x, const Vector& y) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (y.size() != n) {
    throw Error(Errc::DimensionMismatch,
                "response has " + std::to_string(y.size()) + " rows, design has " + std::to_string(n));
  }
  if (p < 1 || !(x.col(0).array() == 1.0).all()) {
    throw Error(Errc::InvalidArgument, "first design column must be the intercept (all ones)");
  }
  if (n <= p) {
    throw Error(Errc::InsufficientData,
                "need more observations (" + std::to_string(n) + ") than coefficients (" + std::to_string(p) + ")");
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw Error(Errc::InvalidArgument, "design or response contains non-finite values");
  }

  Vector col_scale(p);
  for (Index j = 0; j < p; ++j) {
    const double norm = x.col(j).norm();
    if (norm == 0.0) throw Error(Errc::RankDeficient, "column " + std::to_string(j) + " is identically zero");
    col_scale(j) = 1.0 / norm;
  }
  const Matrix xs = x * col_scale.asDiagonal();

  Eigen::HouseholderQR<Matrix> qr(xs);
  const Matrix r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  const Vector sv = Eigen::JacobiSVD<Matrix>(r).singularValues();
  if (sv(p - 1) <= kRankTolerance * sv(0)) {
    throw Error(Errc::RankDeficient, "design has numerical rank below " + std::to_string(p) +
                                         " (singular value ratio " + std::to_string(sv(p - 1) / sv(0)) + ")");
  }

  FitResult fit;
  fit.n = n;
  fit.df_residual = n - p;
  fit.coefficients = col_scale.asDiagonal() * qr.solve(y);
  fit.residuals = y - x * fit.coefficients;
  fit.rss = fit.residuals.squaredNorm();

  const Matrix r_inv = r.triangularView<Eigen::Upper>().solve(Matrix::Identity(p, p));
  fit.xtx_inverse = col_scale.asDiagonal() * (r_inv * r_inv.transpose()) * col_scale.asDiagonal();

  const double nd = static_cast<double>(n);
  fit.sigma2_hat = fit.rss / static_cast<double>(fit.df_residual);
  const double sigma2_ml = fit.rss / nd;
  fit.log_likelihood = -0.5 * nd * (std::log(2.0 * std::numbers::pi * sigma2_ml) + 1.0);
  fit.deviance = -2.0 * fit.log_likelihood;
  fit.aic = fit.deviance + 2.0 * static_cast<double>(p + 1);

  const double tss = (y.array() - y.mean()).square().sum();
  fit.r2 = tss > 0.0 ? std::clamp(1.0 - fit.rss / tss, 0.0, 1.0) : 0.0;
  fit.r2_adj = 1.0 - (1.0 - fit.r2) * (nd - 1.0) / static_cast<double>(fit.df_residual);

  fit.std_errors.resize(p);
  fit.t_statistics.resize(p);
  fit.p_values.resize(p);
  for (Index j = 0; j < p; ++j) {
    const double se = std::sqrt(std::max(0.0, fit.sigma2_hat * fit.xtx_inverse(j, j)));
    const double b = fit.coefficients(j);
    fit.std_errors(j) = se;
    if (se > 0.0) {
      fit.t_statistics(j) = b / se;
    } else {
      fit.t_statistics(j) = b == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), b);
    }
    fit.p_values(j) = detail::two_sided_t_pvalue(fit.t_statistics(j), static_cast<double>(fit.df_residual));
  }
  return fit;
}

inline FitResult fit_ols(const DesignMatrix& design, const Vector& y) { return fit_ols(design.x, y); }

/// Deviance plus twice the parameter count (q+1 coefficients and the variance).
inline double aic(const FitResult& fit) { return fit.deviance + 2.0 * static_cast<double>(fit.q() + 2); }

inline double predict_point(const FitResult& fit, const Vector& x_row) {
  if (x_row.size() != fit.coefficients.size()) {
    throw Error(Errc::DimensionMismatch, "row has " + std::to_string(x_row.size()) + " entries, model has " +
                                             std::to_string(fit.coefficients.size()) + " coefficients");
  }
  return x_row.dot(fit.coefficients);
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Prediction interval for a new observation at x_row using the t distribution
/// on the residual degrees of freedom.
inline Interval prediction_interval(const FitResult& fit, const Vector& x_row, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(Errc::InvalidLevel, "interval level must lie in (0, 1), got " + std::to_string(level));
  }
  const double yhat = predict_point(fit, x_row);
  boost::math::students_t dist(static_cast<double>(fit.df_residual));
  const double tq = boost::math::quantile(dist, 0.5 * (1.0 + level));
  const double leverage = x_row.dot(fit.xtx_inverse * x_row);
  const double half = tq * std::sqrt(fit.sigma2_hat * (1.0 + std::max(0.0, leverage)));
  return {yhat - half, yhat + half};
}

struct StepbackResult {
  DesignMatrix design;
  FitResult fit;
  std::vector<std::string> removed;  // groups, in removal order
};

/// Backward elimination: repeatedly drop the non-protected column group whose
/// removal lowers AIC the most, until no single removal lowers it.
inline StepbackResult stepback_aic(const DesignMatrix& design, const Vector& y,
                                   const std::set<std::string>& protected_groups) {
  StepbackResult out;
  out.design = design;
  out.fit = fit_ols(out.design, y);
  for (;;) {
    const double current = aic(out.fit);
    double best_aic = current;
    std::string best_group;
    DesignMatrix best_design;
    FitResult best_fit;
    for (const auto& g : out.design.feature_groups()) {
      if (protected_groups.contains(g)) continue;
      DesignMatrix reduced = out.design.without_group(g);
      FitResult f = fit_ols(reduced, y);
      const double a = aic(f);
      if (a < best_aic) {
        best_aic = a;
        best_group = g;
        best_design = std::move(reduced);
        best_fit = std::move(f);
      }
    }
    if (best_group.empty()) break;
    out.design = std::move(best_design);
    out.fit = std::move(best_fit);
    out.removed.push_back(best_group);
  }
  return out;
}

}  // namespace soh::linreg
