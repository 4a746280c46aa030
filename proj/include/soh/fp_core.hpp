#pragma once

// Fractional polynomial transforms over the fixed power set and single-covariate
// power selection by deviance.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "soh/error.hpp"
#include "soh/linreg.hpp"

namespace soh::fp {

using linreg::DesignMatrix;
using linreg::Matrix;
using linreg::Vector;

/// The eight admissible powers, strictly increasing. Power 0 denotes log.
struct PowerSet {
  static constexpr std::array<double, 8> values{-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0};

  static constexpr bool contains(double p) {
    return std::find(values.begin(), values.end(), p) != values.end();
  }
};

/// Additive shift and positive divisor mapping a raw covariate onto (0, inf).
struct Preprocess {
  double shift = 0.0;
  double scale = 1.0;

  double apply(double x) const { return (x + shift) / scale; }
};

/// A selected FP function: degree 1 or 2, its powers, the frozen preprocessing,
/// and the smallest preprocessed training value (used to clamp out-of-domain
/// inputs at prediction time).
struct FpTerm {
  int degree = 1;
  std::array<double, 2> powers{1.0, 1.0};
  Preprocess prep;
  double domain_min = 0.0;

  std::span<const double> active_powers() const {
    return std::span<const double>(powers.data(), static_cast<std::size_t>(degree));
  }

  friend bool operator==(const FpTerm& a, const FpTerm& b) {
    return a.degree == b.degree && a.powers[0] == b.powers[0] && (a.degree == 1 || a.powers[1] == b.powers[1]);
  }
};

inline double power_value(double z, double power) {
  if (power == 0.0) return std::log(z);
  if (power == 0.5) return std::sqrt(z);
  if (power == 1.0) return z;
  if (power == -0.5) return 1.0 / std::sqrt(z);
  return std::pow(z, power);
}

inline Vector fp_transform(const Vector& x, double power) {
  if (!PowerSet::contains(power)) {
    throw Error(Errc::InvalidArgument, "power " + std::to_string(power) + " is not in the FP power set");
  }
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x(i) > 0.0)) {
      throw Error(Errc::NonPositiveInput, "FP transform needs positive input, element " + std::to_string(i) +
                                              " is " + std::to_string(x(i)));
    }
    out(i) = power_value(x(i), power);
  }
  return out;
}

/// Columns of an FP basis evaluated on already-preprocessed values z. A repeated
/// power p contributes z^p and z^p * log z.
inline Matrix fp_basis(const Vector& z, std::span<const double> powers) {
  Matrix out(z.size(), static_cast<Eigen::Index>(powers.size()));
  for (std::size_t k = 0; k < powers.size(); ++k) {
    Vector col = fp_transform(z, powers[k]);
    if (k > 0 && powers[k] == powers[k - 1]) col.array() *= z.array().log();
    out.col(static_cast<Eigen::Index>(k)) = col;
  }
  return out;
}

inline std::string power_label(double p) {
  if (p == -0.5) return "-0.5";
  if (p == 0.5) return "0.5";
  return std::to_string(static_cast<int>(p));
}

/// Human-readable labels for the columns produced by fp_basis.
inline std::vector<std::string> fp_column_labels(const std::string& name, std::span<const double> powers) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < powers.size(); ++k) {
    const double p = powers[k];
    std::string base = p == 0.0 ? "log(" + name + ")" : p == 1.0 ? name : name + "^" + power_label(p);
    if (k > 0 && powers[k] == powers[k - 1]) base += "*log(" + name + ")";
    out.push_back(std::move(base));
  }
  return out;
}

/// Shift makes all values positive (min lands on the smallest gap between
/// distinct values); scale is the power of ten closest to 1 that puts the range
/// into [0.1, 100].
inline Preprocess shift_and_scale(std::span<const double> x) {
  if (x.empty()) throw Error(Errc::ConstantInput, "empty covariate");
  for (double v : x) {
    if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, "covariate contains non-finite values");
  }
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi == lo) throw Error(Errc::ConstantInput, "covariate is constant");

  Preprocess prep;
  if (lo <= 0.0) {
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      const double d = sorted[i] - sorted[i - 1];
      if (d > 0.0) gap = std::min(gap, d);
    }
    prep.shift = -lo + gap;
  }

  const double range = hi - lo;
  int k = 0;
  while (range / std::pow(10.0, k) > 100.0) ++k;
  while (range / std::pow(10.0, k) < 0.1) --k;
  prep.scale = std::pow(10.0, k);
  return prep;
}

inline Vector apply_preprocess(const Vector& x, const Preprocess& prep) {
  Vector z(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) z(i) = prep.apply(x(i));
  return z;
}

/// Base design with the FP basis columns of z appended.
inline DesignMatrix with_fp_columns(const DesignMatrix& base, const Vector& z, std::span<const double> powers,
                                    const std::string& name = "x") {
  DesignMatrix d = base;
  const Matrix cols = fp_basis(z, powers);
  const auto labels = fp_column_labels(name, powers);
  for (Eigen::Index k = 0; k < cols.cols(); ++k) d.add_column(cols.col(k), labels[static_cast<std::size_t>(k)], name);
  return d;
}

struct Fp1Choice {
  double power = 1.0;
  double deviance = 0.0;
};

struct Fp2Choice {
  std::array<double, 2> powers{1.0, 1.0};
  double deviance = 0.0;
};

/// Best single power for x given the other columns in base_design. Exact
/// deviance ties go to the power closest to 1, then the smaller power.
inline Fp1Choice select_fp1(const Vector& y, const DesignMatrix& base_design, const Vector& x,
                            const Preprocess& prep) {
  const Vector z = apply_preprocess(x, prep);
  Fp1Choice best{0.0, std::numeric_limits<double>::infinity()};
  bool have = false;
  for (double p : PowerSet::values) {
    const std::array<double, 1> powers{p};
    const double dev = linreg::fit_ols(with_fp_columns(base_design, z, powers), y).deviance;
    const bool better =
        !have || dev < best.deviance ||
        (dev == best.deviance && (std::abs(p - 1.0) < std::abs(best.power - 1.0) ||
                                  (std::abs(p - 1.0) == std::abs(best.power - 1.0) && p < best.power)));
    if (better) {
      best = {p, dev};
      have = true;
    }
  }
  return best;
}

/// Best power pair over all 36 unordered pairs (repeated pairs included).
/// Pairs are visited in lexicographic order, so exact ties keep the smallest.
inline Fp2Choice select_fp2(const Vector& y, const DesignMatrix& base_design, const Vector& x,
                            const Preprocess& prep) {
  const Vector z = apply_preprocess(x, prep);
  const auto& ps = PowerSet::values;
  Fp2Choice best{{0.0, 0.0}, std::numeric_limits<double>::infinity()};
  bool have = false;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (std::size_t j = i; j < ps.size(); ++j) {
      const std::array<double, 2> powers{ps[i], ps[j]};
      const double dev = linreg::fit_ols(with_fp_columns(base_design, z, powers), y).deviance;
      if (!have || dev < best.deviance) {
        best = {powers, dev};
        have = true;
      }
    }
  }
  return best;
}

namespace detail {

/// True if the deviance drop is significant for a chi-square on df degrees of
/// freedom. Infinite drops (perfect fits) count as significant; undefined ones
/// (both perfect) do not.
inline bool significant(double dev_simple, double dev_complex, double df, double alpha) {
  const double stat = dev_simple - dev_complex;
  if (std::isnan(stat) || stat <= 0.0) return false;
  if (std::isinf(stat)) return true;
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, stat)) < alpha;
}

}  // namespace detail

/// Closed test sequence for the FP degree: 0 = linear, 1 = FP1, 2 = FP2.
inline int fp_degree_choice(double dev_linear, double dev_fp1, double dev_fp2, std::size_t n, double alpha,
                            int max_degree) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(Errc::InvalidAlpha, "alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
  if (max_degree != 1 && max_degree != 2) {
    throw Error(Errc::InvalidArgument, "max_degree must be 1 or 2");
  }
  if (n == 0) throw Error(Errc::InsufficientData, "no observations");

  if (max_degree == 2) {
    if (!detail::significant(dev_linear, dev_fp2, 3.0, alpha)) return 0;
    if (detail::significant(dev_fp1, dev_fp2, 2.0, alpha)) return 2;
  }
  return detail::significant(dev_linear, dev_fp1, 1.0, alpha) ? 1 : 0;
}

}  // namespace soh::fp
