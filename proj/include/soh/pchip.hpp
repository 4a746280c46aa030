#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "soh/error.hpp"

namespace soh {

/// Monotone piecewise cubic Hermite interpolant. Interior slopes use the
/// weighted harmonic mean of neighbouring secants (zero at local extrema),
/// end slopes the adjacent secant. Outside the knots the curve continues
/// linearly with the end slope.
class MonotoneHermite {
 public:
  MonotoneHermite(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    if (x_.size() != y_.size()) throw Error(Errc::DimensionMismatch, "knot and value counts differ");
    if (x_.size() < 2) throw Error(Errc::InsufficientData, "need at least two knots");
    for (std::size_t i = 1; i < x_.size(); ++i) {
      if (!(x_[i] > x_[i - 1])) throw Error(Errc::InvalidArgument, "knots must be strictly increasing");
    }
    const std::size_t n = x_.size();
    slopes_.assign(n, 0.0);
    std::vector<double> h(n - 1);
    std::vector<double> delta(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      h[k] = x_[k + 1] - x_[k];
      delta[k] = (y_[k + 1] - y_[k]) / h[k];
    }
    slopes_[0] = delta[0];
    slopes_[n - 1] = delta[n - 2];
    for (std::size_t k = 1; k + 1 < n; ++k) {
      const double d0 = delta[k - 1];
      const double d1 = delta[k];
      if (d0 == 0.0 || d1 == 0.0 || (d0 > 0.0) != (d1 > 0.0)) {
        slopes_[k] = 0.0;
        continue;
      }
      const double w1 = 2.0 * h[k] + h[k - 1];
      const double w2 = h[k] + 2.0 * h[k - 1];
      slopes_[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
    }
  }

  double operator()(double t) const {
    if (t <= x_.front()) return y_.front() + slopes_.front() * (t - x_.front());
    if (t >= x_.back()) return y_.back() + slopes_.back() * (t - x_.back());
    const std::size_t k = segment(t);
    const double h = x_[k + 1] - x_[k];
    const double s = (t - x_[k]) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    const double h10 = s3 - 2.0 * s2 + s;
    const double h01 = -2.0 * s3 + 3.0 * s2;
    const double h11 = s3 - s2;
    return h00 * y_[k] + h10 * h * slopes_[k] + h01 * y_[k + 1] + h11 * h * slopes_[k + 1];
  }

  double derivative(double t) const {
    if (t <= x_.front()) return slopes_.front();
    if (t >= x_.back()) return slopes_.back();
    const std::size_t k = segment(t);
    const double h = x_[k + 1] - x_[k];
    const double s = (t - x_[k]) / h;
    const double s2 = s * s;
    const double dh00 = (6.0 * s2 - 6.0 * s) / h;
    const double dh10 = 3.0 * s2 - 4.0 * s + 1.0;
    const double dh01 = (-6.0 * s2 + 6.0 * s) / h;
    const double dh11 = 3.0 * s2 - 2.0 * s;
    return dh00 * y_[k] + dh10 * slopes_[k] + dh01 * y_[k + 1] + dh11 * slopes_[k + 1];
  }

  const std::vector<double>& knots() const { return x_; }
  const std::vector<double>& values() const { return y_; }
  const std::vector<double>& slopes() const { return slopes_; }

 private:
  std::size_t segment(double t) const {
    const auto it = std::upper_bound(x_.begin(), x_.end(), t);
    return static_cast<std::size_t>(it - x_.begin()) - 1;
  }

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> slopes_;
};

}  // namespace soh
