#pragma once

// Capacity-scale error metrics, with end-of-life truncated variants.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>

#include "soh/error.hpp"
#include "soh/hexfloat.hpp"

namespace soh::metrics {

inline constexpr double kDefaultEolFraction = 0.8;

struct MetricSet {
  double rmse = 0.0;       // Ah
  double rmse_norm = 0.0;  // fraction of observed
  double mae = 0.0;
  double mae_norm = 0.0;
  double maxe_norm = 0.0;
};

struct EvalReport {
  MetricSet full;
  MetricSet eol;
  std::size_t n_total = 0;
  std::size_t n_eol = 0;
  double eol_threshold = 0.0;  // Ah
};

namespace detail {

inline MetricSet compute(std::span<const double> predicted, std::span<const double> observed) {
  MetricSet m;
  const double n = static_cast<double>(observed.size());
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = observed[i] - predicted[i];
    const double r = e / observed[i];
    m.rmse += e * e;
    m.rmse_norm += r * r;
    m.mae += std::abs(e);
    m.mae_norm += std::abs(r);
    m.maxe_norm = std::max(m.maxe_norm, std::abs(r));
  }
  m.rmse = std::sqrt(m.rmse / n);
  m.rmse_norm = std::sqrt(m.rmse_norm / n);
  m.mae /= n;
  m.mae_norm /= n;
  return m;
}

}  // namespace detail

/// Number of leading cycles scored by the EoL metrics: up to and including the
/// first observation below eol_fraction * nominal, or all of them.
inline std::size_t eol_prefix_length(std::span<const double> observed, double nominal, double eol_fraction) {
  const double threshold = eol_fraction * nominal;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (observed[i] < threshold) return i + 1;
  }
  return observed.size();
}

inline EvalReport evaluate(std::span<const double> predicted, std::span<const double> observed, double nominal,
                           double eol_fraction = kDefaultEolFraction) {
  if (predicted.size() != observed.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(predicted.size()) + " predictions vs " +
                                          std::to_string(observed.size()) + " observations");
  }
  if (observed.empty()) throw Error(Errc::LengthMismatch, "no observations to evaluate");
  if (!(eol_fraction > 0.0 && eol_fraction < 1.0)) {
    throw Error(Errc::InvalidArgument, "EoL fraction must lie in (0, 1)");
  }
  for (double c : observed) {
    if (!(c > 0.0)) throw Error(Errc::NonPositiveObserved, "observed capacity " + to_decimal(c) + " is not positive");
  }
  EvalReport r;
  r.n_total = observed.size();
  r.eol_threshold = eol_fraction * nominal;
  r.full = detail::compute(predicted, observed);
  r.n_eol = eol_prefix_length(observed, nominal, eol_fraction);
  r.eol = detail::compute(predicted.first(r.n_eol), observed.first(r.n_eol));
  return r;
}

inline constexpr const char* kReportHeader =
    "n_total,n_eol,eol_threshold,rmse,rmse_norm,mae,mae_norm,maxe_norm,"
    "rmse_eol,rmse_norm_eol,mae_eol,mae_norm_eol,maxe_norm_eol";

/// One delimited row matching kReportHeader.
inline std::string to_row(const EvalReport& r) {
  std::ostringstream os;
  os << r.n_total << ',' << r.n_eol << ',' << to_decimal(r.eol_threshold);
  for (const MetricSet* m : {&r.full, &r.eol}) {
    for (double v : {m->rmse, m->rmse_norm, m->mae, m->mae_norm, m->maxe_norm}) os << ',' << to_decimal(v);
  }
  return os.str();
}

inline void print_block(std::ostream& os, const EvalReport& r, const std::string& title = {}) {
  auto pct = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << v * 100.0 << '%';
    return s.str();
  };
  auto ah = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
  };
  if (!title.empty()) os << title << '\n';
  os << "  cycles scored        " << r.n_total << " (" << r.n_eol << " up to EoL, threshold " << ah(r.eol_threshold)
     << " Ah)\n";
  os << "  RMSE                 " << ah(r.full.rmse) << " Ah\n";
  os << "  RMSE_norm            " << pct(r.full.rmse_norm) << '\n';
  os << "  MAE                  " << ah(r.full.mae) << " Ah\n";
  os << "  MAE_norm             " << pct(r.full.mae_norm) << '\n';
  os << "  MaxE_norm            " << pct(r.full.maxe_norm) << '\n';
  os << "  RMSE_norm (EoL)      " << pct(r.eol.rmse_norm) << '\n';
  os << "  MAE_norm (EoL)       " << pct(r.eol.mae_norm) << '\n';
  os << "  MaxE_norm (EoL)      " << pct(r.eol.maxe_norm) << '\n';
}

}  // namespace soh::metrics
