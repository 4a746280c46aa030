#pragma once

// Per-reference-cycle regression features computed from one RW phase, and the
// capacity-fade target.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "soh/error.hpp"
#include "soh/hexfloat.hpp"
#include "soh/ingest.hpp"
#include "soh/prelim.hpp"

namespace soh::features {

using ingest::RwPhase;
using ingest::StepRecord;

inline constexpr std::array<const char*, 10> kFeatureNames{
    "t_min_avg", "t_max_avg", "i_avg", "delta_t", "lambda", "delta_t_rest", "v_in_avg", "dv_avg", "c_prev", "c_approx"};

/// Steps shorter than this fraction of the protocol duration count as cut short.
inline constexpr double kShortStepTolerance = 0.01;

/// Upper bound (h) on rest times that enter the rest-time variance.
inline constexpr double kRestVarianceCutoff = 20.0;

struct FeatureVector {
  double t_min_avg = 0.0;     // degC
  double t_max_avg = 0.0;     // degC
  double i_avg = 0.0;         // A
  double delta_t = 0.0;       // h
  double lambda = 0.0;        // fraction of discharge steps cut short
  double delta_t_rest = 0.5;  // logistic rest-time saturation
  double v_in_avg = 0.0;      // V
  double dv_avg = 0.0;        // V, end minus start
  std::optional<double> c_prev;    // Ah
  std::optional<double> c_approx;  // Ah
  std::optional<double> target;    // Ah, training rows only
  std::vector<std::string> flags;

  /// Name -> value for every present feature (target excluded).
  std::map<std::string, double> named() const {
    std::map<std::string, double> m{{"t_min_avg", t_min_avg}, {"t_max_avg", t_max_avg}, {"i_avg", i_avg},
                                    {"delta_t", delta_t},     {"lambda", lambda},       {"delta_t_rest", delta_t_rest},
                                    {"v_in_avg", v_in_avg},   {"dv_avg", dv_avg}};
    if (c_prev) m["c_prev"] = *c_prev;
    if (c_approx) m["c_approx"] = *c_approx;
    return m;
  }
};

struct RestVarianceConstant {
  double sigma2 = 1.0;  // h^2
  std::size_t n_used = 0;
};

/// Time from the end of the last RW step to the start of the closing reference
/// cycle, in hours. Negative gaps (clock skew) are clamped to 0 and reported.
inline double rest_time_hours(const RwPhase& phase, bool* clamped = nullptr) {
  const double gap = (phase.reference_start - phase.last_rw_end()) / 3600.0;
  if (clamped) *clamped = gap < 0.0;
  return std::max(0.0, gap);
}

inline double rest_saturation(double rest_hours, double sigma2) {
  return 1.0 / (1.0 + std::exp(-0.25 * (rest_hours / sigma2)));
}

/// Sample variance of the rest times below the cutoff.
inline RestVarianceConstant compute_rest_variance(std::span<const double> rest_hours) {
  std::vector<double> kept;
  for (double t : rest_hours) {
    if (t < kRestVarianceCutoff) kept.push_back(t);
  }
  if (kept.size() < 2) {
    throw Error(Errc::InsufficientObservations, "rest-time variance needs at least 2 rest times below " +
                                                    to_decimal(kRestVarianceCutoff) + " h, found " +
                                                    std::to_string(kept.size()));
  }
  double mean = 0.0;
  for (double t : kept) mean += t;
  mean /= static_cast<double>(kept.size());
  double ss = 0.0;
  for (double t : kept) ss += (t - mean) * (t - mean);
  const double var = ss / static_cast<double>(kept.size() - 1);
  if (!(var > 0.0)) {
    throw Error(Errc::InsufficientObservations, "rest times below the cutoff are all equal (zero variance)");
  }
  return {var, kept.size()};
}

inline RestVarianceConstant compute_rest_variance(std::span<const RwPhase> phases) {
  std::vector<double> t;
  t.reserve(phases.size());
  for (const auto& p : phases) t.push_back(rest_time_hours(p));
  return compute_rest_variance(std::span<const double>(t));
}

namespace detail {

inline std::pair<double, double> temperature_range(const StepRecord& s) {
  if (s.samples.empty()) throw Error(Errc::TooFewSamples, "RW step without samples");
  double lo = s.samples.front().temperature;
  double hi = lo;
  for (const auto& x : s.samples) {
    lo = std::min(lo, x.temperature);
    hi = std::max(hi, x.temperature);
  }
  return {lo, hi};
}

}  // namespace detail

/// Which current feeds the average-current feature.
enum class CurrentSource { Nominal, SampledMean };

/// Features of the reference cycle closing `phase`. C_approx is filled only
/// when a preliminary model is supplied.
inline FeatureVector extract_features(const RwPhase& phase, std::optional<double> prev_capacity,
                                      const RestVarianceConstant& rest_var,
                                      const prelim::PrelimModel* prelim_model = nullptr,
                                      CurrentSource current_source = CurrentSource::Nominal) {
  const std::size_t m = phase.m();
  if (m == 0) throw Error(Errc::EmptyPhase, "phase " + std::to_string(phase.index) + " has no RW discharge steps");
  if (!(rest_var.sigma2 > 0.0)) throw Error(Errc::InvalidArgument, "rest-time variance must be positive");

  FeatureVector f;
  const double md = static_cast<double>(m);
  std::size_t short_steps = 0;
  for (const auto& s : phase.discharge_steps) {
    const auto [lo, hi] = detail::temperature_range(s);
    f.t_min_avg += lo / md;
    f.t_max_avg += hi / md;
    if (current_source == CurrentSource::Nominal) {
      f.i_avg += std::abs(s.nominal_current) / md;
    } else {
      double sum = 0.0;
      for (const auto& x : s.samples) sum += std::abs(x.current);
      f.i_avg += sum / static_cast<double>(s.samples.size()) / md;
    }
    f.v_in_avg += s.samples.front().voltage / md;
    f.dv_avg += (s.samples.back().voltage - s.samples.front().voltage) / md;
    if (s.default_duration > 0.0 && s.duration() < s.default_duration * (1.0 - kShortStepTolerance)) ++short_steps;
  }
  f.lambda = static_cast<double>(short_steps) / md;

  double seconds = 0.0;
  for (const auto& s : phase.discharge_steps) seconds += s.duration();
  for (const auto& s : phase.charge_steps) seconds += s.duration();
  f.delta_t = seconds / 3600.0;

  bool clamped = false;
  const double rest = rest_time_hours(phase, &clamped);
  if (clamped) f.flags.emplace_back("negative_rest_time");
  f.delta_t_rest = rest_saturation(rest, rest_var.sigma2);

  f.c_prev = prev_capacity;
  if (prelim_model) f.c_approx = prelim::approx_phase_capacity(*prelim_model, phase, &f.flags);
  return f;
}

/// Capacity fade relative to the nominal capacity; negative values (apparent
/// recovery) are allowed.
inline double build_target(double nominal_capacity, double observed_capacity) {
  if (!(nominal_capacity > 0.0) || !(observed_capacity > 0.0)) {
    throw Error(Errc::NonPositiveObserved, "capacities must be positive");
  }
  return nominal_capacity - observed_capacity;
}

// ---------------------------------------------------------------------------
// Feature table export

inline void write_feature_table(std::ostream& out, std::span<const FeatureVector> rows) {
  for (std::size_t k = 0; k < kFeatureNames.size(); ++k) out << (k ? "," : "") << kFeatureNames[k];
  out << ",target\n";
  auto opt = [](const std::optional<double>& v) { return v ? to_decimal(*v) : std::string(); };
  for (const auto& r : rows) {
    out << to_decimal(r.t_min_avg) << ',' << to_decimal(r.t_max_avg) << ',' << to_decimal(r.i_avg) << ','
        << to_decimal(r.delta_t) << ',' << to_decimal(r.lambda) << ',' << to_decimal(r.delta_t_rest) << ','
        << to_decimal(r.v_in_avg) << ',' << to_decimal(r.dv_avg) << ',' << opt(r.c_prev) << ',' << opt(r.c_approx)
        << ',' << opt(r.target) << '\n';
  }
}

}  // namespace soh::features
