#pragma once

// Preliminary per-step capacity model: a linear regression of the equivalent
// full-discharge time on six step predictors with all two- and three-way
// interactions. Its only consumer is the C_approx feature.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "soh/error.hpp"
#include "soh/hexfloat.hpp"
#include "soh/ingest.hpp"
#include "soh/linreg.hpp"

namespace soh::prelim {

using linreg::Matrix;
using linreg::Vector;

inline constexpr std::size_t kPredictors = 6;
inline constexpr std::array<const char*, kPredictors> kPredictorNames{"t_bar", "current", "v_bar",
                                                                       "dv",    "dT",      "t_triangle"};
/// Intercept + 6 main effects + 15 two-way + 20 three-way products.
inline constexpr std::size_t kExpandedColumns = 1 + 6 + 15 + 20;

/// Residual norm (of a unit-norm column after projection on the kept columns)
/// below which an expanded column is treated as linearly dependent.
inline constexpr double kDependenceTolerance = 1e-7;

struct StepPredictors {
  double t_bar = 0.0;       // mean temperature, degC
  double current = 0.0;     // A
  double v_bar = 0.0;       // mean voltage, V
  double dv = 0.0;          // start minus end voltage, V (> 0)
  double dT = 0.0;          // temperature range, degC
  double t_triangle = 0.0;  // h

  std::array<double, kPredictors> values() const { return {t_bar, current, v_bar, dv, dT, t_triangle}; }
};

struct PrelimRow {
  double t_dis = 0.0;  // response, h
  StepPredictors x;
};

struct PrelimModel {
  linreg::FitResult fit;
  std::vector<std::size_t> kept;  // indices into the expanded column list
  std::vector<std::string> dropped;
  /// Reference voltage drop used when a phase's opening reference has no
  /// usable samples: the mean drop over the training references.
  double fallback_reference_drop = 0.0;
};

/// Similar-triangles rescaling of a step of duration t (h) and voltage drop b
/// to the full reference drop A.
inline double t_triangle(double t, double reference_drop, double step_drop) {
  if (!(step_drop > 0.0)) {
    throw Error(Errc::NonPositiveDrop, "step voltage drop must be positive, got " + to_decimal(step_drop));
  }
  if (!(reference_drop > 0.0)) {
    throw Error(Errc::NonPositiveDrop, "reference voltage drop must be positive, got " + to_decimal(reference_drop));
  }
  if (!(t > 0.0)) throw Error(Errc::InvalidArgument, "step duration must be positive");
  return t * reference_drop / step_drop;
}

/// Predictors for one RW discharge step; nullopt when its voltage drop is not
/// positive (such steps are excluded).
inline std::optional<StepPredictors> step_predictors(const ingest::StepRecord& step, double reference_drop) {
  if (step.samples.empty()) return std::nullopt;
  StepPredictors p;
  p.dv = step.samples.front().voltage - step.samples.back().voltage;
  if (!(p.dv > 0.0) || !(step.duration() > 0.0)) return std::nullopt;
  double tsum = 0.0;
  double vsum = 0.0;
  double tlo = step.samples.front().temperature;
  double thi = tlo;
  for (const auto& s : step.samples) {
    tsum += s.temperature;
    vsum += s.voltage;
    tlo = std::min(tlo, s.temperature);
    thi = std::max(thi, s.temperature);
  }
  const double n = static_cast<double>(step.samples.size());
  p.t_bar = tsum / n;
  p.v_bar = vsum / n;
  p.dT = thi - tlo;
  p.current = std::abs(step.nominal_current);
  p.t_triangle = t_triangle(step.duration() / 3600.0, reference_drop, p.dv);
  return p;
}

inline std::vector<std::string> expanded_labels() {
  std::vector<std::string> out{linreg::kIntercept};
  for (std::size_t i = 0; i < kPredictors; ++i) out.emplace_back(kPredictorNames[i]);
  for (std::size_t i = 0; i < kPredictors; ++i)
    for (std::size_t j = i + 1; j < kPredictors; ++j)
      out.push_back(std::string(kPredictorNames[i]) + ":" + kPredictorNames[j]);
  for (std::size_t i = 0; i < kPredictors; ++i)
    for (std::size_t j = i + 1; j < kPredictors; ++j)
      for (std::size_t k = j + 1; k < kPredictors; ++k)
        out.push_back(std::string(kPredictorNames[i]) + ":" + kPredictorNames[j] + ":" + kPredictorNames[k]);
  return out;
}

inline Vector expand(const StepPredictors& p) {
  const auto v = p.values();
  Vector out(static_cast<Eigen::Index>(kExpandedColumns));
  Eigen::Index c = 0;
  out(c++) = 1.0;
  for (std::size_t i = 0; i < kPredictors; ++i) out(c++) = v[i];
  for (std::size_t i = 0; i < kPredictors; ++i)
    for (std::size_t j = i + 1; j < kPredictors; ++j) out(c++) = v[i] * v[j];
  for (std::size_t i = 0; i < kPredictors; ++i)
    for (std::size_t j = i + 1; j < kPredictors; ++j)
      for (std::size_t k = j + 1; k < kPredictors; ++k) out(c++) = v[i] * v[j] * v[k];
  return out;
}

/// Piecewise-linear capacity between reference measurements, keyed on each
/// reference discharge's start time. Outside the measured span it holds the
/// end values.
inline double interpolate_capacity(std::span<const ingest::ReferenceMeasurement> refs, double t) {
  if (refs.empty()) throw Error(Errc::NoReferenceAnchor, "no reference measurements");
  if (t <= refs.front().t_start) return refs.front().adjusted;
  if (t >= refs.back().t_start) return refs.back().adjusted;
  const auto it = std::upper_bound(refs.begin(), refs.end(), t,
                                   [](double v, const ingest::ReferenceMeasurement& r) { return v < r.t_start; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double w = (t - a.t_start) / (b.t_start - a.t_start);
  return a.adjusted + w * (b.adjusted - a.adjusted);
}

/// Training rows from every RW discharge step lying between the first and last
/// reference discharge. The response is the interpolated capacity at the step
/// midpoint divided by the step current.
inline std::vector<PrelimRow> build_prelim_training(const ingest::CellHistory& history,
                                                    std::span<const ingest::ReferenceMeasurement> refs) {
  if (refs.size() < 2) throw Error(Errc::InsufficientData, "preliminary model needs at least 2 reference capacities");
  std::vector<PrelimRow> rows;
  std::size_t next_ref = 0;  // index into refs of the first reference not yet passed
  for (std::size_t i = 0; i < history.steps.size(); ++i) {
    while (next_ref < refs.size() && refs[next_ref].step_index <= i) ++next_ref;
    const auto& s = history.steps[i];
    if (s.type != ingest::StepType::RwDischarge) continue;
    if (next_ref == 0) {
      throw Error(Errc::NoReferenceAnchor,
                  "RW discharge at t=" + to_decimal(s.t_start) + " precedes the first reference discharge");
    }
    if (next_ref == refs.size()) continue;  // after the last reference: no response available
    const auto p = step_predictors(s, refs[next_ref - 1].voltage_drop);
    if (!p) continue;
    const double mid = 0.5 * (s.t_start + s.t_end);
    const double capacity = interpolate_capacity(refs, mid);
    if (!(p->current > 0.0)) continue;
    rows.push_back({capacity / p->current, *p});
  }
  return rows;
}

/// OLS on the full interaction expansion. Columns that are linearly dependent
/// on earlier ones (intercept, main effects, two-way, three-way order) are
/// dropped and logged.
inline PrelimModel fit_prelim(std::span<const PrelimRow> rows) {
  if (rows.size() < 2 * kExpandedColumns) {
    throw Error(Errc::InsufficientData, "preliminary model needs at least " + std::to_string(2 * kExpandedColumns) +
                                            " rows, got " + std::to_string(rows.size()));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix full(n, static_cast<Eigen::Index>(kExpandedColumns));
  Vector y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    full.row(r) = expand(rows[static_cast<std::size_t>(r)].x).transpose();
    y(r) = rows[static_cast<std::size_t>(r)].t_dis;
  }

  const auto labels = expanded_labels();
  PrelimModel model;
  std::vector<Vector> basis;
  for (Eigen::Index j = 0; j < full.cols(); ++j) {
    const double norm = full.col(j).norm();
    bool keep = norm > 0.0;
    if (keep) {
      Vector v = full.col(j) / norm;
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& q : basis) v -= q.dot(v) * q;
      }
      const double resid = v.norm();
      keep = resid > kDependenceTolerance;
      if (keep) basis.push_back(v / resid);
    }
    if (keep) {
      model.kept.push_back(static_cast<std::size_t>(j));
    } else {
      model.dropped.push_back(labels[static_cast<std::size_t>(j)]);
      spdlog::warn("prelim: dropped linearly dependent column '{}'", labels[static_cast<std::size_t>(j)]);
    }
  }

  Matrix x(n, static_cast<Eigen::Index>(model.kept.size()));
  for (std::size_t k = 0; k < model.kept.size(); ++k) {
    x.col(static_cast<Eigen::Index>(k)) = full.col(static_cast<Eigen::Index>(model.kept[k]));
  }
  model.fit = linreg::fit_ols(x, y);
  return model;
}

inline Vector design_row(const PrelimModel& model, const StepPredictors& p) {
  const Vector e = expand(p);
  Vector row(static_cast<Eigen::Index>(model.kept.size()));
  for (std::size_t k = 0; k < model.kept.size(); ++k) {
    row(static_cast<Eigen::Index>(k)) = e(static_cast<Eigen::Index>(model.kept[k]));
  }
  return row;
}

struct StepCapacity {
  double capacity = 0.0;  // Ah
  bool clamped = false;   // negative prediction raised to 0
};

/// Rough capacity of one RW discharge step: current times predicted
/// equivalent full-discharge time.
inline StepCapacity approx_step_capacity(const PrelimModel& model, const StepPredictors& p) {
  if (!(p.dv > 0.0)) throw Error(Errc::NonPositiveDrop, "step voltage drop must be positive");
  const double t_hat = linreg::predict_point(model.fit, design_row(model, p));
  const double c = p.current * t_hat;
  if (c < 0.0) return {0.0, true};
  return {c, false};
}

/// Mean rough capacity over a phase's RW discharge steps with a positive
/// voltage drop; nullopt if there are none.
inline std::optional<double> approx_phase_capacity(const PrelimModel& model, const ingest::RwPhase& phase,
                                                   std::vector<std::string>* flags = nullptr) {
  double reference_drop =
      phase.previous_reference.samples.empty()
          ? 0.0
          : phase.previous_reference.samples.front().voltage - phase.previous_reference.samples.back().voltage;
  if (!(reference_drop > 0.0)) reference_drop = model.fallback_reference_drop;
  if (!(reference_drop > 0.0)) return std::nullopt;
  double sum = 0.0;
  std::size_t count = 0;
  std::size_t clamped = 0;
  for (const auto& s : phase.discharge_steps) {
    const auto p = step_predictors(s, reference_drop);
    if (!p) continue;
    const StepCapacity c = approx_step_capacity(model, *p);
    if (c.clamped) ++clamped;
    sum += c.capacity;
    ++count;
  }
  if (flags && clamped > 0) flags->push_back("c_approx_clamped:" + std::to_string(clamped));
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

}  // namespace soh::prelim
