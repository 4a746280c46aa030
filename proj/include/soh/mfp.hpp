#pragma once

// Multivariable fractional polynomial fitting: backfitting over features with
// per-feature FP selection, followed by one AIC stepback pass.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "soh/error.hpp"
#include "soh/fp_core.hpp"
#include "soh/linreg.hpp"

namespace soh::mfp {

using linreg::DesignMatrix;
using linreg::FitResult;
using linreg::Matrix;
using linreg::Vector;

struct MfpConfig {
  int max_degree = 2;
  double alpha_fp = 0.05;
  int max_cycles = 5;
  std::vector<std::string> candidate_features;  // empty = every dataset column
  std::vector<std::string> protected_features;
};

enum class TermKind { Linear, Fp, Excluded };

struct Term {
  TermKind kind = TermKind::Linear;
  fp::FpTerm fp;       // meaningful when kind == Fp
  std::string reason;  // why a feature was excluded ("constant", "stepback")

  friend bool operator==(const Term& a, const Term& b) {
    if (a.kind != b.kind) return false;
    return a.kind != TermKind::Fp || a.fp == b.fp;
  }
};

/// Named covariate columns plus the response.
struct Dataset {
  std::vector<std::string> names;
  Matrix x;
  Vector y;

  std::optional<Eigen::Index> column(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - names.begin());
  }
};

struct TrainingMeta {
  std::string cell_id;
  Eigen::Index n = 0;
  int cycles = 0;
  double nominal_capacity = 0.0;
};

struct FpModel {
  std::vector<std::string> features;  // candidate order
  std::map<std::string, Term> terms;
  FitResult fit;
  std::vector<std::string> column_labels;
  std::vector<std::string> column_groups;
  std::map<std::string, double> preprocessing;  // frozen scalar constants beyond per-term shift/scale
  TrainingMeta training_meta;
  std::vector<std::string> warnings;

  /// Included features in design-column order.
  std::vector<std::string> included() const {
    std::vector<std::string> out;
    for (const auto& g : column_groups) {
      if (g == linreg::kIntercept) continue;
      if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
    }
    return out;
  }
};

/// Columns contributed by one feature under a given term, computed on raw values.
/// Linear terms use the raw covariate; FP terms use the preprocessed one.
inline Matrix term_columns(const Term& term, const Vector& raw) {
  if (term.kind == TermKind::Linear) return raw;
  if (term.kind == TermKind::Excluded) return Matrix(raw.size(), 0);
  return fp::fp_basis(fp::apply_preprocess(raw, term.fp.prep), term.fp.active_powers());
}

inline std::vector<std::string> term_labels(const Term& term, const std::string& name) {
  if (term.kind == TermKind::Linear) return {name};
  if (term.kind == TermKind::Excluded) return {};
  return fp::fp_column_labels(name, term.fp.active_powers());
}

namespace detail {

inline DesignMatrix build_design(const Dataset& data, const std::vector<std::string>& order,
                                 const std::map<std::string, Term>& terms, const std::string& skip = {}) {
  DesignMatrix d = DesignMatrix::intercept_only(data.x.rows());
  for (const auto& name : order) {
    if (name == skip) continue;
    const Term& t = terms.at(name);
    if (t.kind == TermKind::Excluded) continue;
    const Vector raw = data.x.col(*data.column(name));
    const Matrix cols = term_columns(t, raw);
    const auto labels = term_labels(t, name);
    for (Eigen::Index k = 0; k < cols.cols(); ++k) d.add_column(cols.col(k), labels[static_cast<std::size_t>(k)], name);
  }
  return d;
}

}  // namespace detail

/// Residual sum of squares, relative to the total, below which a fit counts
/// as exact.
inline constexpr double kExactFitRss = 1e-20;

/// FP selection for one feature with every other column held fixed in base.
inline Term select_feature_term(const Vector& y, const DesignMatrix& base, const Vector& raw,
                                const fp::Preprocess& prep, const MfpConfig& config) {
  const Vector z = fp::apply_preprocess(raw, prep);
  // Columns this feature may add while leaving a residual degree of freedom.
  const Eigen::Index room = y.size() - base.x.cols() - 1;
  if (room < 1) return Term{};
  const int max_degree = room >= 2 ? config.max_degree : 1;
  const std::array<double, 1> linear_power{1.0};
  const double dev_linear = linreg::fit_ols(fp::with_fp_columns(base, z, linear_power), y).deviance;
  const fp::Fp1Choice fp1 = fp::select_fp1(y, base, raw, prep);
  fp::Fp2Choice fp2{{1.0, 1.0}, fp1.deviance};
  if (max_degree == 2) fp2 = fp::select_fp2(y, base, raw, prep);

  // Fits already exact to rounding make every deviance drop meaningless; take
  // the simplest exact form instead of testing noise.
  const double nd = static_cast<double>(y.size());
  const double tss = (y.array() - y.mean()).square().sum();
  const double dev_floor = nd * (std::log(2.0 * std::numbers::pi * kExactFitRss * tss / nd) + 1.0);
  int degree = 0;
  if (tss > 0.0 && dev_linear <= dev_floor) {
    degree = 0;
  } else if (tss > 0.0 && fp1.deviance <= dev_floor) {
    degree = 1;
  } else {
    degree = fp::fp_degree_choice(dev_linear, fp1.deviance, fp2.deviance, static_cast<std::size_t>(y.size()),
                                  config.alpha_fp, max_degree);
  }
  Term t;
  if (degree == 0 || (degree == 1 && fp1.power == 1.0)) {
    t.kind = TermKind::Linear;
    return t;
  }
  t.kind = TermKind::Fp;
  t.fp.degree = degree;
  t.fp.powers = degree == 1 ? std::array<double, 2>{fp1.power, fp1.power} : fp2.powers;
  t.fp.prep = prep;
  t.fp.domain_min = z.minCoeff();
  return t;
}

/// Fit an MFP model: all-linear start, features visited by increasing p-value,
/// full passes until no transform changes (at most max_cycles), then stepback.
inline FpModel fit_mfp(const Dataset& data, const MfpConfig& config) {
  if (config.max_degree != 1 && config.max_degree != 2) {
    throw Error(Errc::InvalidArgument, "max_degree must be 1 or 2");
  }
  if (!(config.alpha_fp > 0.0 && config.alpha_fp < 1.0)) {
    throw Error(Errc::InvalidAlpha, "alpha must lie in (0, 1)");
  }
  if (config.max_cycles < 1) throw Error(Errc::InvalidArgument, "max_cycles must be positive");
  if (static_cast<std::size_t>(data.x.cols()) != data.names.size() || data.x.rows() != data.y.size()) {
    throw Error(Errc::DimensionMismatch, "dataset columns/rows do not match names/response");
  }
  if (!data.y.allFinite()) throw Error(Errc::InvalidArgument, "response contains non-finite values");

  const std::vector<std::string> candidates =
      config.candidate_features.empty() ? data.names : config.candidate_features;
  for (const auto& p : config.protected_features) {
    if (std::find(candidates.begin(), candidates.end(), p) == candidates.end()) {
      throw Error(Errc::InvalidArgument, "protected feature '" + p + "' is not a candidate");
    }
  }
  for (const auto& c : candidates) {
    if (!data.column(c)) throw Error(Errc::MissingFeature, "dataset has no column '" + c + "'");
  }
  const Eigen::Index n = data.x.rows();
  if (n <= static_cast<Eigen::Index>(candidates.size()) + 2) {
    throw Error(Errc::InsufficientData, std::to_string(n) + " rows for " + std::to_string(candidates.size()) +
                                            " candidate features (need more than candidates + 2)");
  }

  FpModel model;
  model.features = candidates;
  std::vector<std::string> active;
  std::map<std::string, fp::Preprocess> prep;
  for (const auto& name : candidates) {
    const Vector col = data.x.col(*data.column(name));
    if (!col.allFinite()) throw Error(Errc::InvalidArgument, "feature '" + name + "' has non-finite values");
    if (col.maxCoeff() == col.minCoeff()) {
      model.terms[name] = Term{TermKind::Excluded, {}, "constant"};
      model.warnings.push_back("feature '" + name + "' is constant and was excluded");
      spdlog::warn("mfp: feature '{}' is constant and was excluded", name);
      continue;
    }
    model.terms[name] = Term{};
    prep[name] = fp::shift_and_scale(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
    active.push_back(name);
  }

  // Visit order: increasing p-value in the all-linear model.
  const FitResult initial = linreg::fit_ols(detail::build_design(data, active, model.terms), data.y);
  std::vector<std::size_t> idx(active.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return initial.p_values(static_cast<Eigen::Index>(a + 1)) < initial.p_values(static_cast<Eigen::Index>(b + 1));
  });
  std::vector<std::string> visit;
  for (auto i : idx) visit.push_back(active[i]);

  std::vector<std::string> changed_last;
  int cycles = 0;
  bool converged = false;
  while (cycles < config.max_cycles) {
    ++cycles;
    changed_last.clear();
    for (const auto& name : visit) {
      const DesignMatrix base = detail::build_design(data, active, model.terms, name);
      const Vector raw = data.x.col(*data.column(name));
      Term next = select_feature_term(data.y, base, raw, prep.at(name), config);
      if (!(next == model.terms.at(name))) {
        changed_last.push_back(name);
        model.terms[name] = std::move(next);
      }
    }
    spdlog::debug("mfp: cycle {} changed {} feature(s)", cycles, changed_last.size());
    if (changed_last.empty()) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::string names;
    for (const auto& c : changed_last) names += (names.empty() ? "" : ", ") + c;
    throw Error(Errc::NonConvergence, "FP transforms still changing after " + std::to_string(config.max_cycles) +
                                          " cycles: " + names);
  }

  const DesignMatrix full = detail::build_design(data, active, model.terms);
  const std::set<std::string> protected_set(config.protected_features.begin(), config.protected_features.end());
  linreg::StepbackResult sb = linreg::stepback_aic(full, data.y, protected_set);
  for (const auto& g : sb.removed) {
    model.terms[g] = Term{TermKind::Excluded, {}, "stepback"};
    spdlog::info("mfp: stepback removed '{}'", g);
  }

  model.fit = std::move(sb.fit);
  model.column_labels = sb.design.labels;
  model.column_groups = sb.design.groups;
  model.training_meta.n = n;
  model.training_meta.cycles = cycles;
  return model;
}

struct Prediction {
  double delta = 0.0;
  double delta_low = 0.0;
  double delta_high = 0.0;
  double capacity = 0.0;
  double capacity_low = 0.0;
  double capacity_high = 0.0;
  std::vector<std::string> flags;
};

/// Design row (leading 1) for one observation. Preprocessed values that fall
/// at or below zero are clamped to the smallest training value and flagged.
inline Vector design_row(const FpModel& model, const std::map<std::string, double>& features,
                         std::vector<std::string>* flags = nullptr) {
  Vector row(static_cast<Eigen::Index>(model.column_labels.size()));
  row(0) = 1.0;
  Eigen::Index col = 1;
  for (const auto& name : model.included()) {
    const auto it = features.find(name);
    if (it == features.end()) throw Error(Errc::MissingFeature, "feature '" + name + "' is required by the model");
    const Term& t = model.terms.at(name);
    if (t.kind == TermKind::Linear) {
      row(col++) = it->second;
      continue;
    }
    double z = t.fp.prep.apply(it->second);
    if (!(z > 0.0)) {
      if (flags) flags->push_back("out_of_domain:" + name);
      spdlog::warn("mfp: '{}' = {} is outside the FP domain, clamped", name, it->second);
      z = t.fp.domain_min;
    }
    const Vector zv = Vector::Constant(1, z);
    const Matrix cols = fp::fp_basis(zv, t.fp.active_powers());
    for (Eigen::Index k = 0; k < cols.cols(); ++k) row(col++) = cols(0, k);
  }
  return row;
}

/// Point prediction and prediction interval of the fade, mapped onto capacity
/// through the stored nominal capacity.
inline Prediction predict(const FpModel& model, const std::map<std::string, double>& features, double level = 0.90) {
  Prediction p;
  const Vector row = design_row(model, features, &p.flags);
  p.delta = linreg::predict_point(model.fit, row);
  const linreg::Interval iv = linreg::prediction_interval(model.fit, row, level);
  p.delta_low = iv.lower;
  p.delta_high = iv.upper;
  const double nominal = model.training_meta.nominal_capacity;
  p.capacity = nominal - p.delta;
  p.capacity_low = nominal - p.delta_high;
  p.capacity_high = nominal - p.delta_low;
  return p;
}

}  // namespace soh::mfp
