#pragma once

// End-to-end orchestration: train a capacity-fade model on one cell history,
// predict reference capacities of other cells, and score the predictions.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "soh/error.hpp"
#include "soh/features.hpp"
#include "soh/hexfloat.hpp"
#include "soh/ingest.hpp"
#include "soh/metrics.hpp"
#include "soh/mfp.hpp"
#include "soh/mfp_io.hpp"
#include "soh/prelim.hpp"

namespace soh::pipeline {

inline constexpr const char* kArtifactVersion = "sohmodel v1";
inline constexpr std::size_t kMinReferenceCycles = 8;

enum class Variant { A, B, C };

inline Variant parse_variant(std::string_view s) {
  if (s == "a") return Variant::A;
  if (s == "b") return Variant::B;
  if (s == "c") return Variant::C;
  throw Error(Errc::InvalidArgument, "variant must be a, b or c, got '" + std::string(s) + "'");
}

inline char variant_name(Variant v) { return v == Variant::A ? 'a' : v == Variant::B ? 'b' : 'c'; }

inline bool uses_prelim(Variant v) { return v != Variant::A; }

/// Candidate features: (a) all but c_prev and c_approx, (b) all but c_prev, (c) all.
inline std::vector<std::string> candidate_features(Variant v) {
  std::vector<std::string> out;
  for (const char* name : features::kFeatureNames) {
    const std::string n(name);
    if (n == "c_prev" && v != Variant::C) continue;
    if (n == "c_approx" && v == Variant::A) continue;
    out.push_back(n);
  }
  return out;
}

struct TrainOptions {
  Variant variant = Variant::C;
  double alpha = 0.05;
  int max_degree = 2;
};

struct SohModel {
  Variant variant = Variant::C;
  mfp::FpModel mfp;
  std::optional<prelim::PrelimModel> prelim;
  features::RestVarianceConstant rest;
  double nominal_capacity = 0.0;
};

struct TrainingRow {
  std::size_t cycle_index = 0;
  features::FeatureVector features;
};

struct TrainResult {
  SohModel model;
  std::vector<TrainingRow> rows;
  std::vector<std::string> warnings;
};

namespace detail {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw e.in_stage(name);
  }
}

inline double mean_reference_drop(std::span<const ingest::ReferenceMeasurement> refs) {
  double s = 0.0;
  for (const auto& r : refs) s += r.voltage_drop;
  return refs.empty() ? 0.0 : s / static_cast<double>(refs.size());
}

}  // namespace detail

/// Fits the variant's model on the whole history of one cell.
inline TrainResult train(const ingest::CellHistory& history, const TrainOptions& opt) {
  TrainResult out;
  SohModel& model = out.model;
  model.variant = opt.variant;

  const auto refs = detail::stage("measure", [&] { return ingest::measure_references(history); });
  if (refs.size() < kMinReferenceCycles) {
    throw Error(Errc::InsufficientData, "training needs at least " + std::to_string(kMinReferenceCycles) +
                                            " reference cycles, cell '" + history.cell_id + "' has " +
                                            std::to_string(refs.size()));
  }
  model.nominal_capacity = refs.front().adjusted;

  const auto phases = detail::stage("segment", [&] { return ingest::segment_phases(history); });
  model.rest = detail::stage("rest-variance", [&] { return features::compute_rest_variance(std::span(phases)); });

  if (uses_prelim(opt.variant)) {
    model.prelim = detail::stage("prelim", [&] {
      const auto rows = prelim::build_prelim_training(history, refs);
      auto pm = prelim::fit_prelim(rows);
      pm.fallback_reference_drop = detail::mean_reference_drop(refs);
      return pm;
    });
  }

  std::vector<std::string> names = candidate_features(opt.variant);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  detail::stage("features", [&] {
    for (std::size_t k = 0; k < phases.size(); ++k) {
      const auto& ph = phases[k];
      if (ph.m() == 0) {
        out.warnings.push_back("phase " + std::to_string(ph.index) + " has no RW discharge steps, skipped");
        spdlog::warn("train: {}", out.warnings.back());
        continue;
      }
      features::FeatureVector f = features::extract_features(ph, refs[k].adjusted, model.rest,
                                                             model.prelim ? &*model.prelim : nullptr);
      f.target = features::build_target(model.nominal_capacity, refs[k + 1].adjusted);
      const auto named = f.named();
      std::vector<double> row;
      bool complete = true;
      for (const auto& n : names) {
        const auto it = named.find(n);
        if (it == named.end()) {
          complete = false;
          break;
        }
        row.push_back(it->second);
      }
      if (!complete) {
        out.warnings.push_back("phase " + std::to_string(ph.index) + " lacks a feature value, skipped");
        spdlog::warn("train: {}", out.warnings.back());
        continue;
      }
      xs.push_back(std::move(row));
      ys.push_back(*f.target);
      out.rows.push_back({ph.index, std::move(f)});
    }
    return 0;
  });

  mfp::Dataset data;
  data.names = names;
  data.x.resize(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(names.size()));
  data.y.resize(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      data.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[i][j];
    }
    data.y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  mfp::MfpConfig cfg;
  cfg.alpha_fp = opt.alpha;
  cfg.max_degree = opt.max_degree;
  cfg.candidate_features = names;
  model.mfp = detail::stage("mfp", [&] { return mfp::fit_mfp(data, cfg); });
  model.mfp.training_meta.cell_id = history.cell_id;
  model.mfp.training_meta.nominal_capacity = model.nominal_capacity;
  model.mfp.preprocessing["rest_variance"] = model.rest.sigma2;
  for (const auto& w : out.warnings) model.mfp.warnings.push_back(w);
  return out;
}

// ---------------------------------------------------------------------------
// Artifact

inline std::string save_artifact(const SohModel& m) {
  nlohmann::ordered_json j;
  j["version"] = kArtifactVersion;
  j["variant"] = std::string(1, variant_name(m.variant));
  j["nominal_capacity"] = to_hex(m.nominal_capacity);
  j["rest_variance"] = {{"sigma2", to_hex(m.rest.sigma2)}, {"n_used", m.rest.n_used}};
  if (m.prelim) {
    j["prelim"] = {{"kept", m.prelim->kept},
                   {"dropped", m.prelim->dropped},
                   {"fallback_reference_drop", to_hex(m.prelim->fallback_reference_drop)},
                   {"fit", mfp::fit_to_json(m.prelim->fit)}};
  } else {
    j["prelim"] = nullptr;
  }
  j["model"] = mfp::to_json(m.mfp);
  return j.dump(2) + "\n";
}

inline SohModel load_artifact(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("model artifact is not valid JSON: ") + e.what());
  }
  try {
    const auto version = j.at("version").get<std::string>();
    if (version != kArtifactVersion) {
      throw Error(Errc::SchemaVersionMismatch,
                  "artifact version '" + version + "', expected '" + kArtifactVersion + "'");
    }
    SohModel m;
    m.variant = parse_variant(j.at("variant").get<std::string>());
    m.nominal_capacity = from_hex(j.at("nominal_capacity").get<std::string>());
    m.rest.sigma2 = from_hex(j.at("rest_variance").at("sigma2").get<std::string>());
    m.rest.n_used = j.at("rest_variance").at("n_used").get<std::size_t>();
    if (!j.at("prelim").is_null()) {
      prelim::PrelimModel pm;
      const auto& pj = j.at("prelim");
      pm.kept = pj.at("kept").get<std::vector<std::size_t>>();
      pm.dropped = pj.at("dropped").get<std::vector<std::string>>();
      pm.fallback_reference_drop = from_hex(pj.at("fallback_reference_drop").get<std::string>());
      pm.fit = mfp::fit_from_json(pj.at("fit"));
      for (std::size_t k : pm.kept) {
        if (k >= prelim::kExpandedColumns) throw Error(Errc::ParseError, "preliminary column index out of range");
      }
      if (static_cast<std::size_t>(pm.fit.coefficients.size()) != pm.kept.size()) {
        throw Error(Errc::ParseError, "preliminary coefficient count does not match kept columns");
      }
      m.prelim = std::move(pm);
    }
    if (uses_prelim(m.variant) && !m.prelim) {
      throw Error(Errc::ParseError, "variant needs a preliminary model but the artifact has none");
    }
    m.mfp = mfp::from_json(j.at("model"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("malformed model artifact: ") + e.what());
  }
}

/// Coefficient table with fit statistics, one covariate column per row.
inline std::string summary_table(const SohModel& m) {
  const auto& fit = m.mfp.fit;
  std::ostringstream os;
  os << "model " << variant_name(m.variant) << " trained on " << m.mfp.training_meta.cell_id << " ("
     << fit.n << " reference cycles, nominal " << std::fixed << std::setprecision(4) << m.nominal_capacity
     << " Ah)\n";
  os << std::left << std::setw(28) << "Covariate" << std::right << std::setw(12) << "Est" << std::setw(12)
     << "Std err" << std::setw(12) << "p-value" << '\n';
  auto sci = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < m.mfp.column_labels.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    os << std::left << std::setw(28) << m.mfp.column_labels[i] << std::right << std::fixed << std::setprecision(4)
       << std::setw(12) << fit.coefficients(k) << std::setw(12) << fit.std_errors(k) << std::setw(12)
       << sci(fit.p_values(k)) << '\n';
  }
  os << std::left << std::setw(28) << "R2" << std::right << std::setw(12) << std::setprecision(4) << fit.r2 << '\n';
  os << std::left << std::setw(28) << "R2_adj" << std::right << std::setw(12) << fit.r2_adj << '\n';
  std::vector<std::string> excluded;
  for (const auto& name : m.mfp.features) {
    const auto& t = m.mfp.terms.at(name);
    if (t.kind == mfp::TermKind::Excluded) excluded.push_back(name + " (" + t.reason + ")");
  }
  if (!excluded.empty()) {
    os << "excluded:";
    for (const auto& e : excluded) os << ' ' << e;
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Prediction

struct PredictionRecord {
  std::string cell_id;
  std::size_t cycle_index = 0;
  double predicted_capacity = 0.0;
  double interval_low = 0.0;
  double interval_high = 0.0;
  std::optional<double> observed_capacity;
  double nominal_capacity = 0.0;  // the cell's own first reference capacity when measured
  double predicted_fade = 0.0;
  std::vector<std::string> flags;
};

/// One record per reference cycle closing an RW phase of `history`.
inline std::vector<PredictionRecord> predict_cell(const SohModel& model, const ingest::CellHistory& history,
                                                  double level = 0.90) {
  const auto phases = detail::stage("segment", [&] { return ingest::segment_phases(history); });

  // Reference capacities where they can be measured; unmeasured ones stay empty.
  std::map<std::size_t, ingest::ReferenceMeasurement> measured;
  for (std::size_t i = 0; i < history.steps.size(); ++i) {
    if (history.steps[i].type != ingest::StepType::ReferenceDischarge) continue;
    try {
      measured[i] = ingest::measure_reference(history.steps[i], i);
    } catch (const Error& e) {
      spdlog::debug("predict: reference at step {} not measured: {}", i, e.what());
    }
  }
  auto observed_at = [&](std::size_t step) -> std::optional<double> {
    const auto it = measured.find(step);
    if (it == measured.end()) return std::nullopt;
    return it->second.adjusted;
  };

  double cell_nominal = model.nominal_capacity;
  if (!phases.empty()) {
    if (auto c = observed_at(phases.front().previous_reference_index)) cell_nominal = *c;
  }

  std::vector<PredictionRecord> out;
  detail::stage("predict", [&] {
    for (const auto& ph : phases) {
      if (ph.m() == 0) {
        spdlog::warn("predict: {} phase {} has no RW discharge steps, skipped", history.cell_id, ph.index);
        continue;
      }
      const auto prev = observed_at(ph.previous_reference_index);
      if (model.variant == Variant::C && !prev) {
        throw Error(Errc::MissingFeature, "c_prev for cycle " + std::to_string(ph.index) + " of '" + history.cell_id +
                                              "' needs the previous observed capacity, which is unavailable");
      }
      features::FeatureVector f =
          features::extract_features(ph, model.variant == Variant::C ? prev : std::nullopt, model.rest,
                                     model.prelim ? &*model.prelim : nullptr);
      const mfp::Prediction p = mfp::predict(model.mfp, f.named(), level);
      PredictionRecord r;
      r.cell_id = history.cell_id;
      r.cycle_index = ph.index;
      r.predicted_capacity = p.capacity;
      r.interval_low = p.capacity_low;
      r.interval_high = p.capacity_high;
      r.observed_capacity = observed_at(ph.closing_reference_index);
      r.nominal_capacity = cell_nominal;
      r.predicted_fade = p.delta;
      r.flags = f.flags;
      for (const auto& fl : p.flags) r.flags.push_back(fl);
      if (const auto it = measured.find(ph.closing_reference_index); it != measured.end()) {
        for (const auto& fl : it->second.flags) r.flags.push_back(fl);
      }
      out.push_back(std::move(r));
    }
    return 0;
  });
  return out;
}

inline constexpr const char* kPredictionHeader =
    "cell_id,cycle_index,predicted_capacity,interval_low,interval_high,observed_capacity,nominal_capacity,"
    "predicted_fade,flags";

inline void write_predictions(std::ostream& os, std::span<const PredictionRecord> records) {
  os << kPredictionHeader << '\n';
  for (const auto& r : records) {
    std::string flags;
    for (const auto& f : r.flags) flags += (flags.empty() ? "" : ";") + f;
    os << r.cell_id << ',' << r.cycle_index << ',' << to_decimal(r.predicted_capacity) << ','
       << to_decimal(r.interval_low) << ',' << to_decimal(r.interval_high) << ','
       << (r.observed_capacity ? to_decimal(*r.observed_capacity) : std::string()) << ','
       << to_decimal(r.nominal_capacity) << ',' << to_decimal(r.predicted_fade) << ',' << flags << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_number(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(Errc::ParseError, "prediction table line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline std::vector<PredictionRecord> read_predictions(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kPredictionHeader) {
    throw Error(Errc::ParseError, "prediction table header does not match");
  }
  std::vector<PredictionRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 9) {
      throw Error(Errc::ParseError, "prediction table line " + std::to_string(lineno) + ": expected 9 fields, got " +
                                        std::to_string(f.size()));
    }
    PredictionRecord r;
    r.cell_id = f[0];
    r.cycle_index = static_cast<std::size_t>(detail::parse_number(f[1], lineno));
    r.predicted_capacity = detail::parse_number(f[2], lineno);
    r.interval_low = detail::parse_number(f[3], lineno);
    r.interval_high = detail::parse_number(f[4], lineno);
    if (!f[5].empty()) r.observed_capacity = detail::parse_number(f[5], lineno);
    r.nominal_capacity = detail::parse_number(f[6], lineno);
    r.predicted_fade = detail::parse_number(f[7], lineno);
    if (!f[8].empty()) r.flags = detail::split(f[8], ';');
    out.push_back(std::move(r));
  }
  return out;
}

/// Scores a prediction table; every record must carry an observed capacity.
inline metrics::EvalReport evaluate_records(std::span<const PredictionRecord> records,
                                            double eol_fraction = metrics::kDefaultEolFraction) {
  std::vector<double> pred;
  std::vector<double> obs;
  for (const auto& r : records) {
    pred.push_back(r.predicted_capacity);
    if (r.observed_capacity) obs.push_back(*r.observed_capacity);
  }
  const double nominal = records.empty() ? 0.0 : records.front().nominal_capacity;
  return metrics::evaluate(pred, obs, nominal, eol_fraction);
}

// ---------------------------------------------------------------------------
// Chart

/// Static SVG: shaded prediction interval, predicted line, observed points.
inline std::string render_svg(std::span<const PredictionRecord> records, const std::string& title) {
  constexpr double W = 720, H = 420, L = 70, R = 20, T = 40, B = 50;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!records.empty()) {
    xmin = static_cast<double>(records.front().cycle_index);
    xmax = static_cast<double>(records.back().cycle_index);
    ymin = records.front().interval_low;
    ymax = records.front().interval_high;
    for (const auto& r : records) {
      ymin = std::min({ymin, r.interval_low, r.observed_capacity.value_or(ymin)});
      ymax = std::max({ymax, r.interval_high, r.observed_capacity.value_or(ymax)});
    }
    if (xmax <= xmin) xmax = xmin + 1;
    const double pad = 0.05 * std::max(ymax - ymin, 1e-3);
    ymin -= pad;
    ymax += pad;
  }
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  auto f2 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    os << "<text x=\"" << L - 6 << "\" y=\"" << f2(py(yv) + 4) << "\" text-anchor=\"end\">" << f2(yv) << "</text>\n";
    os << "<text x=\"" << f2(px(xv)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << f2(xv)
       << "</text>\n";
  }
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">reference cycle</text>\n";
  os << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << H / 2
     << ")\">capacity (Ah)</text>\n";

  if (!records.empty()) {
    os << "<polygon fill=\"#cccccc\" stroke=\"none\" points=\"";
    for (const auto& r : records) os << f2(px(static_cast<double>(r.cycle_index))) << ',' << f2(py(r.interval_high)) << ' ';
    for (auto it = records.rbegin(); it != records.rend(); ++it) {
      os << f2(px(static_cast<double>(it->cycle_index))) << ',' << f2(py(it->interval_low)) << ' ';
    }
    os << "\"/>\n";
    os << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" points=\"";
    for (const auto& r : records) {
      os << f2(px(static_cast<double>(r.cycle_index))) << ',' << f2(py(r.predicted_capacity)) << ' ';
    }
    os << "\"/>\n";
    for (const auto& r : records) {
      if (!r.observed_capacity) continue;
      os << "<circle cx=\"" << f2(px(static_cast<double>(r.cycle_index))) << "\" cy=\"" << f2(py(*r.observed_capacity))
         << "\" r=\"2.5\" fill=\"black\"/>\n";
    }
  }
  os << "<text x=\"" << W - R - 150 << "\" y=\"" << T + 10 << "\" fill=\"black\">observed</text>\n";
  os << "<text x=\"" << W - R - 150 << "\" y=\"" << T + 26 << "\" fill=\"#d62728\">predicted</text>\n";
  os << "<text x=\"" << W - R - 150 << "\" y=\"" << T + 42 << "\" fill=\"#888888\">prediction interval</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace soh::pipeline
