#pragma once

// Text serialisation of FpModel: a JSON key/value tree with every floating
// point value stored as a hexadecimal float so reloads are bit-exact.

#include <string>

#include <json.hpp>

#include "soh/error.hpp"
#include "soh/hexfloat.hpp"
#include "soh/mfp.hpp"

namespace soh::mfp {

inline constexpr const char* kModelVersion = "fpmodel v1";

namespace io {

using nlohmann::ordered_json;

inline ordered_json vec(const Vector& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(to_hex(v(i)));
  return a;
}

inline Vector vec(const ordered_json& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = from_hex(a[i].get<std::string>());
  return v;
}

inline ordered_json mat(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec(Vector(m.row(r).transpose())));
  return rows;
}

inline Matrix mat(const ordered_json& rows) {
  const auto nr = static_cast<Eigen::Index>(rows.size());
  const auto nc = nr == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows[0].size());
  Matrix m(nr, nc);
  for (Eigen::Index r = 0; r < nr; ++r) m.row(r) = vec(rows[static_cast<std::size_t>(r)]).transpose();
  return m;
}

inline double num(const ordered_json& j, const char* key) { return from_hex(j.at(key).get<std::string>()); }

inline const char* kind_name(TermKind k) {
  switch (k) {
    case TermKind::Linear: return "linear";
    case TermKind::Fp: return "fp";
    case TermKind::Excluded: return "excluded";
  }
  return "excluded";
}

inline TermKind kind_from(const std::string& s) {
  if (s == "linear") return TermKind::Linear;
  if (s == "fp") return TermKind::Fp;
  if (s == "excluded") return TermKind::Excluded;
  throw Error(Errc::ParseError, "unknown term kind '" + s + "'");
}

}  // namespace io

inline nlohmann::ordered_json fit_to_json(const FitResult& f) {
  using io::vec;
  nlohmann::ordered_json j;
  j["n"] = f.n;
  j["df_residual"] = f.df_residual;
  j["coefficients"] = vec(f.coefficients);
  j["std_errors"] = vec(f.std_errors);
  j["t_statistics"] = vec(f.t_statistics);
  j["p_values"] = vec(f.p_values);
  j["sigma2_hat"] = to_hex(f.sigma2_hat);
  j["rss"] = to_hex(f.rss);
  j["r2"] = to_hex(f.r2);
  j["r2_adj"] = to_hex(f.r2_adj);
  j["log_likelihood"] = to_hex(f.log_likelihood);
  j["deviance"] = to_hex(f.deviance);
  j["aic"] = to_hex(f.aic);
  j["xtx_inverse"] = io::mat(f.xtx_inverse);
  j["residuals"] = vec(f.residuals);
  return j;
}

inline FitResult fit_from_json(const nlohmann::ordered_json& j) {
  using io::num;
  using io::vec;
  FitResult f;
  f.n = j.at("n").get<Eigen::Index>();
  f.df_residual = j.at("df_residual").get<Eigen::Index>();
  f.coefficients = vec(j.at("coefficients"));
  f.std_errors = vec(j.at("std_errors"));
  f.t_statistics = vec(j.at("t_statistics"));
  f.p_values = vec(j.at("p_values"));
  f.sigma2_hat = num(j, "sigma2_hat");
  f.rss = num(j, "rss");
  f.r2 = num(j, "r2");
  f.r2_adj = num(j, "r2_adj");
  f.log_likelihood = num(j, "log_likelihood");
  f.deviance = num(j, "deviance");
  f.aic = num(j, "aic");
  f.xtx_inverse = io::mat(j.at("xtx_inverse"));
  f.residuals = vec(j.at("residuals"));
  return f;
}

inline nlohmann::ordered_json to_json(const FpModel& m) {
  nlohmann::ordered_json j;
  j["version"] = kModelVersion;
  j["features"] = m.features;
  nlohmann::ordered_json terms = nlohmann::ordered_json::object();
  for (const auto& name : m.features) {
    const Term& t = m.terms.at(name);
    nlohmann::ordered_json tj;
    tj["kind"] = io::kind_name(t.kind);
    if (t.kind == TermKind::Fp) {
      tj["degree"] = t.fp.degree;
      nlohmann::ordered_json powers = nlohmann::ordered_json::array();
      for (double p : t.fp.active_powers()) powers.push_back(to_hex(p));
      tj["powers"] = powers;
      tj["shift"] = to_hex(t.fp.prep.shift);
      tj["scale"] = to_hex(t.fp.prep.scale);
      tj["domain_min"] = to_hex(t.fp.domain_min);
    }
    if (!t.reason.empty()) tj["reason"] = t.reason;
    terms[name] = tj;
  }
  j["terms"] = terms;
  j["column_labels"] = m.column_labels;
  j["column_groups"] = m.column_groups;
  nlohmann::ordered_json pre = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.preprocessing) pre[k] = to_hex(v);
  j["preprocessing"] = pre;
  j["training_meta"] = {{"cell_id", m.training_meta.cell_id},
                        {"n", m.training_meta.n},
                        {"cycles", m.training_meta.cycles},
                        {"nominal_capacity", to_hex(m.training_meta.nominal_capacity)}};
  j["fit"] = fit_to_json(m.fit);
  j["warnings"] = m.warnings;
  return j;
}

inline FpModel from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("version").get<std::string>() != kModelVersion) {
      throw Error(Errc::SchemaVersionMismatch,
                  "model version '" + j.at("version").get<std::string>() + "', expected '" + kModelVersion + "'");
    }
    FpModel m;
    m.features = j.at("features").get<std::vector<std::string>>();
    for (const auto& name : m.features) {
      const auto& tj = j.at("terms").at(name);
      Term t;
      t.kind = io::kind_from(tj.at("kind").get<std::string>());
      if (t.kind == TermKind::Fp) {
        t.fp.degree = tj.at("degree").get<int>();
        const auto& powers = tj.at("powers");
        if (t.fp.degree < 1 || t.fp.degree > 2 || powers.size() != static_cast<std::size_t>(t.fp.degree)) {
          throw Error(Errc::ParseError, "term '" + name + "' has inconsistent degree/powers");
        }
        t.fp.powers[0] = from_hex(powers[0].get<std::string>());
        t.fp.powers[1] = t.fp.degree == 2 ? from_hex(powers[1].get<std::string>()) : t.fp.powers[0];
        t.fp.prep.shift = io::num(tj, "shift");
        t.fp.prep.scale = io::num(tj, "scale");
        t.fp.domain_min = io::num(tj, "domain_min");
      }
      if (tj.contains("reason")) t.reason = tj.at("reason").get<std::string>();
      m.terms[name] = t;
    }
    m.column_labels = j.at("column_labels").get<std::vector<std::string>>();
    m.column_groups = j.at("column_groups").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("preprocessing").items()) m.preprocessing[k] = from_hex(v.get<std::string>());
    const auto& meta = j.at("training_meta");
    m.training_meta.cell_id = meta.at("cell_id").get<std::string>();
    m.training_meta.n = meta.at("n").get<Eigen::Index>();
    m.training_meta.cycles = meta.at("cycles").get<int>();
    m.training_meta.nominal_capacity = io::num(meta, "nominal_capacity");
    m.fit = fit_from_json(j.at("fit"));
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (static_cast<std::size_t>(m.fit.coefficients.size()) != m.column_labels.size()) {
      throw Error(Errc::ParseError, "coefficient count does not match column labels");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("malformed model document: ") + e.what());
  }
}

inline std::string save_model(const FpModel& m) { return to_json(m).dump(2) + "\n"; }

inline FpModel load_model(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("model document is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

}  // namespace soh::mfp
