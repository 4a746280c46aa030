#pragma once

// Cell cycling logs: the "sohlog v1" text format, reference-capacity
// measurement (coulomb counting plus transient adjustment), and segmentation
// into random-walk phases between reference discharges.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/spdlog.h>

#include "soh/error.hpp"
#include "soh/hexfloat.hpp"
#include "soh/pchip.hpp"

namespace soh::ingest {

inline constexpr std::string_view kLogHeader = "sohlog v1";

enum class StepType { ReferenceCharge, ReferenceDischarge, RwCharge, RwDischarge, Rest };

constexpr std::string_view step_type_name(StepType t) {
  switch (t) {
    case StepType::ReferenceCharge: return "reference_charge";
    case StepType::ReferenceDischarge: return "reference_discharge";
    case StepType::RwCharge: return "rw_charge";
    case StepType::RwDischarge: return "rw_discharge";
    case StepType::Rest: return "rest";
  }
  return "rest";
}

inline std::optional<StepType> parse_step_type(std::string_view s) {
  for (auto t : {StepType::ReferenceCharge, StepType::ReferenceDischarge, StepType::RwCharge, StepType::RwDischarge,
                 StepType::Rest}) {
    if (step_type_name(t) == s) return t;
  }
  return std::nullopt;
}

inline bool is_reference(StepType t) { return t == StepType::ReferenceCharge || t == StepType::ReferenceDischarge; }
inline bool is_rw(StepType t) { return t == StepType::RwCharge || t == StepType::RwDischarge; }

struct Sample {
  double t_rel = 0.0;  // s since step start
  double voltage = 0.0;
  double current = 0.0;
  double temperature = 0.0;
};

// Plausibility windows for recorded values.
inline constexpr double kMinVoltage = 2.0;
inline constexpr double kMaxVoltage = 5.0;
inline constexpr double kMinTemperature = -20.0;
inline constexpr double kMaxTemperature = 60.0;

struct StepRecord {
  StepType type = StepType::Rest;
  double t_start = 0.0;  // absolute, s
  double t_end = 0.0;
  double nominal_current = 0.0;
  double default_duration = 0.0;  // s; 0 when the protocol has none
  std::vector<Sample> samples;
  std::vector<std::string> flags;
  std::size_t line = 0;  // header line in the source file, 0 if synthetic

  double duration() const { return t_end - t_start; }

  bool flagged(std::string_view f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
};

struct CellHistory {
  std::string cell_id;
  int group = 0;  // 1..4, 0 when unknown
  std::vector<StepRecord> steps;
  std::optional<double> nominal_capacity;  // first adjusted reference capacity
  std::vector<std::string> warnings;
};

/// Flags on values outside physical plausibility; the record is kept.
inline void flag_step(StepRecord& s) {
  s.flags.clear();
  if (s.t_end < s.t_start) s.flags.emplace_back("negative_duration");
  for (std::size_t i = 1; i < s.samples.size(); ++i) {
    if (!(s.samples[i].t_rel > s.samples[i - 1].t_rel)) {
      s.flags.emplace_back("non_increasing_time");
      break;
    }
  }
  const bool bad_v = std::any_of(s.samples.begin(), s.samples.end(), [](const Sample& x) {
    return x.voltage < kMinVoltage || x.voltage > kMaxVoltage;
  });
  if (bad_v) s.flags.emplace_back("voltage_out_of_range");
  const bool bad_t = std::any_of(s.samples.begin(), s.samples.end(), [](const Sample& x) {
    return !(x.temperature > kMinTemperature && x.temperature < kMaxTemperature);
  });
  if (bad_t) s.flags.emplace_back("temperature_out_of_range");
}

// ---------------------------------------------------------------------------
// Reference capacity

/// Trapezoidal integral of |current| over the step's samples, in Ah.
inline double compute_reference_capacity(const StepRecord& step) {
  if (step.type != StepType::ReferenceDischarge) {
    throw Error(Errc::ValidationError, "capacity is measured on reference_discharge steps only");
  }
  if (step.samples.size() < 2) {
    throw Error(Errc::TooFewSamples, "reference discharge has " + std::to_string(step.samples.size()) + " sample(s)");
  }
  double as = 0.0;
  for (std::size_t i = 1; i < step.samples.size(); ++i) {
    const auto& a = step.samples[i - 1];
    const auto& b = step.samples[i];
    as += 0.5 * (std::abs(a.current) + std::abs(b.current)) * (b.t_rel - a.t_rel);
  }
  return as / 3600.0;
}

struct TransientAdjustment {
  double raw = 0.0;         // Ah
  double adjusted = 0.0;    // Ah
  double correction = 0.0;  // Ah, >= 0
  double virtual_time = 0.0;  // h added before the first sample
  bool large_extrapolation = false;
};

inline constexpr double kThresholdVoltage = 4.2;

/// Extends a reference discharge back to the threshold voltage. Time is
/// interpolated as a monotone Hermite function of voltage over the initial
/// strictly decreasing voltage prefix and extrapolated linearly past the first
/// sample; the extra time at the discharge current is the correction.
inline TransientAdjustment adjust_capacity_transient(const StepRecord& step,
                                                     double threshold_voltage = kThresholdVoltage) {
  TransientAdjustment out;
  out.raw = compute_reference_capacity(step);
  out.adjusted = out.raw;
  const auto& s = step.samples;
  const double v0 = s.front().voltage;
  if (v0 >= threshold_voltage - 1e-3) return out;

  std::size_t len = 1;
  while (len < s.size() && s[len].voltage < s[len - 1].voltage) ++len;
  if (len < 4) {
    throw Error(Errc::NonMonotonicPrefix,
                "reference discharge starting at t=" + to_decimal(step.t_start) +
                    " has no strictly decreasing voltage prefix of at least 4 samples");
  }
  std::vector<double> volts(len);
  std::vector<double> hours(len);
  for (std::size_t i = 0; i < len; ++i) {
    volts[i] = s[len - 1 - i].voltage;
    hours[i] = (s[len - 1 - i].t_rel - s.front().t_rel) / 3600.0;
  }
  const MonotoneHermite time_of_voltage(std::move(volts), std::move(hours));
  out.virtual_time = std::max(0.0, -time_of_voltage(threshold_voltage));

  double current = step.nominal_current;
  if (!(current > 0.0)) {
    double sum = 0.0;
    for (const auto& x : s) sum += std::abs(x.current);
    current = sum / static_cast<double>(s.size());
  }
  out.correction = current * out.virtual_time;
  out.adjusted = out.raw + out.correction;
  const double observed_h = (s.back().t_rel - s.front().t_rel) / 3600.0;
  out.large_extrapolation = out.virtual_time > 0.1 * observed_h;
  return out;
}

/// Capacity measurement for one reference discharge of a history.
struct ReferenceMeasurement {
  std::size_t step_index = 0;
  double t_start = 0.0;
  double raw = 0.0;
  double adjusted = 0.0;
  double correction = 0.0;
  double voltage_drop = 0.0;  // first minus last sample voltage
  std::vector<std::string> flags;
};

inline ReferenceMeasurement measure_reference(const StepRecord& step, std::size_t index) {
  ReferenceMeasurement m;
  m.step_index = index;
  m.t_start = step.t_start;
  const TransientAdjustment adj = adjust_capacity_transient(step);
  m.raw = adj.raw;
  m.adjusted = adj.adjusted;
  m.correction = adj.correction;
  m.voltage_drop = step.samples.front().voltage - step.samples.back().voltage;
  m.flags = step.flags;
  if (adj.large_extrapolation) m.flags.emplace_back("large_extrapolation");
  return m;
}

/// Measurements for every reference discharge in the history, in order.
inline std::vector<ReferenceMeasurement> measure_references(const CellHistory& h) {
  std::vector<ReferenceMeasurement> out;
  for (std::size_t i = 0; i < h.steps.size(); ++i) {
    if (h.steps[i].type != StepType::ReferenceDischarge) continue;
    out.push_back(measure_reference(h.steps[i], i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parsing and writing

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t j = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > j) out.push_back(line.substr(j, i - j));
  }
  return out;
}

inline bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t'; });
}

inline double number(std::string_view tok, std::size_t line, const std::string& source) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw Error(Errc::ParseError, source + ":" + std::to_string(line) + ": bad number '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace detail

/// Parses a "sohlog v1" document. Malformed lines are hard errors carrying the
/// line number; implausible values only flag the affected step.
inline CellHistory parse_cell(std::istream& in, const std::string& source = "<input>") {
  using detail::number;
  CellHistory h;
  std::string raw;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) -> Error {
    return Error(Errc::ParseError, source + ":" + std::to_string(lineno) + ": " + msg);
  };

  if (!std::getline(in, raw)) {
    lineno = 1;
    throw fail("empty file, expected header '" + std::string(kLogHeader) + "'");
  }
  lineno = 1;
  if (!raw.empty() && raw.back() == '\r') raw.pop_back();
  if (raw != kLogHeader) {
    if (raw.starts_with("sohlog ")) {
      throw Error(Errc::SchemaVersionMismatch,
                  source + ":1: header '" + raw + "', expected '" + std::string(kLogHeader) + "'");
    }
    throw fail("missing header '" + std::string(kLogHeader) + "'");
  }

  std::optional<StepRecord> cur;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string_view line(raw);
    if (detail::blank(line)) {
      if (cur) {
        h.steps.push_back(std::move(*cur));
        cur.reset();
      }
      continue;
    }
    const auto tok = detail::split_ws(line);
    if (tok[0].starts_with("#")) {
      if (cur) throw fail("directive inside a step; steps must be terminated by a blank line");
      if (tok[0] == "#step") {
        if (tok.size() != 6) throw fail("#step needs 5 fields, got " + std::to_string(tok.size() - 1));
        const auto type = parse_step_type(tok[1]);
        if (!type) throw fail("unknown step type '" + std::string(tok[1]) + "'");
        StepRecord s;
        s.type = *type;
        s.t_start = number(tok[2], lineno, source);
        s.t_end = number(tok[3], lineno, source);
        s.nominal_current = number(tok[4], lineno, source);
        s.default_duration = number(tok[5], lineno, source);
        s.line = lineno;
        cur = std::move(s);
      } else if (tok[0] == "#cell") {
        if (tok.size() != 2) throw fail("#cell needs exactly one identifier");
        h.cell_id = std::string(tok[1]);
      } else if (tok[0] == "#group") {
        if (tok.size() != 2) throw fail("#group needs exactly one value");
        const double g = number(tok[1], lineno, source);
        if (g != std::floor(g) || g < 1 || g > 4) throw fail("group must be an integer in 1..4");
        h.group = static_cast<int>(g);
      } else {
        throw fail("unknown directive '" + std::string(tok[0]) + "'");
      }
      continue;
    }
    if (!cur) throw fail("sample line outside a step");
    if (tok.size() != 4) throw fail("sample line needs 4 fields, got " + std::to_string(tok.size()));
    cur->samples.push_back({number(tok[0], lineno, source), number(tok[1], lineno, source),
                            number(tok[2], lineno, source), number(tok[3], lineno, source)});
  }
  if (cur) {
    throw fail("step starting at line " + std::to_string(cur->line) +
               " is not terminated by a blank line (truncated file?)");
  }
  if (h.steps.empty()) throw Error(Errc::EmptyHistory, source + ": no steps");

  for (std::size_t i = 0; i < h.steps.size(); ++i) {
    auto& s = h.steps[i];
    if (i > 0 && s.t_start < h.steps[i - 1].t_start) {
      throw Error(Errc::ValidationError, source + ":" + std::to_string(s.line) + ": steps are not ordered by start time");
    }
    flag_step(s);
    for (const auto& f : s.flags) {
      h.warnings.push_back(source + ":" + std::to_string(s.line) + ": " + f);
      spdlog::warn("{}:{}: step flagged {}", source, s.line, f);
    }
  }
  return h;
}

/// Loads a cell log from disk. format_id must name the supported format.
inline CellHistory load_cell(const std::filesystem::path& path, std::string_view format_id = kLogHeader) {
  if (format_id != kLogHeader) {
    throw Error(Errc::SchemaVersionMismatch, "unsupported log format '" + std::string(format_id) + "'");
  }
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path.string() + "'");
  CellHistory h = parse_cell(in, path.filename().string());
  if (h.cell_id.empty()) h.cell_id = path.stem().string();
  for (std::size_t i = 0; i < h.steps.size(); ++i) {
    if (h.steps[i].type != StepType::ReferenceDischarge) continue;
    try {
      h.nominal_capacity = adjust_capacity_transient(h.steps[i]).adjusted;
    } catch (const Error& e) {
      h.warnings.push_back(std::string("nominal capacity unavailable: ") + e.what());
    }
    break;
  }
  return h;
}

inline void write_cell(std::ostream& out, const CellHistory& h) {
  out << kLogHeader << '\n';
  if (!h.cell_id.empty()) out << "#cell " << h.cell_id << '\n';
  if (h.group != 0) out << "#group " << h.group << '\n';
  out << '\n';
  std::string buf;
  for (const auto& s : h.steps) {
    buf.clear();
    buf += "#step ";
    buf += step_type_name(s.type);
    for (double v : {s.t_start, s.t_end, s.nominal_current, s.default_duration}) {
      buf += ' ';
      buf += to_decimal(v);
    }
    buf += '\n';
    for (const auto& x : s.samples) {
      buf += to_decimal(x.t_rel);
      buf += ' ';
      buf += to_decimal(x.voltage);
      buf += ' ';
      buf += to_decimal(x.current);
      buf += ' ';
      buf += to_decimal(x.temperature);
      buf += '\n';
    }
    buf += '\n';
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Segmentation

/// RW steps between two consecutive reference discharges.
struct RwPhase {
  std::size_t index = 0;
  std::vector<StepRecord> discharge_steps;
  std::vector<StepRecord> charge_steps;
  std::vector<StepRecord> rest_steps;
  StepRecord previous_reference;
  StepRecord closing_reference;
  /// Start of the closing reference cycle (its first reference step after
  /// the last RW step).
  double reference_start = 0.0;
  std::size_t previous_reference_index = 0;  // step indices in the history
  std::size_t closing_reference_index = 0;

  std::size_t m() const { return discharge_steps.size(); }
  std::size_t l() const { return charge_steps.size(); }

  /// End of the last RW step, or of the previous reference when there is none.
  double last_rw_end() const {
    double t = previous_reference.t_end;
    for (const auto& s : discharge_steps) t = std::max(t, s.t_end);
    for (const auto& s : charge_steps) t = std::max(t, s.t_end);
    return t;
  }
};

inline std::vector<RwPhase> segment_phases(const CellHistory& h) {
  std::vector<std::size_t> refs;
  for (std::size_t i = 0; i < h.steps.size(); ++i) {
    if (h.steps[i].type == StepType::ReferenceDischarge) refs.push_back(i);
  }
  if (refs.size() < 2) {
    throw Error(Errc::NoPhases, "cell '" + h.cell_id + "' has " + std::to_string(refs.size()) +
                                    " reference discharge(s), need at least 2");
  }
  std::vector<RwPhase> out;
  for (std::size_t k = 0; k + 1 < refs.size(); ++k) {
    RwPhase ph;
    ph.index = k + 1;
    ph.previous_reference_index = refs[k];
    ph.closing_reference_index = refs[k + 1];
    ph.previous_reference = h.steps[refs[k]];
    ph.closing_reference = h.steps[refs[k + 1]];

    std::vector<const StepRecord*> window_refs{&h.steps[refs[k]]};
    std::size_t last_rw = refs[k];
    for (std::size_t i = refs[k] + 1; i < refs[k + 1]; ++i) {
      const auto& s = h.steps[i];
      switch (s.type) {
        case StepType::RwDischarge: ph.discharge_steps.push_back(s); last_rw = i; break;
        case StepType::RwCharge: ph.charge_steps.push_back(s); last_rw = i; break;
        case StepType::Rest: ph.rest_steps.push_back(s); break;
        default: window_refs.push_back(&s); break;
      }
    }
    window_refs.push_back(&h.steps[refs[k + 1]]);

    ph.reference_start = h.steps[refs[k + 1]].t_start;
    for (std::size_t i = last_rw + 1; i <= refs[k + 1]; ++i) {
      if (is_reference(h.steps[i].type)) {
        ph.reference_start = h.steps[i].t_start;
        break;
      }
    }

    auto check = [&](const StepRecord& rw) {
      for (const StepRecord* r : window_refs) {
        if (rw.t_start < r->t_end && r->t_start < rw.t_end) {
          throw Error(Errc::ValidationError, "RW step at t=" + to_decimal(rw.t_start) +
                                                 " overlaps the reference step at t=" + to_decimal(r->t_start));
        }
      }
    };
    for (const auto& s : ph.discharge_steps) check(s);
    for (const auto& s : ph.charge_steps) check(s);
    out.push_back(std::move(ph));
  }
  return out;
}

}  // namespace soh::ingest
