#pragma once

// Seeded generator of protocol-conformant cell logs. The cell model (quadratic
// OCV, series resistance, first-order heating, throughput-driven fade with
// rest recovery) is a test fixture only.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "soh/error.hpp"
#include "soh/ingest.hpp"

namespace soh::synth {

using ingest::CellHistory;
using ingest::Sample;
using ingest::StepRecord;
using ingest::StepType;

inline constexpr std::array<double, 6> kRwCurrents{0.75, 1.5, 2.25, 3.0, 3.75, 4.5};

struct Protocol {
  int group = 3;
  std::size_t rw_steps_per_phase = 1500;  // step records between references
  bool random_direction = true;           // group 3: each step charge or discharge at random
  double step_seconds = 300.0;            // default duration of timed steps
  bool charge_constant_current = false;   // groups 2 and 4: 2 A to 4.2 V
  bool charge_random_duration = false;    // group 1: 0.5..3 h
  bool discharge_to_cutoff = false;       // group 1: discharge until 3.2 V
  bool rest_always = false;               // group 4
  std::array<double, 6> current_weights{1, 1, 1, 1, 1, 1};
};

inline Protocol protocol_for(int group) {
  Protocol p;
  p.group = group;
  switch (group) {
    case 1:
      p.rw_steps_per_phase = 50;
      p.random_direction = false;
      p.charge_random_duration = true;
      p.discharge_to_cutoff = true;
      p.step_seconds = 0.0;
      break;
    case 2:
      p.rw_steps_per_phase = 100;  // 50 charge-discharge processes
      p.random_direction = false;
      p.charge_constant_current = true;
      break;
    case 3:
      break;
    case 4:
      p.rw_steps_per_phase = 100;
      p.random_direction = false;
      p.charge_constant_current = true;
      p.step_seconds = 60.0;
      p.rest_always = true;
      p.current_weights = {1, 1, 2, 3, 4, 5};
      break;
    default:
      throw Error(Errc::InvalidGroup, "protocol group must be 1..4, got " + std::to_string(group));
  }
  return p;
}

struct SynthConfig {
  std::uint64_t seed = 1;
  int group = 3;
  std::size_t n_phases = 40;
  std::string cell_id = "SYN";
  double nominal_capacity = 2.1;     // Ah, before per-cell jitter
  double fade_per_phase = 0.018;     // Ah per phase at reference throughput and 25 degC
  double fade_acceleration = 0.8;    // growth of fade with accumulated loss
  double fade_temperature = 0.03;    // relative fade increase per degC above 25
  double cell_variation = 0.10;      // relative per-cell spread of the fade rate
  double recovery_amplitude = 0.04;  // Ah regained after a long rest
  double recovery_tau_hours = 12.0;
  std::size_t long_rests = 2;
  double resistance = 0.06;          // ohm, fresh cell
  double resistance_growth = 0.08;   // ohm per Ah of capacity lost
  double ambient = 24.0;             // degC
  double capacity_noise = 0.002;     // Ah, reference measurement noise
  double rw_sample_seconds = 100.0;
  double reference_sample_seconds = 60.0;
};

namespace detail {

inline constexpr double kVmin = 3.2;
inline constexpr double kVmax = 4.2;
inline constexpr double kSubstep = 10.0;  // s

inline double ocv(double soc) {
  const double s = std::clamp(soc, 0.0, 1.0);
  return 3.1 + 0.95 * s + 0.15 * s * s;
}

/// SoC at which the loaded voltage reaches the discharge cut-off.
inline double cutoff_soc(double current, double resistance) {
  const double target = kVmin + current * resistance - 3.1;
  if (target <= 0.0) return 0.0;
  return (-0.95 + std::sqrt(0.95 * 0.95 + 4.0 * 0.15 * target)) / (2.0 * 0.15);
}

class Cell {
 public:
  Cell(const SynthConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {
    std::normal_distribution<double> jitter(0.0, 1.0);
    capacity0_ = cfg.nominal_capacity * (1.0 + 0.01 * jitter(rng_));
    capacity_ = capacity0_;
    fade_scale_ = std::max(0.2, 1.0 + cfg.cell_variation * jitter(rng_));
    temp_ = cfg.ambient;
  }

  double resistance() const { return cfg_.resistance + cfg_.resistance_growth * (capacity0_ - capacity_); }
  double capacity() const { return capacity_; }
  double soc() const { return soc_; }
  double time() const { return time_; }

  void advance_idle(double seconds) { time_ += seconds; }

  /// Heating toward ambient + 6 degC/W with a 600 s time constant.
  void heat(double current, double dt) {
    const double target = cfg_.ambient + 6.0 * current * current * resistance();
    temp_ += (target - temp_) * (1.0 - std::exp(-dt / 600.0));
  }

  double temperature() {
    std::normal_distribution<double> noise(0.0, 0.05);
    return temp_ + noise(rng_);
  }

  /// Runs a constant-current step until max_seconds or the voltage limit.
  /// Positive current discharges.
  StepRecord run_step(StepType type, double current, double max_seconds, double default_duration) {
    StepRecord step;
    step.type = type;
    step.t_start = time_;
    step.nominal_current = current;
    step.default_duration = default_duration;
    const bool discharge = type == StepType::RwDischarge || type == StepType::ReferenceDischarge;
    const double sample_every = cfg_.rw_sample_seconds;
    double t = 0.0;
    double next_sample = 0.0;
    auto voltage = [&] { return ocv(soc_) + (discharge ? -current : current) * resistance(); };
    for (;;) {
      if (t >= next_sample) {
        step.samples.push_back({t, voltage(), current, temperature()});
        next_sample += sample_every;
      }
      const bool at_limit = discharge ? voltage() <= kVmin : voltage() >= kVmax;
      if (t >= max_seconds || (at_limit && t > 0.0)) break;
      const double dt = std::min(kSubstep, max_seconds - t);
      soc_ += (discharge ? -1.0 : 1.0) * current * dt / 3600.0 / capacity_;
      heat(current, dt);
      t += dt;
      if (discharge) throughput_ += current * dt / 3600.0;
    }
    if (step.samples.back().t_rel < t) step.samples.push_back({t, voltage(), current, temperature()});
    time_ += t;
    step.t_end = time_;
    temp_sum_ += temp_ * t;
    temp_time_ += t;
    return step;
  }

  StepRecord rest(double seconds) {
    StepRecord step;
    step.type = StepType::Rest;
    step.t_start = time_;
    step.samples.push_back({0.0, ocv(soc_), 0.0, temperature()});
    temp_ += (cfg_.ambient - temp_) * (1.0 - std::exp(-seconds / 600.0));
    step.samples.push_back({seconds, ocv(soc_), 0.0, temperature()});
    time_ += seconds;
    step.t_end = time_;
    return step;
  }

  /// Reference charge (2 A to 4.2 V, then CV) followed by the 1 A reference
  /// discharge to 3.2 V. `effective_extra` is the apparent capacity regained
  /// from the preceding rest.
  std::pair<StepRecord, StepRecord> reference_cycle(double effective_extra) {
    StepRecord charge;
    charge.type = StepType::ReferenceCharge;
    charge.t_start = time_;
    charge.nominal_current = 2.0;
    const double cc_hours = std::max(0.05, (1.0 - soc_) * capacity_ / 2.0);
    const double cv_hours = 0.5;
    const double total = (cc_hours + cv_hours) * 3600.0;
    charge.samples.push_back({0.0, std::min(kVmax, ocv(soc_) + 2.0 * resistance()), 2.0, temperature()});
    charge.samples.push_back({cc_hours * 3600.0, kVmax, 2.0, temperature()});
    charge.samples.push_back({total, kVmax, 0.01, temperature()});
    time_ += total;
    charge.t_end = time_;
    soc_ = 1.0;
    temp_ = cfg_.ambient;

    time_ += 60.0;
    std::normal_distribution<double> noise(0.0, cfg_.capacity_noise);
    const double effective = std::max(0.2, capacity_ + effective_extra + noise(rng_));
    const double r = resistance();
    const double end_soc = cutoff_soc(1.0, r);
    const double seconds = effective * (1.0 - end_soc) * 3600.0;

    StepRecord dis;
    dis.type = StepType::ReferenceDischarge;
    dis.t_start = time_;
    dis.nominal_current = 1.0;
    for (double t = 0.0;; t += cfg_.reference_sample_seconds) {
      const double tt = std::min(t, seconds);
      const double s = 1.0 - tt / 3600.0 / effective;
      heat(1.0, tt == 0.0 ? 0.0 : std::min(cfg_.reference_sample_seconds, tt));
      dis.samples.push_back({tt, ocv(s) - r, 1.0, temperature()});
      if (tt >= seconds) break;
    }
    time_ += seconds;
    dis.t_end = time_;
    soc_ = end_soc;
    return {std::move(charge), std::move(dis)};
  }

  /// Applies one phase worth of fade; returns nothing, updates capacity.
  void degrade(double reference_throughput) {
    const double mean_temp = temp_time_ > 0.0 ? temp_sum_ / temp_time_ : cfg_.ambient;
    const double rel = reference_throughput > 0.0 ? throughput_ / reference_throughput : 1.0;
    const double loss_frac = 1.0 - capacity_ / capacity0_;
    const double fade = cfg_.fade_per_phase * fade_scale_ * rel *
                        std::max(0.0, 1.0 + cfg_.fade_temperature * (mean_temp - 25.0)) *
                        (1.0 + cfg_.fade_acceleration * loss_frac);
    capacity_ = std::max(0.3 * capacity0_, capacity_ - fade);
    throughput_ = 0.0;
    temp_sum_ = 0.0;
    temp_time_ = 0.0;
  }

  double phase_throughput() const { return throughput_; }

 private:
  const SynthConfig& cfg_;
  std::mt19937_64& rng_;
  double capacity0_ = 2.1;
  double capacity_ = 2.1;
  double fade_scale_ = 1.0;
  double soc_ = 0.5;
  double temp_ = 24.0;
  double time_ = 0.0;
  double throughput_ = 0.0;
  double temp_sum_ = 0.0;
  double temp_time_ = 0.0;
};

}  // namespace detail

/// Generates a cell history with n_phases RW phases framed by n_phases + 1
/// reference cycles.
inline CellHistory generate(const SynthConfig& cfg) {
  const Protocol proto = protocol_for(cfg.group);
  if (cfg.n_phases < 1) throw Error(Errc::InvalidArgument, "n_phases must be positive");
  std::mt19937_64 rng(cfg.seed);
  detail::Cell cell(cfg, rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::discrete_distribution<std::size_t> pick_current(proto.current_weights.begin(), proto.current_weights.end());

  CellHistory h;
  h.cell_id = cfg.cell_id;
  h.group = cfg.group;

  std::vector<std::size_t> long_rest_phases;
  for (std::size_t k = 1; k <= cfg.long_rests; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(cfg.long_rests + 1);
    long_rest_phases.push_back(
        std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac * static_cast<double>(cfg.n_phases)))));
  }

  auto add_reference = [&](double rest_hours) {
    const double extra = cfg.recovery_amplitude * (1.0 - std::exp(-rest_hours / cfg.recovery_tau_hours));
    auto [c, d] = cell.reference_cycle(extra);
    h.steps.push_back(std::move(c));
    h.steps.push_back(std::move(d));
  };

  add_reference(0.0);
  double reference_throughput = 0.0;
  for (std::size_t phase = 1; phase <= cfg.n_phases; ++phase) {
    const bool rests = proto.rest_always || phase > cfg.n_phases / 2;
    for (std::size_t k = 0; k < proto.rw_steps_per_phase; ++k) {
      bool discharge = proto.random_direction ? unit(rng) < 0.5 : (k % 2 == 1);
      StepRecord step;
      if (!discharge) {
        if (proto.charge_constant_current) {
          step = cell.run_step(StepType::RwCharge, 2.0, 4.0 * 3600.0, 0.0);
        } else if (proto.charge_random_duration) {
          const double dur = (0.5 + 2.5 * unit(rng)) * 3600.0;
          step = cell.run_step(StepType::RwCharge, 2.0, dur, dur);
        } else {
          step = cell.run_step(StepType::RwCharge, kRwCurrents[pick_current(rng)], proto.step_seconds,
                               proto.step_seconds);
        }
      } else {
        const double current = kRwCurrents[pick_current(rng)];
        if (proto.discharge_to_cutoff) {
          step = cell.run_step(StepType::RwDischarge, current, 6.0 * 3600.0, 0.0);
        } else {
          step = cell.run_step(StepType::RwDischarge, current, proto.step_seconds, proto.step_seconds);
        }
      }
      h.steps.push_back(std::move(step));
      if (rests && k + 1 < proto.rw_steps_per_phase) h.steps.push_back(cell.rest(30.0 + 90.0 * unit(rng)));
    }
    if (phase == 1) reference_throughput = cell.phase_throughput();

    const bool long_rest =
        std::find(long_rest_phases.begin(), long_rest_phases.end(), phase) != long_rest_phases.end();
    const double rest_hours = long_rest ? 48.0 + 48.0 * unit(rng) : 0.05 + 0.95 * unit(rng);
    h.steps.push_back(cell.rest(rest_hours * 3600.0));
    cell.degrade(reference_throughput);
    add_reference(rest_hours);
  }
  return h;
}

}  // namespace soh::synth
