#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vigil/errors.hpp"
#include "vigil/types.hpp"

namespace vigil {

struct CalibrationConfig {
  int baseline_epoch_count{6};
  double scaling{1.1};

  friend bool operator==(const CalibrationConfig&, const CalibrationConfig&) = default;
};

inline void validate(const CalibrationConfig& cfg) {
  if (cfg.baseline_epoch_count < 1) throw ConfigError("baseline_epoch_count", "must be >= 1");
  if (!(cfg.scaling > 0.0) || !std::isfinite(cfg.scaling)) throw ConfigError("scaling", "must be positive");
}

// threshold is always scaling * mean_theta_bp; build through make().
struct BaselineProfile {
  double mean_theta_bp{0.0};
  double scaling{1.1};
  double threshold{0.0};

  static BaselineProfile make(double mean, double scaling) { return {mean, scaling, scaling * mean}; }

  friend bool operator==(const BaselineProfile&, const BaselineProfile&) = default;
};

enum class VigilanceState { Vigilant, NonVigilant };

inline std::string_view to_string(VigilanceState s) {
  return s == VigilanceState::Vigilant ? "vigilant" : "nonvigilant";
}

struct EpochVerdict {
  std::size_t epoch_index{0};
  double theta_bp{0.0};
  double threshold{0.0};
  std::optional<VigilanceState> state;  // empty for invalid epochs
  bool valid{true};

  friend bool operator==(const EpochVerdict&, const EpochVerdict&) = default;
};

struct SessionPhase {
  enum class Kind { Idle, Calibrating, Monitoring };
  Kind kind{Kind::Idle};
  int completed{0};  // calibration epochs accepted so far

  static SessionPhase idle() { return {}; }
  static SessionPhase calibrating(int done) { return {Kind::Calibrating, done}; }
  static SessionPhase monitoring() { return {Kind::Monitoring, 0}; }

  friend bool operator==(const SessionPhase&, const SessionPhase&) = default;
};

inline std::string_view to_string(SessionPhase::Kind k) {
  switch (k) {
    case SessionPhase::Kind::Idle: return "idle";
    case SessionPhase::Kind::Calibrating: return "calibrating";
    case SessionPhase::Kind::Monitoring: return "monitoring";
  }
  return "idle";
}

inline BaselineProfile calibrate(std::span<const BandPower> band_powers, const CalibrationConfig& cfg) {
  validate(cfg);
  if (band_powers.size() != static_cast<std::size_t>(cfg.baseline_epoch_count))
    throw ArgumentError("calibration needs " + std::to_string(cfg.baseline_epoch_count) + " epochs, got " +
                        std::to_string(band_powers.size()));
  double sum = 0.0;
  for (const auto& bp : band_powers) sum += bp.power;
  return BaselineProfile::make(sum / static_cast<double>(band_powers.size()), cfg.scaling);
}

// Overload for callers that track epoch validity alongside the powers.
inline BaselineProfile calibrate(std::span<const BandPower> band_powers, std::span<const bool> valid,
                                 const CalibrationConfig& cfg) {
  for (bool v : valid)
    if (!v) throw CalibrationError("invalid epoch inside the baseline window; restart calibration");
  return calibrate(band_powers, cfg);
}

// Strictly above threshold is vigilant; a tie is non-vigilant.
inline VigilanceState classify(double theta_bp, const BaselineProfile& profile) {
  return theta_bp > profile.threshold ? VigilanceState::Vigilant : VigilanceState::NonVigilant;
}

struct StepInput {
  std::size_t epoch_index{0};
  BandPower theta;
  bool valid{true};
};

struct StepResult {
  SessionPhase phase;
  std::optional<EpochVerdict> verdict;
  std::optional<BaselineProfile> baseline;
};

// Per-session phase machine: Idle -> Calibrating(0..K) -> Monitoring.
// An invalid epoch while calibrating discards the accumulated baseline and
// starts over at Calibrating(0).
class SessionMachine {
 public:
  explicit SessionMachine(CalibrationConfig cfg) : cfg_(cfg) { validate(cfg_); }

  const SessionPhase& phase() const { return phase_; }
  const std::optional<BaselineProfile>& baseline() const { return baseline_; }
  const CalibrationConfig& config() const { return cfg_; }

  void start() {
    if (phase_.kind != SessionPhase::Kind::Idle) throw ProtocolError("session already started");
    phase_ = SessionPhase::calibrating(0);
  }

  StepResult step(const StepInput& in) {
    StepResult r;
    switch (phase_.kind) {
      case SessionPhase::Kind::Idle:
        throw ProtocolError("epoch " + std::to_string(in.epoch_index) + " arrived before session start");
      case SessionPhase::Kind::Calibrating:
        if (!in.valid) {
          pending_.clear();
          phase_ = SessionPhase::calibrating(0);
          break;
        }
        pending_.push_back(in.theta);
        if (static_cast<int>(pending_.size()) == cfg_.baseline_epoch_count) {
          baseline_ = calibrate(pending_, cfg_);
          r.baseline = baseline_;
          pending_.clear();
          phase_ = SessionPhase::monitoring();
        } else {
          phase_ = SessionPhase::calibrating(static_cast<int>(pending_.size()));
        }
        break;
      case SessionPhase::Kind::Monitoring: {
        EpochVerdict v;
        v.epoch_index = in.epoch_index;
        v.threshold = baseline_->threshold;
        v.valid = in.valid;
        if (in.valid) {
          v.theta_bp = in.theta.power;
          v.state = classify(in.theta.power, *baseline_);
        }
        r.verdict = v;
        break;
      }
    }
    r.phase = phase_;
    return r;
  }

 private:
  CalibrationConfig cfg_;
  SessionPhase phase_;
  std::vector<BandPower> pending_;
  std::optional<BaselineProfile> baseline_;
};

}  // namespace vigil
