#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vigil/epoch_assembler.hpp"
#include "vigil/spectral.hpp"
#include "vigil/types.hpp"
#include "vigil/vigilance.hpp"

namespace vigil {

struct PhaseEvent {
  SessionPhase phase;
  friend bool operator==(const PhaseEvent&, const PhaseEvent&) = default;
};
struct EpochEvent {
  EpochVerdict verdict;
  friend bool operator==(const EpochEvent&, const EpochEvent&) = default;
};
struct TagEvent {
  EyeStatusTag tag;
  friend bool operator==(const TagEvent&, const TagEvent&) = default;
};
struct BaselineEvent {
  BaselineProfile profile;
  bool zero_warning{false};  // threshold 0: every nonzero power will read vigilant
  friend bool operator==(const BaselineEvent&, const BaselineEvent&) = default;
};
struct EndedEvent {
  std::string reason;
  std::size_t skip_count{0};
  friend bool operator==(const EndedEvent&, const EndedEvent&) = default;
};

using SessionEvent = std::variant<PhaseEvent, EpochEvent, TagEvent, BaselineEvent, EndedEvent>;

namespace end_reason {
inline constexpr const char* kRequested = "requested";
inline constexpr const char* kSourceExhausted = "source_exhausted";
}  // namespace end_reason

// source -> epoch assembly -> theta power -> phase machine, as one sequential
// transducer. Both the live service and offline analysis drive this type, which
// is what makes their verdicts identical for the same samples.
class Pipeline {
 public:
  Pipeline(const EpochConfig& epoch_cfg, const CalibrationConfig& calib_cfg)
      : epoch_cfg_(epoch_cfg), assembler_(epoch_cfg), estimator_(epoch_cfg), machine_(calib_cfg) {}

  std::vector<SessionEvent> start() {
    machine_.start();
    return {PhaseEvent{machine_.phase()}};
  }

  std::vector<SessionEvent> push(const Sample& s) {
    std::vector<SessionEvent> events;
    for (const Epoch& e : assembler_.push(s)) on_epoch(e, events);
    clock_ = s.t;
    return events;
  }

  void mark_gap() { assembler_.mark_gap(); }

  // t of the newest sample consumed; 0 before the first one
  double sample_clock() const { return clock_; }
  const SessionPhase& phase() const { return machine_.phase(); }
  const std::optional<BaselineProfile>& baseline() const { return machine_.baseline(); }
  std::size_t verdict_count() const { return verdicts_; }
  const EpochConfig& epoch_config() const { return epoch_cfg_; }

 private:
  void on_epoch(const Epoch& e, std::vector<SessionEvent>& events) {
    StepInput in;
    in.epoch_index = e.index;
    in.valid = e.valid;
    in.theta = BandPower{epoch_cfg_.band_lo_hz, epoch_cfg_.band_hi_hz, 0.0};
    if (e.valid) in.theta = theta_power(estimator_.periodogram(e), epoch_cfg_);

    const SessionPhase before = machine_.phase();
    StepResult r = machine_.step(in);
    if (r.baseline) {
      events.emplace_back(BaselineEvent{*r.baseline, r.baseline->threshold == 0.0});
      events.emplace_back(PhaseEvent{r.phase});
    } else if (!(r.phase == before)) {
      events.emplace_back(PhaseEvent{r.phase});
    }
    if (r.verdict) {
      ++verdicts_;
      events.emplace_back(EpochEvent{*r.verdict});
    }
  }

  EpochConfig epoch_cfg_;
  EpochAssembler assembler_;
  SpectralEstimator estimator_;
  SessionMachine machine_;
  double clock_{0.0};
  std::size_t verdicts_{0};
};

}  // namespace vigil
