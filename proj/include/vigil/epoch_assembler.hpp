#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vigil/errors.hpp"
#include "vigil/types.hpp"

namespace vigil {

// Tumbling-window framer anchored at t = 0.
//
// Each sample is placed on its nominal slot round(t * fs); window k owns slots
// [k*N, (k+1)*N). An epoch is emitted valid the moment its N-th slot is filled.
// A window that is closed early by a later sample (missing slots, an
// inter-sample gap above two nominal intervals, or an overflow mark) is emitted
// zero-filled and flagged invalid, so epoch indices stay consecutive. A partial
// window at end of stream is discarded.
//
// Single producer; not thread-safe.
class EpochAssembler {
 public:
  explicit EpochAssembler(const EpochConfig& cfg)
      : cfg_(cfg), n_(cfg.samples_per_epoch()), buffer_(n_, 0.0), filled_(n_, false) {
    validate(cfg_);
  }

  // Feeds one sample; returns the epochs completed by it (usually none or one,
  // more when the sample lands past skipped windows).
  std::vector<Epoch> push(const Sample& s) {
    if (!std::isfinite(s.t) || !std::isfinite(s.uv))
      throw StreamError("non-finite sample at t=" + std::to_string(s.t));
    if (s.t < 0.0) throw StreamError("negative timestamp " + std::to_string(s.t));
    if (last_t_ && !(s.t > *last_t_))
      throw StreamError("timestamp not increasing: " + std::to_string(s.t) + " after " + std::to_string(*last_t_));

    std::vector<Epoch> out;
    const double interval = 1.0 / cfg_.sample_rate_hz;
    const bool gap = last_t_ && (s.t - *last_t_) > 2.0 * interval * (1.0 + 1e-9);
    last_t_ = s.t;

    const auto slot = static_cast<std::size_t>(std::llround(s.t * cfg_.sample_rate_hz));
    const std::size_t window = slot / n_;
    if (window < current_) return out;  // window already emitted (timestamp jitter)

    while (current_ < window) {
      // current window ends without all slots filled
      out.push_back(flush(false));
    }
    if (gap && last_window_ == window) tainted_ = true;
    last_window_ = window;
    const std::size_t pos = slot % n_;
    if (!filled_[pos]) {
      filled_[pos] = true;
      buffer_[pos] = s.uv;
      ++count_;
    }
    if (count_ == n_) out.push_back(flush(!tainted_));
    return out;
  }

  // Samples were lost upstream (queue overflow); the open window is invalid.
  void mark_gap() { tainted_ = true; }

  std::size_t next_index() const { return current_; }

 private:
  Epoch flush(bool valid) {
    Epoch e;
    e.index = current_;
    e.start_t = static_cast<double>(current_) * cfg_.epoch_seconds;
    e.valid = valid;
    e.samples.assign(n_, 0.0);
    if (valid) e.samples = buffer_;
    std::fill(buffer_.begin(), buffer_.end(), 0.0);
    std::fill(filled_.begin(), filled_.end(), false);
    count_ = 0;
    tainted_ = false;
    ++current_;
    return e;
  }

  EpochConfig cfg_;
  std::size_t n_;
  std::vector<double> buffer_;
  std::vector<bool> filled_;
  std::size_t count_{0};
  std::size_t current_{0};
  bool tainted_{false};
  std::optional<double> last_t_;
  std::size_t last_window_{0};
};

inline std::vector<Epoch> assemble_epochs(std::span<const Sample> samples, const EpochConfig& cfg) {
  EpochAssembler assembler(cfg);
  std::vector<Epoch> epochs;
  for (const auto& s : samples)
    for (auto& e : assembler.push(s)) epochs.push_back(std::move(e));
  return epochs;
}

}  // namespace vigil
