#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vigil/errors.hpp"

namespace vigil {

// One reading from the frontal channel. t is seconds since session start.
struct Sample {
  double t{0.0};
  double uv{0.0};

  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class WindowFunction { Rectangular, Hann };

inline std::string_view to_string(WindowFunction w) {
  return w == WindowFunction::Hann ? "hann" : "rect";
}

inline WindowFunction parse_window(std::string_view s) {
  if (s == "rect" || s == "rectangular") return WindowFunction::Rectangular;
  if (s == "hann") return WindowFunction::Hann;
  throw ConfigError("window", "expected rect or hann, got '" + std::string(s) + "'");
}

inline constexpr int kMinEpochSeconds = 2;
inline constexpr int kMaxEpochSeconds = 10;

struct EpochConfig {
  int sample_rate_hz{256};
  int epoch_seconds{5};
  WindowFunction window_fn{WindowFunction::Rectangular};
  double band_lo_hz{4.0};
  double band_hi_hz{8.0};

  std::size_t samples_per_epoch() const {
    return static_cast<std::size_t>(sample_rate_hz) * static_cast<std::size_t>(epoch_seconds);
  }
  double nyquist_hz() const { return sample_rate_hz / 2.0; }

  friend bool operator==(const EpochConfig&, const EpochConfig&) = default;
};

inline void validate(const EpochConfig& cfg) {
  if (cfg.sample_rate_hz <= 0) throw ConfigError("sample_rate_hz", "must be positive");
  if (cfg.epoch_seconds < kMinEpochSeconds || cfg.epoch_seconds > kMaxEpochSeconds)
    throw ConfigError("epoch_seconds", "must be within [2,10] seconds, got " +
                                           std::to_string(cfg.epoch_seconds));
  if (cfg.samples_per_epoch() < 2) throw ConfigError("sample_rate_hz", "epoch must hold at least 2 samples");
  if (!std::isfinite(cfg.band_lo_hz) || !std::isfinite(cfg.band_hi_hz) || cfg.band_lo_hz < 0.0 ||
      cfg.band_lo_hz >= cfg.band_hi_hz || cfg.band_hi_hz > cfg.nyquist_hz())
    throw ConfigError("band", "need 0 <= lo < hi <= Nyquist (" + std::to_string(cfg.nyquist_hz()) + " Hz)");
}

// Fixed-length tumbling window. Invalid epochs (gap or drop inside the window)
// are zero-filled to full length and must not be classified.
struct Epoch {
  std::size_t index{0};
  double start_t{0.0};
  std::vector<double> samples;
  bool valid{true};
};

// One-sided PSD in uV^2/Hz; bin k sits at k * sample_rate_hz / n.
struct Spectrum {
  std::size_t n{0};
  int sample_rate_hz{0};
  std::vector<double> psd;

  double bin_width_hz() const { return static_cast<double>(sample_rate_hz) / static_cast<double>(n); }
  double frequency(std::size_t k) const {
    return static_cast<double>(k) * sample_rate_hz / static_cast<double>(n);
  }
  // sum psd * df over every bin
  double total_power() const {
    double s = 0.0;
    for (double p : psd) s += p;
    return s * bin_width_hz();
  }
};

struct BandPower {
  double lo_hz{0.0};
  double hi_hz{0.0};
  double power{0.0};  // uV^2
};

enum class EyeStatus { Open, Closed };

inline std::string_view to_string(EyeStatus s) { return s == EyeStatus::Open ? "open" : "closed"; }

inline EyeStatus parse_eye_status(std::string_view s) {
  if (s == "open") return EyeStatus::Open;
  if (s == "closed") return EyeStatus::Closed;
  throw ArgumentError("eye status must be 'open' or 'closed', got '" + std::string(s) + "'");
}

// Eye status observed from time t onward (until the next tag).
struct EyeStatusTag {
  double t{0.0};
  EyeStatus status{EyeStatus::Closed};

  friend bool operator==(const EyeStatusTag&, const EyeStatusTag&) = default;
};

}  // namespace vigil
