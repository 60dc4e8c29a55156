#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vigil/errors.hpp"
#include "vigil/types.hpp"

namespace vigil {

struct SineComponent {
  double freq_hz{6.0};
  double amplitude_uv{1.0};
  double phase_rad{0.0};

  friend bool operator==(const SineComponent&, const SineComponent&) = default;
};

struct Segment {
  double duration_s{1.0};
  std::vector<SineComponent> components;
  double noise_sigma_uv{0.0};
  std::optional<EyeStatus> eyes;  // ground truth for generated tag files

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct SyntheticConfig {
  int sample_rate_hz{256};
  std::uint64_t seed{0};
  std::vector<Segment> segments;

  friend bool operator==(const SyntheticConfig&, const SyntheticConfig&) = default;
};

inline void validate(const SyntheticConfig& cfg) {
  if (cfg.sample_rate_hz <= 0) throw ConfigError("sample_rate_hz", "must be positive");
  double total = 0.0;
  for (const auto& seg : cfg.segments) {
    if (!(seg.duration_s > 0.0) || !std::isfinite(seg.duration_s))
      throw ConfigError("segments.duration_s", "must be positive");
    if (!(seg.noise_sigma_uv >= 0.0) || !std::isfinite(seg.noise_sigma_uv))
      throw ConfigError("segments.noise_sigma_uv", "must be >= 0");
    for (const auto& c : seg.components) {
      if (!(c.freq_hz >= 0.0) || !(c.freq_hz < cfg.sample_rate_hz / 2.0))
        throw ConfigError("segments.components.freq_hz", "must lie in [0, sample_rate/2)");
      if (!std::isfinite(c.amplitude_uv) || !std::isfinite(c.phase_rad))
        throw ConfigError("segments.components", "amplitude and phase must be finite");
    }
    total += seg.duration_s;
  }
  if (!(total > 0.0)) throw ConfigError("segments", "total duration must be positive");
}

// Gaussian draws for the synthetic generator. The algorithm is fixed so a
// given seed reproduces the same stream on any conforming standard library:
// std::mt19937_64 (fully specified by the standard), 53-bit uniforms taken
// from the top bits, and the basic Box-Muller transform using both outputs
// of each pair (cosine branch first).
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (spare_) {
      double v = *spare_;
      spare_.reset();
      return v;
    }
    constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * kScale;  // (0, 1]
    const double u2 = static_cast<double>(engine_() >> 11) * kScale;          // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

// Lazily produces sample j at t = j / fs with
//   uv = sum_c a_c sin(2 pi f_c t + phi_c) + sigma * z_j
// where the components and sigma belong to the segment containing sample j.
// Segment lengths are round(duration_s * fs) samples.
class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(SyntheticConfig cfg) : cfg_(std::move(cfg)), noise_(cfg_.seed) {
    validate(cfg_);
    std::size_t end = 0;
    for (const auto& seg : cfg_.segments) {
      end += static_cast<std::size_t>(std::llround(seg.duration_s * cfg_.sample_rate_hz));
      segment_end_.push_back(end);
    }
  }

  std::optional<Sample> next() {
    while (segment_ < segment_end_.size() && index_ >= segment_end_[segment_]) ++segment_;
    if (segment_ >= segment_end_.size()) return std::nullopt;
    const Segment& seg = cfg_.segments[segment_];
    const double t = static_cast<double>(index_) / cfg_.sample_rate_hz;
    double uv = 0.0;
    for (const auto& c : seg.components)
      uv += c.amplitude_uv * std::sin(2.0 * std::numbers::pi * c.freq_hz * t + c.phase_rad);
    const double z = noise_.next();
    uv += seg.noise_sigma_uv * z;
    ++index_;
    return Sample{t, uv};
  }

  std::size_t total_samples() const { return segment_end_.empty() ? 0 : segment_end_.back(); }

 private:
  SyntheticConfig cfg_;
  GaussianSource noise_;
  std::vector<std::size_t> segment_end_;
  std::size_t segment_{0};
  std::size_t index_{0};
};

inline std::vector<Sample> synthesize(const SyntheticConfig& cfg) {
  SyntheticGenerator gen(cfg);
  std::vector<Sample> out;
  out.reserve(gen.total_samples());
  while (auto s = gen.next()) out.push_back(*s);
  return out;
}

// Eye-status tags at every segment start whose label differs from the
// previous one. Unlabelled segments produce no tag.
inline std::vector<EyeStatusTag> tags_from_segments(const SyntheticConfig& cfg) {
  std::vector<EyeStatusTag> tags;
  std::size_t start = 0;
  for (const auto& seg : cfg.segments) {
    if (seg.eyes && (tags.empty() || tags.back().status != *seg.eyes))
      tags.push_back({static_cast<double>(start) / cfg.sample_rate_hz, *seg.eyes});
    start += static_cast<std::size_t>(std::llround(seg.duration_s * cfg.sample_rate_hz));
  }
  return tags;
}

// Verification presets. "Closed" carries theta amplitude a; "open" carries 2a
// so that open-eye theta power is four times the closed baseline. A 10 Hz
// component sits outside the theta band in both. These are scaffolding for
// exercising the pipeline, not physiological models.
namespace presets {

inline constexpr double kThetaHz = 6.0;
inline constexpr double kAlphaHz = 10.0;
inline constexpr double kDefaultAmplitude = 4.0;
inline constexpr double kDefaultSigma = 1.0;

inline Segment eyes_closed(double duration_s, double a, double sigma) {
  return Segment{duration_s, {{kThetaHz, a, 0.0}, {kAlphaHz, a, 0.5}}, sigma, EyeStatus::Closed};
}

inline Segment eyes_open(double duration_s, double a, double sigma) {
  return Segment{duration_s, {{kThetaHz, 2.0 * a, 0.0}, {kAlphaHz, 0.5 * a, 0.5}}, sigma, EyeStatus::Open};
}

// Closed first (the baseline), then alternating open/closed blocks.
inline SyntheticConfig vigilance_session(double a = kDefaultAmplitude, double sigma = kDefaultSigma,
                                         std::uint64_t seed = 1, double total_s = 180.0, double block_s = 30.0) {
  SyntheticConfig cfg;
  cfg.seed = seed;
  bool closed = true;
  for (double start = 0.0; start + 1e-9 < total_s; start += block_s) {
    const double dur = std::min(block_s, total_s - start);
    cfg.segments.push_back(closed ? eyes_closed(dur, a, sigma) : eyes_open(dur, a, sigma));
    closed = !closed;
  }
  return cfg;
}

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> n{"session", "closed", "open"};
  return n;
}

inline SyntheticConfig by_name(const std::string& name, double a = kDefaultAmplitude,
                               double sigma = kDefaultSigma, std::uint64_t seed = 1) {
  if (name == "session") return vigilance_session(a, sigma, seed);
  SyntheticConfig cfg;
  cfg.seed = seed;
  if (name == "closed") {
    cfg.segments.push_back(eyes_closed(30.0, a, sigma));
    return cfg;
  }
  if (name == "open") {
    cfg.segments.push_back(eyes_open(30.0, a, sigma));
    return cfg;
  }
  throw ConfigError("preset", "unknown preset '" + name + "' (session, closed, open)");
}

}  // namespace presets

}  // namespace vigil
