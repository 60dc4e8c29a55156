#pragma once

#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "vigil/errors.hpp"
#include "vigil/fft.hpp"
#include "vigil/types.hpp"

namespace vigil {

inline std::vector<double> remove_dc(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  if (out.empty()) return out;
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  for (double& v : out) v -= mean;
  return out;
}

inline Epoch remove_dc(const Epoch& epoch) {
  Epoch out = epoch;
  out.samples = remove_dc(std::span<const double>(epoch.samples));
  return out;
}

// Periodic (DFT-even) window coefficients.
inline std::vector<double> window_coefficients(WindowFunction fn, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (fn == WindowFunction::Hann) {
    for (std::size_t j = 0; j < n; ++j)
      w[j] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n));
  }
  return w;
}

// Holds the FFT plan and window for one epoch geometry so the streaming
// pipeline does not rebuild twiddles per epoch. const methods are safe to call
// concurrently.
class SpectralEstimator {
 public:
  explicit SpectralEstimator(const EpochConfig& cfg)
      : cfg_(validated(cfg)),
        n_(cfg.samples_per_epoch()),
        plan_(n_),
        window_(window_coefficients(cfg.window_fn, n_)) {
    double sq = 0.0;
    for (double w : window_) sq += w * w;
    window_power_ = sq / static_cast<double>(n_);
  }

  const EpochConfig& config() const { return cfg_; }

  // psd[k] = c_k |X[k]|^2 / (fs * n * W), c_k = 1 at DC and Nyquist, else 2.
  // DC is removed first, then the window is applied.
  Spectrum periodogram(std::span<const double> samples) const {
    if (samples.size() != n_) throw ArgumentError("epoch length " + std::to_string(samples.size()) +
                                                  " does not match " + std::to_string(n_));
    std::vector<double> x = remove_dc(samples);
    std::vector<cplx> in(n_);
    for (std::size_t j = 0; j < n_; ++j) in[j] = cplx(x[j] * window_[j], 0.0);
    std::vector<cplx> X(n_);
    plan_.forward(in, X);

    Spectrum spec;
    spec.n = n_;
    spec.sample_rate_hz = cfg_.sample_rate_hz;
    spec.psd.resize(n_ / 2 + 1);
    const double norm = static_cast<double>(cfg_.sample_rate_hz) * static_cast<double>(n_) * window_power_;
    for (std::size_t k = 0; k < spec.psd.size(); ++k) {
      const bool edge = (k == 0) || (2 * k == n_);
      spec.psd[k] = (edge ? 1.0 : 2.0) * std::norm(X[k]) / norm;
    }
    return spec;
  }

  Spectrum periodogram(const Epoch& epoch) const { return periodogram(std::span<const double>(epoch.samples)); }

 private:
  static const EpochConfig& validated(const EpochConfig& cfg) {
    validate(cfg);
    return cfg;
  }

  EpochConfig cfg_;
  std::size_t n_;
  FftPlan plan_;
  std::vector<double> window_;
  double window_power_{1.0};
};

inline Spectrum periodogram(const Epoch& epoch, const EpochConfig& cfg) {
  return SpectralEstimator(cfg).periodogram(epoch);
}

// Sum of psd * df over bins with lo <= f_k <= hi, both edges inclusive.
inline BandPower band_power(const Spectrum& spec, double lo_hz, double hi_hz) {
  const double nyquist = spec.sample_rate_hz / 2.0;
  if (!(lo_hz >= 0.0) || !(lo_hz < hi_hz) || !(hi_hz <= nyquist))
    throw ArgumentError("band [" + std::to_string(lo_hz) + ", " + std::to_string(hi_hz) +
                        "] outside [0, Nyquist]");
  // bin frequencies are k*fs/n; the slack absorbs rounding in the edge test only
  constexpr double kEdgeSlack = 1e-9;
  double sum = 0.0;
  for (std::size_t k = 0; k < spec.psd.size(); ++k) {
    const double f = spec.frequency(k);
    if (f + kEdgeSlack >= lo_hz && f - kEdgeSlack <= hi_hz) sum += spec.psd[k];
  }
  return BandPower{lo_hz, hi_hz, sum * spec.bin_width_hz()};
}

inline BandPower theta_power(const Spectrum& spec, const EpochConfig& cfg) {
  return band_power(spec, cfg.band_lo_hz, cfg.band_hi_hz);
}

}  // namespace vigil
