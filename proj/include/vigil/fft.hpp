#pragma once

#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "vigil/errors.hpp"

namespace vigil {

using cplx = std::complex<double>;

// Mixed-radix decimation-in-time DFT for any length n >= 1.
//
// The length is split into its prime factors; each stage combines p
// interleaved sub-transforms with twiddles taken from one table of n-th roots
// of unity. Prime lengths degrade to the direct O(n^2) sum, which is still
// exact to rounding.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n), twiddle_(n) {
    if (n == 0) throw ArgumentError("dft length must be positive");
    for (std::size_t e = 0; e < n; ++e) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(e) / static_cast<double>(n);
      twiddle_[e] = cplx(std::cos(angle), std::sin(angle));
    }
    std::size_t m = n;
    while (m > 1) {
      std::size_t p = smallest_factor(m);
      factors_.push_back(p);
      m /= p;
    }
  }

  std::size_t size() const { return n_; }

  // out[k] = sum_j in[j] * exp(-2 pi i jk / n)
  void forward(std::span<const cplx> in, std::span<cplx> out) const {
    if (in.size() != n_ || out.size() != n_) throw ArgumentError("dft buffer size mismatch");
    if (n_ == 1) {
      out[0] = in[0];
      return;
    }
    transform(in.data(), 1, n_, 0, out.data());
  }

  std::vector<cplx> forward(std::span<const double> x) const {
    std::vector<cplx> in(x.begin(), x.end());
    std::vector<cplx> out(n_);
    forward(in, out);
    return out;
  }

  // Inverse with 1/n normalisation, via conjugation of the forward transform.
  std::vector<cplx> inverse(std::span<const cplx> X) const {
    std::vector<cplx> in(X.size());
    for (std::size_t k = 0; k < X.size(); ++k) in[k] = std::conj(X[k]);
    std::vector<cplx> out(n_);
    forward(in, out);
    const double scale = 1.0 / static_cast<double>(n_);
    for (auto& v : out) v = std::conj(v) * scale;
    return out;
  }

 private:
  static std::size_t smallest_factor(std::size_t m) {
    if (m % 4 == 0) return 4;
    if (m % 2 == 0) return 2;
    for (std::size_t p = 3; p * p <= m; p += 2)
      if (m % p == 0) return p;
    return m;
  }

  // Transform of length len over in[0], in[stride], ..., written contiguously
  // to out[0..len). depth indexes factors_.
  void transform(const cplx* in, std::size_t stride, std::size_t len, std::size_t depth, cplx* out) const {
    if (len == 1) {
      out[0] = in[0];
      return;
    }
    const std::size_t p = factors_[depth];
    const std::size_t m = len / p;
    for (std::size_t r = 0; r < p; ++r) transform(in + r * stride, stride * p, m, depth + 1, out + r * m);

    // Root step: twiddle for exponent e at this length is twiddle_[e * n/len].
    const std::size_t step = n_ / len;
    if (p == 2) {
      for (std::size_t k = 0; k < m; ++k) {
        const cplx a = out[k];
        const cplx b = out[k + m] * twiddle_[k * step];
        out[k] = a + b;
        out[k + m] = a - b;
      }
      return;
    }
    if (p == 4) {
      for (std::size_t k = 0; k < m; ++k) {
        const cplx a0 = out[k];
        const cplx a1 = out[k + m] * twiddle_[k * step];
        const cplx a2 = out[k + 2 * m] * twiddle_[2 * k * step];
        const cplx a3 = out[k + 3 * m] * twiddle_[3 * k * step];
        const cplx s02 = a0 + a2, d02 = a0 - a2;
        const cplx s13 = a1 + a3, d13 = a1 - a3;
        const cplx jd13(d13.imag(), -d13.real());  // -i * d13
        out[k] = s02 + s13;
        out[k + m] = d02 + jd13;
        out[k + 2 * m] = s02 - s13;
        out[k + 3 * m] = d02 - jd13;
      }
      return;
    }
    // generic radix p
    std::vector<cplx> tmp(p);
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t q = 0; q < p; ++q) {
        const std::size_t kk = k + q * m;
        cplx acc = out[k];
        for (std::size_t r = 1; r < p; ++r) acc += out[k + r * m] * twiddle_[((r * kk) % len) * step];
        tmp[q] = acc;
      }
      for (std::size_t q = 0; q < p; ++q) out[k + q * m] = tmp[q];
    }
  }

  std::size_t n_;
  std::vector<cplx> twiddle_;
  std::vector<std::size_t> factors_;
};

inline std::vector<cplx> dft(std::span<const double> x) {
  if (x.size() < 2) throw ArgumentError("dft needs at least 2 samples");
  return FftPlan(x.size()).forward(x);
}

inline std::vector<cplx> idft(std::span<const cplx> X) {
  if (X.size() < 2) throw ArgumentError("idft needs at least 2 bins");
  return FftPlan(X.size()).inverse(X);
}

}  // namespace vigil
