#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vigil/errors.hpp"
#include "vigil/types.hpp"
#include "vigil/vigilance.hpp"

namespace vigil {

enum class SessionMode { Instructed, Natural };

inline std::string_view to_string(SessionMode m) { return m == SessionMode::Instructed ? "instructed" : "natural"; }

inline SessionMode parse_mode(std::string_view s) {
  if (s == "instructed") return SessionMode::Instructed;
  if (s == "natural") return SessionMode::Natural;
  throw ConfigError("mode", "expected instructed or natural, got '" + std::string(s) + "'");
}

struct LabeledEpoch {
  std::size_t epoch_index{0};
  EyeStatus actual{EyeStatus::Closed};
  VigilanceState predicted{VigilanceState::NonVigilant};

  friend bool operator==(const LabeledEpoch&, const LabeledEpoch&) = default;
};

// Open eyes are the vigilant ground truth, closed eyes the non-vigilant one.
inline bool is_correct(const LabeledEpoch& e) {
  return (e.actual == EyeStatus::Open) == (e.predicted == VigilanceState::Vigilant);
}

// Labels every valid, classified verdict with the eye status covering the
// majority of its span [k*T, (k+1)*T). On an exact tie the status in force
// just before the epoch midpoint wins.
inline std::vector<LabeledEpoch> label_epochs(std::span<const EyeStatusTag> tags,
                                              std::span<const EpochVerdict> verdicts, const EpochConfig& cfg) {
  for (std::size_t i = 1; i < tags.size(); ++i)
    if (!(tags[i].t > tags[i - 1].t)) throw LabelingError("tag times must be strictly increasing");

  std::vector<LabeledEpoch> out;
  const double len = static_cast<double>(cfg.epoch_seconds);
  constexpr double kTieSlack = 1e-9;
  for (const auto& v : verdicts) {
    if (!v.valid || !v.state) continue;
    const double start = static_cast<double>(v.epoch_index) * len;
    const double end = start + len;
    if (tags.empty() || tags.front().t > start)
      throw LabelingError("no eye-status tag at or before epoch " + std::to_string(v.epoch_index) + " (t=" +
                          std::to_string(start) + ")");
    double open = 0.0, closed = 0.0;
    for (std::size_t i = 0; i < tags.size(); ++i) {
      const double a = std::max(start, tags[i].t);
      const double b = std::min(end, i + 1 < tags.size() ? tags[i + 1].t : std::numeric_limits<double>::infinity());
      if (b <= a) continue;
      (tags[i].status == EyeStatus::Open ? open : closed) += b - a;
    }
    EyeStatus actual;
    if (std::abs(open - closed) <= kTieSlack) {
      const double mid = start + len / 2.0;
      actual = tags.front().status;
      for (const auto& tag : tags)
        if (tag.t < mid) actual = tag.status;
    } else {
      actual = open > closed ? EyeStatus::Open : EyeStatus::Closed;
    }
    out.push_back({v.epoch_index, actual, *v.state});
  }
  return out;
}

inline double accuracy(std::span<const LabeledEpoch> labeled) {
  if (labeled.empty()) throw ArgumentError("accuracy of an empty epoch list");
  std::size_t correct = 0;
  for (const auto& e : labeled) correct += is_correct(e) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labeled.size());
}

// counts[estimated][actual]; index 0 = Closed, 1 = Open. normalized divides
// each actual-class column by its total, so normalized[Open][Closed] is
// P(estimated open | actually closed).
struct ConfusionMatrix {
  static constexpr std::size_t kClosed = 0;
  static constexpr std::size_t kOpen = 1;

  std::string label;
  std::array<std::array<std::size_t, 2>, 2> counts{};
  std::array<std::array<double, 2>, 2> normalized{};

  std::size_t actual_total(std::size_t actual) const { return counts[kClosed][actual] + counts[kOpen][actual]; }
  std::size_t correct() const { return counts[kClosed][kClosed] + counts[kOpen][kOpen]; }
  std::size_t total() const { return actual_total(kClosed) + actual_total(kOpen); }
};

inline ConfusionMatrix confusion(std::span<const LabeledEpoch> labeled, std::string label = {}) {
  ConfusionMatrix m;
  m.label = std::move(label);
  for (const auto& e : labeled) {
    const std::size_t est = e.predicted == VigilanceState::Vigilant ? ConfusionMatrix::kOpen : ConfusionMatrix::kClosed;
    const std::size_t act = e.actual == EyeStatus::Open ? ConfusionMatrix::kOpen : ConfusionMatrix::kClosed;
    ++m.counts[est][act];
  }
  for (std::size_t act = 0; act < 2; ++act) {
    const std::size_t total = m.actual_total(act);
    for (std::size_t est = 0; est < 2; ++est)
      m.normalized[est][act] = total ? static_cast<double>(m.counts[est][act]) / static_cast<double>(total) : 0.0;
  }
  return m;
}

struct SessionReport {
  std::string session_id;
  SessionMode mode{SessionMode::Instructed};
  std::size_t n_epochs{0};
  std::size_t n_correct{0};
  double accuracy{0.0};
};

inline SessionReport make_report(std::string session_id, SessionMode mode, std::span<const LabeledEpoch> labeled) {
  SessionReport r;
  r.session_id = std::move(session_id);
  r.mode = mode;
  r.n_epochs = labeled.size();
  for (const auto& e : labeled) r.n_correct += is_correct(e) ? 1 : 0;
  r.accuracy = vigil::accuracy(labeled);
  return r;
}

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw ArgumentError("mean of an empty list");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// n-1 denominator
inline double sample_std_of(std::span<const double> xs) {
  if (xs.size() < 2) throw DegenerateError("standard deviation undefined for fewer than 2 values");
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

struct Summary {
  double mean{0.0};
  double sample_std{0.0};
};

inline Summary summarize(std::span<const double> xs) { return {mean_of(xs), sample_std_of(xs)}; }

// Regularized incomplete beta I_x(a, b), continued fraction evaluated with
// the modified Lentz method; the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) keeps
// the fraction in its fast-converging region.
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ArgumentError("incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front) / a;

  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  double f = 1.0, c = 1.0, d = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const int m = i / 2;
    double numerator;
    if (i == 0) {
      numerator = 1.0;
    } else if (i % 2 == 0) {
      numerator = (m * (b - m) * x) / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
    } else {
      numerator = -((a + m) * (a + b + m) * x) / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
    }
    d = 1.0 + numerator * d;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    c = 1.0 + numerator / c;
    if (std::abs(c) < kTiny) c = kTiny;
    const double delta = c * d;
    f *= delta;
    if (std::abs(1.0 - delta) < kEps) return front * (f - 1.0);
  }
  throw DegenerateError("incomplete beta failed to converge");
}

// Two-tailed P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double student_t_two_tailed(double t, double df) {
  if (!(df > 0.0)) throw ArgumentError("degrees of freedom must be positive");
  if (!std::isfinite(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct TTestResult {
  double t_statistic{0.0};
  int df{0};
  double p_two_tailed{1.0};
};

// Paired test on d = b - a. The differences are sorted before summing so that
// reordering the pairs cannot change a single bit of the result.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("paired t-test needs equal-length samples");
  if (a.size() < 2) throw ArgumentError("paired t-test needs at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = b[i] - a[i];
  std::sort(d.begin(), d.end());
  const double n = static_cast<double>(d.size());
  const double mean = mean_of(d);
  const double sd = sample_std_of(d);
  if (sd == 0.0) throw DegenerateError("paired differences have zero variance");
  TTestResult r;
  r.t_statistic = mean / (sd / std::sqrt(n));
  r.df = static_cast<int>(d.size()) - 1;
  r.p_two_tailed = student_t_two_tailed(r.t_statistic, r.df);
  return r;
}

}  // namespace vigil
