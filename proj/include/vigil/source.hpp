#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>

#include "vigil/csv_io.hpp"
#include "vigil/synthetic.hpp"
#include "vigil/types.hpp"

namespace vigil {

struct ReplaySpec {
  std::string path;
  double speed{0.0};  // 0 = unpaced
};

struct SyntheticSpec {
  SyntheticConfig config;
  double speed{0.0};
};

struct NetworkSpec {
  std::string listen_address{"127.0.0.1:0"};
};

using SourceSpec = std::variant<ReplaySpec, SyntheticSpec, NetworkSpec>;

inline void validate(const SourceSpec& spec) {
  if (const auto* r = std::get_if<ReplaySpec>(&spec)) {
    if (!(r->speed >= 0.0)) throw ConfigError("source.speed", "must be >= 0");
  } else if (const auto* s = std::get_if<SyntheticSpec>(&spec)) {
    if (!(s->speed >= 0.0)) throw ConfigError("source.speed", "must be >= 0");
    validate(s->config);
  }
}

// A single-producer sample stream. next() blocks until a sample is available
// and returns nullopt at end of stream. close() may be called from another
// thread and makes a blocked next() return promptly.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::optional<Sample> next() = 0;
  virtual void close() {}
  // Live sources drop on overflow instead of blocking.
  virtual bool live() const { return false; }
  virtual std::size_t skip_count() const { return 0; }
};

// Sleeps so that sample time t is released at start + t / speed.
class Pacer {
 public:
  explicit Pacer(double speed) : speed_(speed) {}

  // false if interrupted
  bool wait_for(double t) {
    if (speed_ <= 0.0) return !stopped_.load();
    if (!start_) start_ = std::chrono::steady_clock::now();
    const auto due = *start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                   std::chrono::duration<double>(t / speed_));
    std::unique_lock lock(mu_);
    cv_.wait_until(lock, due, [&] { return stopped_.load(); });
    return !stopped_.load();
  }

  void stop() {
    std::lock_guard lock(mu_);
    stopped_ = true;
    cv_.notify_all();
  }

 private:
  double speed_;
  std::optional<std::chrono::steady_clock::time_point> start_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::atomic<bool> stopped_{false};
};

class ReplaySource : public SampleSource {
 public:
  explicit ReplaySource(const ReplaySpec& spec) : reader_(spec.path), pacer_(spec.speed) {}

  std::optional<Sample> next() override {
    auto s = reader_.next();
    if (!s || !pacer_.wait_for(s->t)) return std::nullopt;
    return s;
  }
  void close() override { pacer_.stop(); }

 private:
  CsvSampleReader reader_;
  Pacer pacer_;
};

class SyntheticSource : public SampleSource {
 public:
  explicit SyntheticSource(const SyntheticSpec& spec) : gen_(spec.config), pacer_(spec.speed) {}

  std::optional<Sample> next() override {
    auto s = gen_.next();
    if (!s || !pacer_.wait_for(s->t)) return std::nullopt;
    return s;
  }
  void close() override { pacer_.stop(); }

 private:
  SyntheticGenerator gen_;
  Pacer pacer_;
};

// In-memory source, mostly for tests and the offline path.
class VectorSource : public SampleSource {
 public:
  explicit VectorSource(std::vector<Sample> samples) : samples_(std::move(samples)) {}
  std::optional<Sample> next() override {
    if (closed_ || pos_ >= samples_.size()) return std::nullopt;
    return samples_[pos_++];
  }
  void close() override { closed_ = true; }

 private:
  std::vector<Sample> samples_;
  std::size_t pos_{0};
  std::atomic<bool> closed_{false};
};

}  // namespace vigil
