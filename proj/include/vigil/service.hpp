#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "vigil/pipeline.hpp"
#include "vigil/record.hpp"

namespace vigil {

struct ServiceConfig {
  std::string data_dir{"./data"};
  std::size_t max_live_sessions{16};
  std::size_t subscriber_buffer{1024};
  std::size_t sample_queue{8192};

  // VIGIL_DATA_DIR when set, else ./data
  static std::string default_data_dir();
};

struct StartRequest {
  SourceSpec source{SyntheticSpec{}};
  EpochConfig epoch_cfg;
  CalibrationConfig calib_cfg;
  SessionMode mode{SessionMode::Instructed};
  std::optional<bool> record_raw;  // default: true for network, false otherwise
  std::string label;
};

StartRequest start_request_from_json(const json& body);

// One live-stream consumer. Events are buffered up to a fixed capacity; the
// producer never waits on it. On overflow the subscription is closed with
// reason "overflow" and its buffer dropped.
class Subscription {
 public:
  enum class Poll { Event, Timeout, Closed };

  explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

  // Producer side. Returns false when the subscription is (now) closed.
  bool offer(const SessionEvent& ev);
  void close(const std::string& reason);

  // Consumer side.
  Poll next(SessionEvent& out, std::chrono::milliseconds timeout);
  bool closed() const;
  std::string close_reason() const;
  std::size_t buffered() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<SessionEvent> buf_;
  std::size_t capacity_;
  bool closed_{false};
  std::string reason_;
};

// Single-producer, multi-consumer fan-out.
class Broadcaster {
 public:
  explicit Broadcaster(std::size_t capacity) : capacity_(capacity) {}
  std::shared_ptr<Subscription> subscribe();
  void publish(const SessionEvent& ev);
  void close_all(const std::string& reason);
  std::size_t subscriber_count() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Subscription>> subs_;
  std::size_t capacity_;
};

struct SessionStatus {
  SessionMeta meta;
  SessionPhase phase;
  bool ended{false};
  std::string end_reason;
  double sample_clock{0.0};
  std::size_t verdict_count{0};
  std::size_t skip_count{0};
  std::optional<BaselineProfile> baseline;
};

json to_json(const SessionStatus& s);

struct StopResult {
  SessionStatus status;
  std::size_t verdict_count{0};
};

class Session;

// Session registry and orchestration. All methods are thread-safe.
class Service {
 public:
  explicit Service(ServiceConfig cfg);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  SessionStatus start_session(const StartRequest& req);
  EyeStatusTag record_tag(const std::string& id, EyeStatus status);
  StopResult stop_session(const std::string& id);
  SessionStatus status(const std::string& id) const;
  SessionEvaluation get_report(const std::string& id) const;
  // The first event delivered is a snapshot of the current phase; after that
  // every event from subscription onward, in order.
  std::shared_ptr<Subscription> subscribe(const std::string& id);
  std::vector<SessionStatus> list() const;

  // Blocks until the session has ended or the timeout elapses.
  bool wait_ended(const std::string& id, std::chrono::milliseconds timeout) const;
  std::string record_path(const std::string& id) const;
  void shutdown();

  const ServiceConfig& config() const { return cfg_; }

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  std::string new_session_id();

  ServiceConfig cfg_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t counter_{0};
};

}  // namespace vigil
