#include "vigil/service.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "vigil/bounded_queue.hpp"
#include "vigil/csv_io.hpp"
#include "vigil/network_source.hpp"

namespace vigil {

namespace fs = std::filesystem;

std::string ServiceConfig::default_data_dir() {
  if (const char* env = std::getenv("VIGIL_DATA_DIR"); env && *env) return env;
  return "./data";
}

StartRequest start_request_from_json(const json& body) {
  if (!body.is_object()) throw ConfigError("body", "must be a JSON object");
  StartRequest req;
  req.source = source_from_json(detail::field_required<json>(body, "source", "source"));
  req.epoch_cfg = epoch_config_from_json(detail::field_or(body, "epoch_cfg", json(nullptr), "epoch_cfg"));
  req.calib_cfg = calib_config_from_json(detail::field_or(body, "calib_cfg", json(nullptr), "calib_cfg"));
  req.mode = parse_mode(detail::field_or<std::string>(body, "mode", "instructed", "mode"));
  if (body.contains("record_raw") && !body["record_raw"].is_null())
    req.record_raw = detail::field_required<bool>(body, "record_raw", "record_raw");
  req.label = detail::field_or<std::string>(body, "label", "", "label");
  return req;
}

// ---------------------------------------------------------------- fan-out

bool Subscription::offer(const SessionEvent& ev) {
  std::lock_guard lock(mu_);
  if (closed_) return false;
  if (buf_.size() >= capacity_) {
    buf_.clear();
    closed_ = true;
    reason_ = "overflow";
    cv_.notify_all();
    return false;
  }
  buf_.push_back(ev);
  cv_.notify_all();
  return true;
}

void Subscription::close(const std::string& reason) {
  std::lock_guard lock(mu_);
  if (closed_) return;
  closed_ = true;
  reason_ = reason;
  cv_.notify_all();
}

Subscription::Poll Subscription::next(SessionEvent& out, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || !buf_.empty(); });
  if (!buf_.empty()) {
    out = std::move(buf_.front());
    buf_.pop_front();
    return Poll::Event;
  }
  return closed_ ? Poll::Closed : Poll::Timeout;
}

bool Subscription::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::string Subscription::close_reason() const {
  std::lock_guard lock(mu_);
  return reason_;
}

std::size_t Subscription::buffered() const {
  std::lock_guard lock(mu_);
  return buf_.size();
}

std::shared_ptr<Subscription> Broadcaster::subscribe() {
  auto sub = std::make_shared<Subscription>(capacity_);
  std::lock_guard lock(mu_);
  subs_.push_back(sub);
  return sub;
}

void Broadcaster::publish(const SessionEvent& ev) {
  std::lock_guard lock(mu_);
  std::erase_if(subs_, [&](const auto& s) { return !s->offer(ev); });
}

void Broadcaster::close_all(const std::string& reason) {
  std::lock_guard lock(mu_);
  for (auto& s : subs_) s->close(reason);
  subs_.clear();
}

std::size_t Broadcaster::subscriber_count() const {
  std::lock_guard lock(mu_);
  return subs_.size();
}

json to_json(const SessionStatus& s) {
  json j;
  j["meta"] = to_json(s.meta);
  j["phase"] = phase_json(s.phase);
  j["ended"] = s.ended;
  j["end_reason"] = s.ended ? json(s.end_reason) : json(nullptr);
  j["sample_clock"] = s.sample_clock;
  j["verdict_count"] = s.verdict_count;
  j["skip_count"] = s.skip_count;
  if (s.baseline)
    j["baseline"] = {{"mean_theta_bp", s.baseline->mean_theta_bp},
                     {"scaling", s.baseline->scaling},
                     {"threshold", s.baseline->threshold}};
  else
    j["baseline"] = nullptr;
  return j;
}

// ---------------------------------------------------------------- session

class Session {
 public:
  Session(SessionMeta meta, std::unique_ptr<SampleSource> source, const ServiceConfig& cfg, const std::string& record_path,
          const std::string& raw_path)
      : meta_(std::move(meta)),
        source_(std::move(source)),
        pipeline_(meta_.epoch_cfg, meta_.calib_cfg),
        writer_(record_path, meta_),
        broadcaster_(cfg.subscriber_buffer),
        queue_(cfg.sample_queue) {
    if (meta_.record_raw) {
      raw_.open(raw_path, std::ios::binary | std::ios::trunc);
      if (!raw_) throw std::runtime_error("cannot create raw recording '" + raw_path + "'");
      raw_ << "t,uv\n";
    }
  }

  ~Session() {
    source_->close();
    queue_.close();
    join();
  }

  // Returns the status as of the start event, before any sample is read.
  SessionStatus start() {
    {
      std::lock_guard lock(mu_);
      for (const auto& ev : pipeline_.start()) emit_locked(ev);
    }
    SessionStatus s = status();
    reader_ = std::thread([this] { reader_loop(); });
    worker_ = std::thread([this] { pipeline_loop(); });
    return s;
  }

  EyeStatusTag tag(EyeStatus status) {
    std::lock_guard lock(mu_);
    if (ended_ || stop_requested_) throw ConflictError("session '" + meta_.session_id + "' has ended");
    const EyeStatusTag tag{pipeline_.sample_clock(), status};
    if (last_tag_t_ && !(tag.t > *last_tag_t_))
      throw ConflictError("tag at sample time " + std::to_string(tag.t) + " does not follow the previous tag");
    last_tag_t_ = tag.t;
    emit_locked(TagEvent{tag});
    return tag;
  }

  std::size_t stop() {
    {
      std::lock_guard lock(mu_);
      if (ended_ || stop_requested_) throw ConflictError("session '" + meta_.session_id + "' already ended");
      stop_requested_ = true;
    }
    source_->close();
    queue_.close();
    join();
    std::lock_guard lock(mu_);
    end_locked(end_reason::kRequested);
    return pipeline_.verdict_count();
  }

  SessionStatus status() const {
    std::lock_guard lock(mu_);
    SessionStatus s;
    s.meta = meta_;
    s.phase = pipeline_.phase();
    s.ended = ended_;
    s.end_reason = end_reason_;
    s.sample_clock = pipeline_.sample_clock();
    s.verdict_count = pipeline_.verdict_count();
    s.skip_count = source_->skip_count();
    s.baseline = pipeline_.baseline();
    return s;
  }

  std::shared_ptr<Subscription> subscribe() {
    std::lock_guard lock(mu_);
    auto sub = broadcaster_.subscribe();
    sub->offer(PhaseEvent{pipeline_.phase()});
    if (ended_) {
      sub->offer(EndedEvent{end_reason_, source_->skip_count()});
      sub->close("ended");
    }
    return sub;
  }

  bool ended() const {
    std::lock_guard lock(mu_);
    return ended_;
  }

  bool wait_ended(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    return ended_cv_.wait_for(lock, timeout, [&] { return ended_; });
  }

  void shutdown() {
    try {
      stop();
    } catch (const ConflictError&) {
    }
  }

 private:
  struct Item {
    Sample sample;
    bool gap_before{false};
  };

  void join() {
    if (reader_.joinable() && reader_.get_id() != std::this_thread::get_id()) reader_.join();
    if (worker_.joinable() && worker_.get_id() != std::this_thread::get_id()) worker_.join();
  }

  void reader_loop() {
    bool dropped = false;
    try {
      while (auto s = source_->next()) {
        Item item{*s, dropped};
        if (source_->live()) {
          // live producers are never blocked; a lost sample taints the epoch
          dropped = !queue_.try_push(item);
        } else if (!queue_.push(item)) {
          break;
        }
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      error_ = e.what();
    }
    queue_.close();
  }

  void pipeline_loop() {
    while (auto item = queue_.pop()) {
      std::lock_guard lock(mu_);
      if (ended_) break;
      if (item->gap_before) pipeline_.mark_gap();
      std::vector<SessionEvent> events;
      try {
        events = pipeline_.push(item->sample);
      } catch (const std::exception& e) {
        error_ = e.what();
        source_->close();
        queue_.close();
        break;
      }
      if (raw_.is_open()) write_sample_row(raw_, item->sample);
      for (const auto& ev : events) emit_locked(ev);
    }
    std::lock_guard lock(mu_);
    if (!ended_ && !stop_requested_)
      end_locked(error_.empty() ? std::string(end_reason::kSourceExhausted) : "error: " + error_);
  }

  void emit_locked(const SessionEvent& ev) {
    writer_.write(ev);
    broadcaster_.publish(ev);
  }

  void end_locked(const std::string& reason) {
    if (ended_) return;
    emit_locked(EndedEvent{reason, source_->skip_count()});
    writer_.seal();
    if (raw_.is_open()) raw_.close();
    broadcaster_.close_all("ended");
    end_reason_ = reason;
    ended_ = true;
    ended_cv_.notify_all();
  }

  mutable std::mutex mu_;
  mutable std::condition_variable ended_cv_;
  SessionMeta meta_;
  std::unique_ptr<SampleSource> source_;
  Pipeline pipeline_;
  SessionRecordWriter writer_;
  std::ofstream raw_;
  Broadcaster broadcaster_;
  BoundedQueue<Item> queue_;
  std::thread reader_;
  std::thread worker_;
  bool ended_{false};
  bool stop_requested_{false};
  std::string end_reason_;
  std::string error_;
  std::optional<double> last_tag_t_;
};

// ---------------------------------------------------------------- service

namespace {

std::string utc_now_iso() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)) { fs::create_directories(cfg_.data_dir); }

Service::~Service() { shutdown(); }

void Service::shutdown() {
  std::map<std::string, std::shared_ptr<Session>> sessions;
  {
    std::lock_guard lock(mu_);
    sessions = sessions_;
  }
  for (auto& [id, s] : sessions) s->shutdown();
}

std::string Service::record_path(const std::string& id) const {
  return (fs::path(cfg_.data_dir) / (id + ".jsonl")).string();
}

std::string Service::new_session_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  for (;;) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "%04x", static_cast<unsigned>(rng() & 0xffff));
    std::string id = std::string("s") + stamp + "-" + std::to_string(++counter_) + "-" + suffix;
    if (!sessions_.count(id) && !fs::exists(record_path(id))) return id;
  }
}

std::shared_ptr<Session> Service::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("no session '" + id + "'");
  return it->second;
}

SessionStatus Service::start_session(const StartRequest& req) {
  validate(req.epoch_cfg);
  validate(req.calib_cfg);
  validate(req.source);
  if (const auto* syn = std::get_if<SyntheticSpec>(&req.source); syn && syn->config.sample_rate_hz != req.epoch_cfg.sample_rate_hz)
    throw ConfigError("sample_rate_hz", "synthetic source rate differs from epoch_cfg.sample_rate_hz");

  std::lock_guard lock(mu_);
  std::size_t live = 0;
  for (const auto& [id, s] : sessions_) live += s->ended() ? 0 : 1;
  if (live >= cfg_.max_live_sessions)
    throw CapacityError("capacity reached: " + std::to_string(live) + " live sessions (cap " +
                        std::to_string(cfg_.max_live_sessions) + ")");

  SessionMeta meta;
  meta.session_id = new_session_id();
  meta.created_at = utc_now_iso();
  meta.source = req.source;
  meta.epoch_cfg = req.epoch_cfg;
  meta.calib_cfg = req.calib_cfg;
  meta.mode = req.mode;
  meta.label = req.label;

  std::unique_ptr<SampleSource> source;
  if (const auto* r = std::get_if<ReplaySpec>(&req.source)) {
    try {
      source = std::make_unique<ReplaySource>(*r);
    } catch (const ParseError& e) {
      throw SourceError(r->path + ": " + e.what());
    }
    meta.record_raw = req.record_raw.value_or(false);
  } else if (const auto* s = std::get_if<SyntheticSpec>(&req.source)) {
    source = std::make_unique<SyntheticSource>(*s);
    meta.seed = s->config.seed;
    meta.record_raw = req.record_raw.value_or(false);
  } else {
    const auto& n = std::get<NetworkSpec>(req.source);
    auto net = std::make_unique<NetworkSource>(n.listen_address);
    meta.source = NetworkSpec{net->address()};
    source = std::move(net);
    meta.record_raw = req.record_raw.value_or(true);
  }

  const std::string raw_path = (fs::path(cfg_.data_dir) / (meta.session_id + ".raw.csv")).string();
  auto session = std::make_shared<Session>(meta, std::move(source), cfg_, record_path(meta.session_id), raw_path);
  sessions_[meta.session_id] = session;
  return session->start();
}

EyeStatusTag Service::record_tag(const std::string& id, EyeStatus status) { return find(id)->tag(status); }

StopResult Service::stop_session(const std::string& id) {
  auto s = find(id);
  StopResult r;
  r.verdict_count = s->stop();
  r.status = s->status();
  return r;
}

SessionStatus Service::status(const std::string& id) const { return find(id)->status(); }

SessionEvaluation Service::get_report(const std::string& id) const {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mu_);
    if (auto it = sessions_.find(id); it != sessions_.end()) s = it->second;
  }
  if (s && !s->ended()) throw PreconditionError("session '" + id + "' is still running");
  if (!s && !fs::exists(record_path(id))) throw NotFoundError("no session '" + id + "'");
  const SessionRecord rec = load_session(record_path(id));
  if (!rec.ended()) throw PreconditionError("session '" + id + "' has not ended");
  try {
    return evaluate_session(rec);
  } catch (const LabelingError& e) {
    throw PreconditionError(e.what());
  }
}

std::shared_ptr<Subscription> Service::subscribe(const std::string& id) { return find(id)->subscribe(); }

std::vector<SessionStatus> Service::list() const {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  std::vector<SessionStatus> out;
  for (const auto& s : all) out.push_back(s->status());
  return out;
}

bool Service::wait_ended(const std::string& id, std::chrono::milliseconds timeout) const {
  return find(id)->wait_ended(timeout);
}

}  // namespace vigil
