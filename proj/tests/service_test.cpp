#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <functional>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "test_util.hpp"
#include "vigil/analysis.hpp"
#include "vigil/csv_io.hpp"
#include "vigil/http_server.hpp"
#include "vigil/network_source.hpp"
#include "vigil/service.hpp"
#include "vigil/synthetic.hpp"

using namespace vigil;
using namespace vigil::test;
using namespace std::chrono_literals;

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;

namespace {

ServiceConfig config_in(const TempDir& dir) {
  ServiceConfig cfg;
  cfg.data_dir = dir.path().string();
  cfg.sample_queue = 1 << 17;  // producers in these tests outrun the pipeline
  return cfg;
}

StartRequest synthetic_request(double speed = 0.0, SyntheticConfig cfg = presets::vigilance_session()) {
  StartRequest req;
  req.source = SyntheticSpec{std::move(cfg), speed};
  return req;
}

StartRequest network_request() {
  StartRequest req;
  req.source = NetworkSpec{"127.0.0.1:0"};
  req.mode = SessionMode::Natural;
  return req;
}

bool eventually(const std::function<bool()>& pred, std::chrono::milliseconds timeout = 10s) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(2ms);
  }
  return pred();
}

// A device bridge stand-in: one TCP connection sending JSON lines.
class Producer {
 public:
  explicit Producer(const SessionStatus& st) {
    const auto [host, port] = split_host_port(std::get<NetworkSpec>(st.meta.source).listen_address);
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) throw std::runtime_error("connect");
  }
  ~Producer() { close(); }

  void send(std::span<const Sample> samples) {
    std::string text;
    for (const auto& s : samples) text += json{{"t", s.t}, {"uv", s.uv}}.dump() + "\n";
    std::size_t off = 0;
    while (off < text.size()) {
      const auto n = ::send(fd_, text.data() + off, text.size() - off, MSG_NOSIGNAL);
      if (n <= 0) throw std::runtime_error("send");
      off += static_cast<std::size_t>(n);
    }
  }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_{-1};
};

std::vector<SessionEvent> drain(Subscription& sub, std::chrono::milliseconds timeout = 20s) {
  std::vector<SessionEvent> out;
  SessionEvent ev;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    const auto p = sub.next(ev, 50ms);
    if (p == Subscription::Poll::Closed) break;
    if (p == Subscription::Poll::Event) out.push_back(ev);
  }
  return out;
}

std::size_t count_type(const std::vector<SessionEvent>& events, std::size_t index) {
  std::size_t n = 0;
  for (const auto& e : events) n += e.index() == index ? 1 : 0;
  return n;
}

}  // namespace

// ---------------------------------------------------------------- start

TEST(ServiceStart, SyntheticDefaultsBeginCalibrating) {
  TempDir dir;
  Service svc(config_in(dir));
  const auto st = svc.start_session(synthetic_request(1.0));
  EXPECT_FALSE(st.meta.session_id.empty());
  EXPECT_EQ(st.phase, SessionPhase::calibrating(0));
  EXPECT_FALSE(st.ended);
  EXPECT_FALSE(st.meta.created_at.empty());
  EXPECT_TRUE(std::filesystem::exists(svc.record_path(st.meta.session_id)));
}

TEST(ServiceStart, InvertedBandNamesField) {
  TempDir dir;
  Service svc(config_in(dir));
  auto req = synthetic_request();
  req.epoch_cfg.band_lo_hz = 8.0;
  req.epoch_cfg.band_hi_hz = 4.0;
  try {
    svc.start_session(req);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "band");
  }
  EXPECT_TRUE(svc.list().empty());
}

TEST(ServiceStart, SeventeenthSessionHitsCapacity) {
  TempDir dir;
  Service svc(config_in(dir));
  for (int i = 0; i < 16; ++i) svc.start_session(synthetic_request(1.0));
  EXPECT_THROW(svc.start_session(synthetic_request(1.0)), CapacityError);
  // ending one frees a slot
  svc.stop_session(svc.list().front().meta.session_id);
  EXPECT_NO_THROW(svc.start_session(synthetic_request(1.0)));
}

TEST(ServiceStart, MissingReplayFileIsSourceError) {
  TempDir dir;
  Service svc(config_in(dir));
  StartRequest req;
  req.source = ReplaySpec{dir.file("absent.csv"), 0.0};
  EXPECT_THROW(svc.start_session(req), SourceError);
}

TEST(ServiceStart, SyntheticRateMustMatchEpochRate) {
  TempDir dir;
  Service svc(config_in(dir));
  auto req = synthetic_request();
  req.epoch_cfg.sample_rate_hz = 128;
  EXPECT_THROW(svc.start_session(req), ConfigError);
}

// ---------------------------------------------------------------- tags

TEST(ServiceTags, FreshSessionTagAtZero) {
  TempDir dir;
  Service svc(config_in(dir));
  const auto st = svc.start_session(network_request());
  const auto id = st.meta.session_id;
  auto sub = svc.subscribe(id);
  const auto tag = svc.record_tag(id, EyeStatus::Closed);
  EXPECT_EQ(tag.t, 0.0);
  EXPECT_EQ(tag.status, EyeStatus::Closed);
  // echoed on the live stream after the phase snapshot
  SessionEvent ev;
  ASSERT_EQ(sub->next(ev, 1s), Subscription::Poll::Event);
  EXPECT_TRUE(std::holds_alternative<PhaseEvent>(ev));
  ASSERT_EQ(sub->next(ev, 1s), Subscription::Poll::Event);
  ASSERT_TRUE(std::holds_alternative<TagEvent>(ev));
  EXPECT_EQ(std::get<TagEvent>(ev).tag, tag);
  // equal sample time: conflict
  EXPECT_THROW(svc.record_tag(id, EyeStatus::Open), ConflictError);
  svc.stop_session(id);
  EXPECT_EQ(load_session(svc.record_path(id)).tags().size(), 1u);
  EXPECT_THROW(svc.record_tag(id, EyeStatus::Open), ConflictError);
}

TEST(ServiceTags, UnknownSessionIsNotFound) {
  TempDir dir;
  Service svc(config_in(dir));
  EXPECT_THROW(svc.record_tag("nope", EyeStatus::Open), NotFoundError);
  EXPECT_THROW(svc.stop_session("nope"), NotFoundError);
  EXPECT_THROW(svc.subscribe("nope"), NotFoundError);
  EXPECT_THROW(svc.get_report("nope"), NotFoundError);
}

// ---------------------------------------------------------------- lifecycle

TEST(ServiceLifecycle, UnpacedSyntheticRunsToExhaustion) {
  TempDir dir;
  Service svc(config_in(dir));
  const auto id = svc.start_session(synthetic_request()).meta.session_id;
  ASSERT_TRUE(svc.wait_ended(id, 20s));
  const auto st = svc.status(id);
  EXPECT_EQ(st.end_reason, end_reason::kSourceExhausted);
  EXPECT_EQ(st.verdict_count, 30u);
  EXPECT_THROW(svc.stop_session(id), ConflictError);

  const auto rec = load_session(svc.record_path(id));
  EXPECT_EQ(count_type(rec.events, 3), 1u);  // baseline
  EXPECT_EQ(count_type(rec.events, 4), 1u);  // ended
  EXPECT_EQ(rec.verdicts().size(), 30u);
  EXPECT_TRUE(rec.ended());
  EXPECT_THROW(svc.get_report(id), PreconditionError);  // no tags
  EXPECT_FALSE(std::filesystem::exists(dir.file(id + ".raw.csv")));
}

TEST(ServiceLifecycle, StopAfterThirtySixEpochs) {
  TempDir dir;
  Service svc(config_in(dir));
  const auto st = svc.start_session(network_request());
  const auto id = st.meta.session_id;
  Producer producer(st);
  producer.send(synthesize(presets::vigilance_session(4.0, 0.5, 11)));
  ASSERT_TRUE(eventually([&] { return svc.status(id).verdict_count == 30; }));
  const auto r = svc.stop_session(id);
  EXPECT_EQ(r.verdict_count, 30u);
  EXPECT_TRUE(r.status.ended);
  EXPECT_EQ(r.status.end_reason, end_reason::kRequested);
  EXPECT_THROW(svc.stop_session(id), ConflictError);
  const auto rec = load_session(svc.record_path(id));
  ASSERT_TRUE(rec.ended());
  EXPECT_EQ(std::get<EndedEvent>(rec.events.back()).reason, "requested");
}

TEST(ServiceLifecycle, StopDuringCalibration) {
  TempDir dir;
  Service svc(config_in(dir));
  const auto id = svc.start_session(synthetic_request(1.0)).meta.session_id;
  std::this_thread::sleep_for(50ms);
  const auto r = svc.stop_session(id);
  EXPECT_EQ(r.verdict_count, 0u);
  EXPECT_FALSE(r.status.baseline);
  EXPECT_EQ(r.status.phase.kind, SessionPhase::Kind::Calibrating);
  const auto rec = load_session(svc.record_path(id));
  EXPECT_TRUE(rec.ended());
  EXPECT_FALSE(rec.baseline());
}

TEST(ServiceLifecycle, ReportWhileRunningIsPrecondition) {
  TempDir dir;
  Service svc(config_in(dir));
  const auto id = svc.start_session(synthetic_request(1.0)).meta.session_id;
  EXPECT_THROW(svc.get_report(id), PreconditionError);
}

TEST(ServiceLifecycle, TaggedLiveSessionReportsPerfectSeparationAndReplaysIdentically) {
  TempDir dir;
  Service svc(config_in(dir));
  const auto st = svc.start_session(network_request());
  const auto id = st.meta.session_id;
  const auto cfg = presets::vigilance_session(4.0, 0.0, 1);
  const auto samples = synthesize(cfg);
  const auto truth = tags_from_segments(cfg);
  Producer producer(st);

  svc.record_tag(id, truth[0].status);
  const std::size_t block = 30 * 256;
  for (std::size_t b = 0; b * block < samples.size(); ++b) {
    const std::span<const Sample> chunk(samples.data() + b * block, block);
    producer.send(chunk);
    const double last_t = chunk.back().t;
    ASSERT_TRUE(eventually([&] { return svc.status(id).sample_clock == last_t; }));
    if (b + 1 < truth.size()) svc.record_tag(id, truth[b + 1].status);
  }
  producer.close();
  ASSERT_TRUE(svc.wait_ended(id, 10s));
  EXPECT_EQ(svc.status(id).end_reason, end_reason::kSourceExhausted);

  const auto ev = svc.get_report(id);
  EXPECT_EQ(ev.report.n_epochs, 30u);
  EXPECT_EQ(ev.report.accuracy, 1.0);
  EXPECT_EQ(ev.report.mode, SessionMode::Natural);

  // network sessions keep the raw stream; analysing it offline gives the
  // same verdicts the live session produced
  const auto raw = read_recording(dir.file(id + ".raw.csv"));
  ASSERT_EQ(raw.size(), samples.size());
  const auto rec = load_session(svc.record_path(id));
  const auto offline = run_offline(raw, rec.meta, rec.tags());
  EXPECT_EQ(offline.verdicts(), rec.verdicts());
  EXPECT_EQ(offline.tags(), rec.tags());
}

// ---------------------------------------------------------------- live

TEST(ServiceLive, SubscribersSeeIdenticalOrderedStreams) {
  TempDir dir;
  Service svc(config_in(dir));
  const auto st = svc.start_session(network_request());
  auto a = svc.subscribe(st.meta.session_id);
  auto b = svc.subscribe(st.meta.session_id);
  {
    Producer producer(st);
    producer.send(synthesize(presets::vigilance_session(4.0, 0.5, 2)));
  }
  const auto ea = drain(*a), eb = drain(*b);
  EXPECT_EQ(ea, eb);
  ASSERT_FALSE(ea.empty());
  EXPECT_EQ(std::get<PhaseEvent>(ea.front()).phase, SessionPhase::calibrating(0));
  EXPECT_TRUE(std::holds_alternative<EndedEvent>(ea.back()));
  EXPECT_EQ(a->close_reason(), "ended");

  bool baseline_seen = false;
  std::optional<std::size_t> last_index;
  for (const auto& e : ea) {
    if (std::holds_alternative<BaselineEvent>(e)) baseline_seen = true;
    if (const auto* ep = std::get_if<EpochEvent>(&e)) {
      EXPECT_TRUE(baseline_seen);
      if (last_index) {
        EXPECT_GT(ep->verdict.epoch_index, *last_index);
      }
      last_index = ep->verdict.epoch_index;
    }
  }
  EXPECT_EQ(count_type(ea, 1), 30u);
}

TEST(ServiceLive, LateSubscriberAfterEndGetsSnapshotAndEnd) {
  TempDir dir;
  Service svc(config_in(dir));
  const auto id = svc.start_session(synthetic_request()).meta.session_id;
  ASSERT_TRUE(svc.wait_ended(id, 20s));
  auto sub = svc.subscribe(id);
  const auto events = drain(*sub, 2s);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(std::get<PhaseEvent>(events[0]).phase, SessionPhase::monitoring());
  EXPECT_TRUE(std::holds_alternative<EndedEvent>(events[1]));
}

TEST(SubscriptionTest, OverflowAtCapacityDisconnects) {
  EXPECT_EQ(ServiceConfig{}.subscriber_buffer, 1024u);
  Subscription sub(1024);
  for (std::size_t i = 0; i < 1024; ++i) ASSERT_TRUE(sub.offer(EpochEvent{{i, 1.0, 1.0, VigilanceState::Vigilant, true}}));
  EXPECT_FALSE(sub.closed());
  EXPECT_FALSE(sub.offer(PhaseEvent{}));
  EXPECT_TRUE(sub.closed());
  EXPECT_EQ(sub.close_reason(), "overflow");
  EXPECT_EQ(sub.buffered(), 0u);
  SessionEvent ev;
  EXPECT_EQ(sub.next(ev, 10ms), Subscription::Poll::Closed);
}

TEST(ServiceLive, StalledSubscriberIsDroppedWithoutStallingPipeline) {
  TempDir dir;
  auto cfg = config_in(dir);
  cfg.subscriber_buffer = 8;
  Service svc(cfg);
  const auto st = svc.start_session(network_request());
  auto stalled = svc.subscribe(st.meta.session_id);
  auto reader = svc.subscribe(st.meta.session_id);
  std::vector<SessionEvent> seen;
  std::thread consumer([&] {
    SessionEvent ev;
    for (;;) {
      const auto p = reader->next(ev, 50ms);
      if (p == Subscription::Poll::Closed) break;
      if (p == Subscription::Poll::Event) seen.push_back(ev);
    }
  });
  {
    Producer producer(st);
    producer.send(synthesize(presets::vigilance_session(4.0, 0.5, 3)));
  }
  ASSERT_TRUE(svc.wait_ended(st.meta.session_id, 20s));
  consumer.join();
  EXPECT_TRUE(stalled->closed());
  EXPECT_EQ(stalled->close_reason(), "overflow");
  EXPECT_EQ(reader->close_reason(), "ended");
  EXPECT_EQ(count_type(seen, 1), 30u);
  EXPECT_EQ(svc.status(st.meta.session_id).verdict_count, 30u);
}

// ---------------------------------------------------------------- HTTP mapping

TEST(HttpApi, StatusCodes) {
  TempDir dir;
  Service svc(config_in(dir));
  EXPECT_EQ(handle_api(svc, "POST", "/sessions", "{not json").status, 400);
  const auto band = handle_api(
      svc, "POST", "/sessions",
      R"({"source":{"type":"synthetic","preset":"session"},"epoch_cfg":{"band_lo_hz":8,"band_hi_hz":4}})");
  EXPECT_EQ(band.status, 400);
  EXPECT_EQ(band.body["field"], "band");
  EXPECT_TRUE(band.body.contains("error"));
  EXPECT_EQ(handle_api(svc, "POST", "/sessions", R"({"source":{"type":"carrier-pigeon"}})").status, 400);

  const auto created =
      handle_api(svc, "POST", "/sessions", R"({"source":{"type":"synthetic","preset":"session","speed":1}})");
  ASSERT_EQ(created.status, 201);
  const std::string id = created.body["meta"]["session_id"];
  EXPECT_EQ(created.body["phase"]["phase"], "calibrating");
  EXPECT_EQ(created.body["phase"]["completed"], 0);

  EXPECT_EQ(handle_api(svc, "GET", "/sessions/" + id, "").status, 200);
  EXPECT_EQ(handle_api(svc, "GET", "/sessions", "").body.size(), 1u);
  EXPECT_EQ(handle_api(svc, "GET", "/sessions/zzz", "").status, 404);
  EXPECT_EQ(handle_api(svc, "POST", "/sessions/zzz/tags", R"({"status":"open"})").status, 404);
  EXPECT_EQ(handle_api(svc, "POST", "/sessions/" + id + "/tags", R"({"status":"sideways"})").status, 400);
  const auto tag = handle_api(svc, "POST", "/sessions/" + id + "/tags", R"({"status":"closed"})");
  EXPECT_EQ(tag.status, 200);
  EXPECT_EQ(tag.body["type"], "tag");
  EXPECT_EQ(handle_api(svc, "GET", "/sessions/" + id + "/report", "").status, 409);
  const auto stop = handle_api(svc, "POST", "/sessions/" + id + "/stop", "");
  EXPECT_EQ(stop.status, 200);
  EXPECT_EQ(stop.body["ended"], true);
  EXPECT_EQ(stop.body["end_reason"], "requested");
  EXPECT_EQ(handle_api(svc, "POST", "/sessions/" + id + "/stop", "").status, 409);
  EXPECT_EQ(handle_api(svc, "GET", "/elsewhere", "").status, 404);
}

// ---------------------------------------------------------------- over the wire

namespace {

struct HttpReply {
  int status;
  json body;
};

HttpReply http_call(unsigned short port, http::verb verb, const std::string& target, const std::string& body = {}) {
  asio::io_context ioc;
  asio::ip::tcp::socket sock(ioc);
  sock.connect({asio::ip::make_address("127.0.0.1"), port});
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  req.set(http::field::content_type, "application/json");
  req.body() = body;
  req.prepare_payload();
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  beast::error_code ec;
  sock.shutdown(asio::ip::tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body().empty() ? json() : json::parse(res.body())};
}

}  // namespace

TEST(HttpServerTest, ControlAndLiveStreamOverSockets) {
  TempDir dir;
  Service svc(config_in(dir));
  HttpServer server(svc, "127.0.0.1:0");
  server.start();
  const auto port = server.port();

  const auto created = http_call(port, http::verb::post, "/sessions",
                                 R"({"source":{"type":"network","listen":"127.0.0.1:0"},"mode":"natural"})");
  ASSERT_EQ(created.status, 201);
  const std::string id = created.body["meta"]["session_id"];
  const auto st = svc.status(id);

  asio::io_context ioc;
  websocket::stream<asio::ip::tcp::socket> ws(ioc);
  ws.next_layer().connect({asio::ip::make_address("127.0.0.1"), port});
  ws.handshake("127.0.0.1", "/sessions/" + id + "/live");

  EXPECT_EQ(http_call(port, http::verb::post, "/sessions/" + id + "/tags", R"({"status":"closed"})").status, 200);
  {
    Producer producer(st);
    producer.send(synthesize(presets::vigilance_session(4.0, 0.0, 1)));
  }

  std::vector<json> frames;
  beast::flat_buffer buf;
  for (;;) {
    beast::error_code ec;
    ws.read(buf, ec);
    if (ec) {
      EXPECT_EQ(ec, websocket::error::closed);
      break;
    }
    EXPECT_TRUE(ws.got_text());
    frames.push_back(json::parse(beast::buffers_to_string(buf.data())));
    buf.consume(buf.size());
  }
  EXPECT_EQ(ws.reason().code, websocket::close_code::normal);

  ASSERT_GE(frames.size(), 3u);
  EXPECT_EQ(frames.front(), json::parse(R"({"type":"phase","phase":"calibrating","completed":0})"));
  EXPECT_EQ(frames[1]["type"], "tag");
  EXPECT_EQ(frames.back()["type"], "ended");
  std::size_t epochs = 0;
  for (const auto& f : frames) {
    if (f["type"] != "epoch") continue;
    ++epochs;
    std::vector<std::string> keys;
    for (auto it = f.begin(); it != f.end(); ++it) keys.push_back(it.key());
    EXPECT_EQ(keys, (std::vector<std::string>{"type", "index", "theta_bp", "threshold", "state", "valid"}));
    EXPECT_TRUE(f["index"].is_number_integer());
    EXPECT_TRUE(f["state"] == "vigilant" || f["state"] == "nonvigilant" || f["state"].is_null());
  }
  EXPECT_EQ(epochs, 30u);

  const auto report = http_call(port, http::verb::get, "/sessions/" + id + "/report");
  ASSERT_EQ(report.status, 200);
  EXPECT_EQ(report.body["report"]["n_epochs"], 30);
  // all epochs are labeled closed by the single tag; the open segments read vigilant
  EXPECT_EQ(report.body["confusion"]["counts"]["open"]["closed"], 18);
  EXPECT_EQ(report.body["confusion"]["normalized"]["closed"]["closed"], 12.0 / 30.0);

  // unknown live stream is refused before the upgrade
  websocket::stream<asio::ip::tcp::socket> bad(ioc);
  bad.next_layer().connect({asio::ip::make_address("127.0.0.1"), port});
  beast::error_code ec;
  bad.handshake("127.0.0.1", "/sessions/unknown/live", ec);
  EXPECT_TRUE(ec);

  server.stop();
}

TEST(ServiceConfigTest, DataDirFromEnvironment) {
  ::setenv("VIGIL_DATA_DIR", "/tmp/vigil-env-check", 1);
  EXPECT_EQ(ServiceConfig::default_data_dir(), "/tmp/vigil-env-check");
  ::unsetenv("VIGIL_DATA_DIR");
  EXPECT_EQ(ServiceConfig::default_data_dir(), "./data");
}
