#include "vigil/http_server.hpp"

#include <sys/socket.h>

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "vigil/network_source.hpp"

namespace vigil {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

std::vector<std::string> split_path(const std::string& target) {
  std::string path = target.substr(0, target.find('?'));
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t j = path.find('/', i);
    const std::string seg = path.substr(i, j == std::string::npos ? std::string::npos : j - i);
    if (!seg.empty()) parts.push_back(seg);
    if (j == std::string::npos) break;
    i = j;
  }
  return parts;
}

ApiResponse error(int status, const std::string& msg) { return {status, json{{"error", msg}}}; }

json report_json(const SessionEvaluation& ev) {
  const auto& r = ev.report;
  const auto& m = ev.matrix;
  json counts = json::object();
  json normalized = json::object();
  const char* names[2] = {"closed", "open"};
  for (std::size_t est = 0; est < 2; ++est) {
    json c = json::object(), n = json::object();
    for (std::size_t act = 0; act < 2; ++act) {
      c[names[act]] = m.counts[est][act];
      n[names[act]] = m.normalized[est][act];
    }
    counts[names[est]] = c;
    normalized[names[est]] = n;
  }
  return json{{"report",
               {{"session_id", r.session_id},
                {"mode", std::string(to_string(r.mode))},
                {"n_epochs", r.n_epochs},
                {"n_correct", r.n_correct},
                {"accuracy", r.accuracy}}},
              {"confusion", {{"layout", "counts[estimated][actual]"}, {"counts", counts}, {"normalized", normalized}}}};
}

}  // namespace

ApiResponse handle_api(Service& service, const std::string& method, const std::string& target, const std::string& body) {
  const auto parts = split_path(target);
  try {
    if (parts.empty() || parts[0] != "sessions") return error(404, "no route for " + target);
    if (parts.size() == 1) {
      if (method == "POST") {
        json j;
        try {
          j = json::parse(body);
        } catch (const json::exception& e) {
          return error(400, std::string("body: invalid JSON: ") + e.what());
        }
        return {201, to_json(service.start_session(start_request_from_json(j)))};
      }
      if (method == "GET") {
        json arr = json::array();
        for (const auto& s : service.list()) arr.push_back(to_json(s));
        return {200, arr};
      }
      return error(405, "method not allowed");
    }
    const std::string& id = parts[1];
    if (parts.size() == 2 && method == "GET") return {200, to_json(service.status(id))};
    if (parts.size() == 3) {
      const std::string& action = parts[2];
      if (action == "tags" && method == "POST") {
        json j;
        try {
          j = json::parse(body);
        } catch (const json::exception& e) {
          return error(400, std::string("body: invalid JSON: ") + e.what());
        }
        const auto status = parse_eye_status(detail::field_required<std::string>(j, "status", "status"));
        const auto tag = service.record_tag(id, status);
        return {200, to_json(SessionEvent{TagEvent{tag}})};
      }
      if (action == "stop" && method == "POST") {
        const auto r = service.stop_session(id);
        json j = to_json(r.status);
        j["verdict_count"] = r.verdict_count;
        return {200, j};
      }
      if (action == "report" && method == "GET") return {200, report_json(service.get_report(id))};
    }
    return error(404, "no route for " + method + " " + target);
  } catch (const NotFoundError& e) {
    return error(404, e.what());
  } catch (const ConflictError& e) {
    return error(409, e.what());
  } catch (const ConfigError& e) {
    auto r = error(400, e.what());
    r.body["field"] = e.field();
    return r;
  } catch (const ArgumentError& e) {
    return error(400, e.what());
  } catch (const SourceError& e) {
    return error(400, e.what());
  } catch (const ParseError& e) {
    return error(400, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

struct HttpServer::Impl {
  Service& service;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread accept_thread;
  std::atomic<bool> stopping{false};

  std::mutex conn_mu;
  std::condition_variable conn_cv;
  std::multiset<int> conn_fds;  // a closed fd number may be reused before erase
  std::size_t active{0};

  explicit Impl(Service& s) : service(s) {}

  void do_accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket sock) {
      if (ec || stopping) return;
      {
        std::lock_guard lock(conn_mu);
        conn_fds.insert(sock.native_handle());
        ++active;
      }
      std::thread([this, s = std::move(sock)]() mutable { serve_connection(std::move(s)); }).detach();
      do_accept();
    });
  }

  void serve_connection(tcp::socket sock) {
    const int fd = sock.native_handle();
    beast::error_code ec;
    beast::flat_buffer buf;
    for (;;) {
      http::request<http::string_body> req;
      http::read(sock, buf, req, ec);
      if (ec) break;
      const std::string target(req.target());
      if (websocket::is_upgrade(req)) {
        serve_live(std::move(sock), req);
        break;
      }
      http::response<http::string_body> res;
      res.version(req.version());
      res.set(http::field::content_type, "application/json");
      res.set(http::field::access_control_allow_origin, "*");
      if (req.method() == http::verb::options) {
        res.result(http::status::no_content);
        res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
        res.set(http::field::access_control_allow_headers, "Content-Type");
      } else {
        const auto r = handle_api(service, std::string(req.method_string()), target, req.body());
        res.result(static_cast<http::status>(r.status));
        res.body() = r.body.dump();
      }
      res.keep_alive(req.keep_alive());
      res.prepare_payload();
      http::write(sock, res, ec);
      if (ec || !req.keep_alive()) break;
    }
    if (sock.is_open()) {
      sock.shutdown(tcp::socket::shutdown_both, ec);
      sock.close(ec);
    }
    std::lock_guard lock(conn_mu);
    if (auto it = conn_fds.find(fd); it != conn_fds.end()) conn_fds.erase(it);
    --active;
    conn_cv.notify_all();
  }

  void serve_live(tcp::socket sock, const http::request<http::string_body>& req) {
    const auto parts = split_path(std::string(req.target()));
    beast::error_code ec;
    std::shared_ptr<Subscription> sub;
    std::string failure;
    int code = 404;
    if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "live") {
      try {
        sub = service.subscribe(parts[1]);
      } catch (const std::exception& e) {
        failure = e.what();
      }
    } else {
      failure = "no live stream at " + std::string(req.target());
    }
    if (!sub) {
      http::response<http::string_body> res{static_cast<http::status>(code), req.version()};
      res.set(http::field::content_type, "application/json");
      res.body() = json{{"error", failure}}.dump();
      res.prepare_payload();
      http::write(sock, res, ec);
      return;
    }

    websocket::stream<tcp::socket> ws(std::move(sock));
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    SessionEvent ev;
    for (;;) {
      if (stopping) {
        ws.close(websocket::close_code::going_away, ec);
        return;
      }
      const auto poll = sub->next(ev, std::chrono::milliseconds(100));
      if (poll == Subscription::Poll::Timeout) continue;
      if (poll == Subscription::Poll::Closed) {
        const auto reason = sub->close_reason();
        if (reason == "overflow")
          ws.close(websocket::close_reason(websocket::close_code::try_again_later, "overflow"), ec);
        else
          ws.close(websocket::close_reason(websocket::close_code::normal, reason), ec);
        return;
      }
      ws.write(net::buffer(to_json(ev).dump()), ec);
      if (ec) {
        sub->close("client gone");
        return;
      }
    }
  }
};

HttpServer::HttpServer(Service& service, const std::string& bind_address) : impl_(std::make_unique<Impl>(service)) {
  auto [host, port] = split_host_port(bind_address);
  const tcp::endpoint ep(net::ip::make_address(host), port);
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(net::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen();
}

HttpServer::~HttpServer() { stop(); }

unsigned short HttpServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void HttpServer::start() {
  impl_->do_accept();
  impl_->accept_thread = std::thread([this] { impl_->ioc.run(); });
}

void HttpServer::run() {
  impl_->do_accept();
  impl_->ioc.run();
}

void HttpServer::stop() {
  if (impl_->stopping.exchange(true)) return;
  net::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
  });
  impl_->ioc.stop();
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
  std::unique_lock lock(impl_->conn_mu);
  for (int fd : impl_->conn_fds) ::shutdown(fd, SHUT_RDWR);
  impl_->conn_cv.wait(lock, [this] { return impl_->active == 0; });
}

}  // namespace vigil
