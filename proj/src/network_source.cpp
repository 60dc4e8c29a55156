#include "vigil/network_source.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

namespace vigil {

namespace {

constexpr std::size_t kMaxLine = 4096;

}  // namespace

std::pair<std::string, unsigned short> split_host_port(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw SourceError("listen address '" + address + "' is not host:port");
  const std::string host = address.substr(0, colon);
  const std::string port = address.substr(colon + 1);
  char* end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || p < 0 || p > 65535)
    throw SourceError("listen address '" + address + "' has an invalid port");
  return {host.empty() ? "0.0.0.0" : host, static_cast<unsigned short>(p)};
}

NetworkSource::NetworkSource(const std::string& listen_address) {
  auto [host, port] = split_host_port(listen_address);
  host_ = host;

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw SourceError("cannot resolve listen address '" + listen_address + "'");

  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    throw SourceError("socket(): " + std::string(std::strerror(errno)));
  }
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(listen_fd_, 1) != 0) {
    const std::string msg = std::strerror(errno);
    ::freeaddrinfo(res);
    ::close(listen_fd_);
    throw SourceError("cannot listen on '" + listen_address + "': " + msg);
  }
  ::freeaddrinfo(res);

  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);

  if (::pipe(wake_pipe_) != 0) {
    ::close(listen_fd_);
    throw SourceError("pipe(): " + std::string(std::strerror(errno)));
  }
}

NetworkSource::~NetworkSource() {
  for (int fd : {conn_fd_, listen_fd_, wake_pipe_[0], wake_pipe_[1]})
    if (fd >= 0) ::close(fd);
}

void NetworkSource::close() {
  if (closed_.exchange(true)) return;
  const char b = 'x';
  [[maybe_unused]] auto n = ::write(wake_pipe_[1], &b, 1);
}

// true when fd is readable, false when close() was called
bool NetworkSource::wait_readable(int fd) {
  for (;;) {
    if (closed_.load()) return false;
    pollfd fds[2] = {{fd, POLLIN, 0}, {wake_pipe_[0], POLLIN, 0}};
    const int rc = ::poll(fds, 2, -1);
    if (rc < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    if (fds[1].revents) return false;
    if (fds[0].revents) return true;
  }
}

std::optional<std::string> NetworkSource::read_line() {
  for (;;) {
    const auto nl = pending_.find('\n');
    if (nl != std::string::npos) {
      std::string line = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      return line;
    }
    if (eof_) {
      if (pending_.empty()) return std::nullopt;
      std::string line = std::move(pending_);  // unterminated final record
      pending_.clear();
      return line;
    }
    if (!wait_readable(conn_fd_)) return std::nullopt;
    char buf[4096];
    const ssize_t n = ::recv(conn_fd_, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      eof_ = true;
      continue;
    }
    pending_.append(buf, static_cast<std::size_t>(n));
    if (pending_.size() > kMaxLine && pending_.find('\n') == std::string::npos) {
      // oversized garbage; drop it as one skipped line
      pending_.clear();
      ++skipped_;
    }
  }
}

std::optional<Sample> NetworkSource::next() {
  if (conn_fd_ < 0) {
    if (!wait_readable(listen_fd_)) return std::nullopt;
    conn_fd_ = ::accept(listen_fd_, nullptr, nullptr);
    if (conn_fd_ < 0) return std::nullopt;
  }
  while (auto line = read_line()) {
    if (!line->empty() && line->back() == '\r') line->pop_back();
    double t = 0.0, uv = 0.0;
    try {
      const auto j = nlohmann::json::parse(*line);
      if (!j.is_object() || !j.contains("t") || !j.contains("uv") || !j["t"].is_number() || !j["uv"].is_number()) {
        ++skipped_;
        continue;
      }
      t = j["t"].get<double>();
      uv = j["uv"].get<double>();
    } catch (const nlohmann::json::exception&) {
      ++skipped_;
      continue;
    }
    if (!std::isfinite(t) || !std::isfinite(uv)) {
      ++skipped_;
      continue;
    }
    if (last_t_ && !(t > *last_t_))
      throw StreamError("protocol error: timestamp went from " + std::to_string(*last_t_) + " to " + std::to_string(t));
    last_t_ = t;
    return Sample{t, uv};
  }
  return std::nullopt;
}

}  // namespace vigil
