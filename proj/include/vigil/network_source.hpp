#pragma once

#include <atomic>
#include <cstddef>
#include <optional>
#include <string>

#include "vigil/source.hpp"

namespace vigil {

// Accepts one TCP producer and turns each LF-terminated record
// {"t":<seconds>,"uv":<microvolts>} into a Sample. Unparseable lines are
// skipped and counted; a timestamp that does not increase aborts the stream
// with StreamError. The socket is bound in the constructor so an unusable
// address fails at session start.
class NetworkSource : public SampleSource {
 public:
  explicit NetworkSource(const std::string& listen_address);
  ~NetworkSource() override;
  NetworkSource(const NetworkSource&) = delete;
  NetworkSource& operator=(const NetworkSource&) = delete;

  std::optional<Sample> next() override;
  void close() override;
  bool live() const override { return true; }
  std::size_t skip_count() const override { return skipped_.load(); }

  unsigned short port() const { return port_; }
  std::string address() const { return host_ + ":" + std::to_string(port_); }

 private:
  bool wait_readable(int fd);
  std::optional<std::string> read_line();

  std::string host_;
  unsigned short port_{0};
  int listen_fd_{-1};
  int conn_fd_{-1};
  int wake_pipe_[2]{-1, -1};
  std::string pending_;
  bool eof_{false};
  std::atomic<bool> closed_{false};
  std::atomic<std::size_t> skipped_{0};
  std::optional<double> last_t_;
};

// Splits "host:port"; throws SourceError when malformed.
std::pair<std::string, unsigned short> split_host_port(const std::string& address);

}  // namespace vigil
