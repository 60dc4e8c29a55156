#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "vigil/service.hpp"

namespace vigil {

// HTTP control API and WebSocket live stream in front of a Service.
//
//   POST /sessions                 -> 201 status
//   GET  /sessions                 -> 200 [status...]
//   GET  /sessions/{id}            -> 200 status
//   POST /sessions/{id}/tags       -> 200 tag            body {"status":"open"|"closed"}
//   POST /sessions/{id}/stop       -> 200 status + verdict_count
//   GET  /sessions/{id}/report     -> 200 report + confusion matrix
//   GET  /sessions/{id}/live       -> WebSocket, one text frame per event
//
// Errors come back as {"error": "..."} with 400, 404 or 409.
class HttpServer {
 public:
  HttpServer(Service& service, const std::string& bind_address);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  unsigned short port() const;
  // Serves on a background thread until stop().
  void start();
  // Serves on the calling thread until stop() is called from elsewhere.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Maps a request onto the service; exposed for tests that skip the socket.
struct ApiResponse {
  int status{200};
  json body;
};

ApiResponse handle_api(Service& service, const std::string& method, const std::string& target, const std::string& body);

}  // namespace vigil
