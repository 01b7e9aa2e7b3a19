#pragma once

// HTTP front end: GET /{api_key}/{place} returns the canonical figure JSON,
// GET /health reports liveness and cache occupancy.

#include <atomic>
#include <chrono>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>

#include "cenergy/pipeline.hpp"

namespace httplib {
class Server;
}

namespace cenergy::service {

struct ServiceOptions {
  std::string host = "0.0.0.0";
  int port = 8000;
  std::chrono::seconds request_budget{120};
  std::size_t worker_threads = 16;
};

inline constexpr std::ptrdiff_t kMaxConcurrentRuns = 4;

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// HTTP status for a pipeline failure.
int status_for(ErrorKind kind);

/// `{"message":...,"stage":...,"status":...}` in canonical JSON.
std::string api_error_body(int status, std::string_view stage, std::string_view message);

class Service {
public:
  Service(pipeline::Pipeline pipeline, ServiceOptions options = {},
          pipeline::FigureCache::Clock clock = [] { return std::chrono::steady_clock::now(); });
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Route handlers, usable without a socket. `place` is already percent-decoded.
  ApiResponse model(std::string_view api_key, std::string_view place);
  ApiResponse health() const;

  /// Binds and serves until stop(). Returns false if the bind failed.
  bool listen();
  /// Binds to an ephemeral port on `host` and returns it (or -1).
  int bind_any_port(const std::string& host = "127.0.0.1");
  /// Serves on the socket bound by bind_any_port until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

  std::size_t pipeline_runs() const { return runs_.load(); }

private:
  void install_routes();

  pipeline::Pipeline pipeline_;
  ServiceOptions options_;
  pipeline::FigureCache cache_;
  std::counting_semaphore<kMaxConcurrentRuns> slots_{kMaxConcurrentRuns};
  std::atomic<std::size_t> runs_{0};
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace cenergy::service
