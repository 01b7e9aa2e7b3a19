#include <httplib.h>

#include <iostream>

#include "cenergy/service.hpp"

namespace cenergy::service {

namespace {

constexpr std::size_t kMaxPlaceLength = 256;

bool malformed_place(std::string_view place)
{
  if (place.size() > kMaxPlaceLength) return true;
  if (place.find_first_not_of(" \t") == std::string_view::npos) return true;
  return std::any_of(place.begin(), place.end(), [](char c) { return static_cast<unsigned char>(c) < 0x20; });
}

}  // namespace

int status_for(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::NotFound: return 404;
    case ErrorKind::InvalidArgument: return 400;
    case ErrorKind::TooLarge: return 422;
    case ErrorKind::Timeout: return 504;
    case ErrorKind::Parse:
    case ErrorKind::Schema:
    case ErrorKind::InvalidKey:
    case ErrorKind::BadRequest:
    case ErrorKind::Upstream:
    case ErrorKind::FixtureMissing: return 502;
  }
  return 502;
}

std::string api_error_body(int status, std::string_view stage, std::string_view message)
{
  nlohmann::json j = {{"status", status}, {"stage", stage}, {"message", message}};
  return scene::canonical_dump(j);
}

Service::Service(pipeline::Pipeline pipeline, ServiceOptions options, pipeline::FigureCache::Clock clock)
    : pipeline_(std::move(pipeline)),
      options_(std::move(options)),
      cache_(std::chrono::duration<double>(pipeline_.config().cache_ttl), std::move(clock)),
      server_(std::make_unique<httplib::Server>())
{
  install_routes();
}

Service::~Service() { stop(); }

ApiResponse Service::model(std::string_view api_key, std::string_view place)
{
  if (api_key.empty() || malformed_place(place))
    return {400, api_error_body(400, "request", "api key and place must be non-empty printable text")};
  const std::string query = providers::normalize_place(place);
  if (query.empty()) return {400, api_error_body(400, "request", "place name is empty")};

  const std::string key = pipeline::cache_key(query, pipeline_.config());
  if (auto hit = cache_.lookup(key)) return {200, *hit};

  const auto deadline = std::chrono::steady_clock::now() + options_.request_budget;
  if (!slots_.try_acquire_until(deadline))
    return {504, api_error_body(504, "queue", "timed out waiting for a free pipeline slot")};
  struct Release {
    std::counting_semaphore<kMaxConcurrentRuns>& s;
    ~Release() { s.release(); }
  } release{slots_};

  try {
    ++runs_;
    const auto report = pipeline_.generate(query, api_key, deadline);
    std::cerr << report.log_line() << '\n';
    std::string body = scene::serialize(report.figure);
    cache_.insert(key, body);
    return {200, std::move(body)};
  } catch (const Error& e) {
    const int status = status_for(e.kind());
    return {status, api_error_body(status, e.stage().empty() ? "pipeline" : e.stage(), e.message())};
  } catch (const std::exception& e) {
    return {502, api_error_body(502, "internal", e.what())};
  }
}

ApiResponse Service::health() const
{
  nlohmann::json j = {{"status", "ok"}, {"cache_entries", cache_.size()}};
  return {200, scene::canonical_dump(j)};
}

void Service::install_routes()
{
  server_->new_task_queue = [threads = options_.worker_threads] { return new httplib::ThreadPool(threads); };
  auto reply = [](httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(api.body, api.content_type);
  };
  server_->Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
  server_->Get(R"(/([^/]+)/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, model(req.matches[1].str(), req.matches[2].str()));
  });
}

bool Service::listen() { return server_->listen(options_.host, options_.port); }

int Service::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool Service::listen_after_bind() { return server_->listen_after_bind(); }

void Service::stop()
{
  if (server_) server_->stop();
}

void Service::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace cenergy::service
