#include <httplib.h>

#include <openssl/evp.h>

#include <charconv>
#include <fstream>
#include <regex>
#include <sstream>

#include "cenergy/providers.hpp"

namespace cenergy::providers {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string target;  // /path?query
};

SplitUrl split_url(const std::string& url)
{
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::InvalidArgument, "URL without scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view data)
{
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + tmp);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

LiveTransport::LiveTransport(std::chrono::seconds read_timeout, std::chrono::seconds connect_timeout)
    : read_timeout_(read_timeout), connect_timeout_(connect_timeout)
{
}

HttpResponse LiveTransport::send(const HttpRequest& request)
{
  const auto [origin, target] = split_url(request.url);
  httplib::Client client(origin);
  client.set_follow_location(true);
  client.set_read_timeout(read_timeout_);
  client.set_connection_timeout(connect_timeout_);
  httplib::Headers headers;
  for (const auto& [k, v] : request.headers) headers.emplace(k, v);

  const auto started = std::chrono::steady_clock::now();
  httplib::Result res = request.method == "POST"
                            ? client.Post(target, headers, request.body, "text/plain; charset=utf-8")
                            : client.Get(target, headers);
  if (!res) {
    const auto err = res.error();
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           (err == httplib::Error::Read && std::chrono::steady_clock::now() - started >= read_timeout_);
    throw Error(timed_out ? ErrorKind::Timeout : ErrorKind::Upstream,
                origin + ": " + httplib::to_string(err));
  }
  return {res->status, res->body};
}

std::string redacted_request_text(const HttpRequest& request)
{
  static const std::regex key_param(R"((API_Key=)[^&]*)");
  const std::string url = std::regex_replace(request.url, key_param, "$1REDACTED");
  return request.method + " " + url + "\n" + request.body;
}

std::string sha256_hex(std::string_view data)
{
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::InvalidArgument, "sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string fixture_key(const HttpRequest& request) { return sha256_hex(redacted_request_text(request)); }

ReplayTransport::ReplayTransport(std::filesystem::path dir) : dir_(std::move(dir)) {}

HttpResponse ReplayTransport::send(const HttpRequest& request)
{
  const auto path = dir_ / (fixture_key(request) + ".resp");
  if (!std::filesystem::exists(path))
    throw Error(ErrorKind::FixtureMissing, "no recorded fixture for request: " + redacted_request_text(request));
  return {200, read_file(path)};
}

RecordingTransport::RecordingTransport(std::shared_ptr<Transport> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir))
{
}

HttpResponse RecordingTransport::send(const HttpRequest& request)
{
  HttpResponse res = inner_->send(request);
  if (res.status >= 200 && res.status < 300) {
    std::lock_guard lock(mutex_);
    std::filesystem::create_directories(dir_);
    const auto key = fixture_key(request);
    write_file(dir_ / (key + ".req"), redacted_request_text(request));
    write_file(dir_ / (key + ".resp"), res.body);
  }
  return res;
}

CapturingTransport::CapturingTransport(std::shared_ptr<Transport> inner) : inner_(std::move(inner)) {}

HttpResponse CapturingTransport::send(const HttpRequest& request)
{
  {
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
  }
  return inner_->send(request);
}

std::vector<HttpRequest> CapturingTransport::requests() const
{
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t CapturingTransport::count() const
{
  std::lock_guard lock(mutex_);
  return requests_.size();
}

void CapturingTransport::clear()
{
  std::lock_guard lock(mutex_);
  requests_.clear();
}

std::string url_encode(std::string_view s)
{
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 0xf]);
    }
  }
  return out;
}

std::string format_coord(double v)
{
  if (v == 0.0) v = 0.0;
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  return std::string(buf, res.ptr);
}

}  // namespace cenergy::providers
