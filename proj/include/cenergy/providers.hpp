#pragma once

// Upstream open-data sources: geocoder (Nominatim), elevation (OpenTopography
// COP30), OSM features (Overpass) and a local building-height extract. All HTTP
// goes through a Transport so runs can be recorded to and replayed from a
// fixture directory.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cenergy/error.hpp"
#include "cenergy/geodesy.hpp"

namespace cenergy::providers {

using geodesy::GeoBBox;
using geodesy::GeoPoint;

// ---------------------------------------------------------------------------
// Transport

struct HttpRequest {
  std::string method = "GET";
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

class Transport {
public:
  virtual ~Transport() = default;
  /// Throws Error{Upstream|Timeout} when no HTTP response was obtained.
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

/// Real network access over HTTP(S).
class LiveTransport : public Transport {
public:
  explicit LiveTransport(std::chrono::seconds read_timeout = std::chrono::seconds(120),
                         std::chrono::seconds connect_timeout = std::chrono::seconds(15));
  HttpResponse send(const HttpRequest& request) override;

private:
  std::chrono::seconds read_timeout_;
  std::chrono::seconds connect_timeout_;
};

/// Request text as stored in fixtures, with the API key masked.
std::string redacted_request_text(const HttpRequest& request);

/// Hex SHA-256 of the redacted request text; names the fixture files.
std::string fixture_key(const HttpRequest& request);

std::string sha256_hex(std::string_view data);

/// Serves responses from `<dir>/<key>.resp`; never touches the network and
/// fails with FixtureMissing for any request that was not recorded.
class ReplayTransport : public Transport {
public:
  explicit ReplayTransport(std::filesystem::path dir);
  HttpResponse send(const HttpRequest& request) override;

private:
  std::filesystem::path dir_;
};

/// Forwards to `inner` and writes every successful exchange as a fixture pair.
class RecordingTransport : public Transport {
public:
  RecordingTransport(std::shared_ptr<Transport> inner, std::filesystem::path dir);
  HttpResponse send(const HttpRequest& request) override;

private:
  std::shared_ptr<Transport> inner_;
  std::filesystem::path dir_;
  std::mutex mutex_;
};

/// Keeps a copy of every outbound request (unredacted) before forwarding.
class CapturingTransport : public Transport {
public:
  explicit CapturingTransport(std::shared_ptr<Transport> inner);
  HttpResponse send(const HttpRequest& request) override;

  std::vector<HttpRequest> requests() const;
  std::size_t count() const;
  void clear();

private:
  std::shared_ptr<Transport> inner_;
  mutable std::mutex mutex_;
  std::vector<HttpRequest> requests_;
};

std::string url_encode(std::string_view s);

/// Shortest decimal that round-trips, always in positional notation.
std::string format_coord(double v);

// ---------------------------------------------------------------------------
// Geocoding

struct PlaceResult {
  std::string display_name;
  std::vector<std::vector<GeoPoint>> boundary;
  GeoBBox bbox;
};

/// URL-friendly place names use '-' between components
/// ("Rousay-Orkney Islands-Scotland"); the geocoder wants ", ". Strings that
/// already contain a comma are returned unchanged.
std::string normalize_place(std::string_view place);

/// Picks the first result carrying a Polygon or MultiPolygon boundary.
PlaceResult parse_geocode_response(std::string_view body, std::string_view query);

class Geocoder {
public:
  static constexpr std::string_view kEndpoint = "https://nominatim.openstreetmap.org/search";
  static constexpr std::string_view kUserAgent = "cenergy3d/0.1 (urban energy 3D scene generator)";

  explicit Geocoder(std::shared_ptr<Transport> transport,
                    std::chrono::milliseconds min_interval = std::chrono::milliseconds(0));

  static HttpRequest request_for(std::string_view query);
  PlaceResult geocode(std::string_view place);

private:
  std::shared_ptr<Transport> transport_;
  std::chrono::milliseconds min_interval_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point last_{};
};

// ---------------------------------------------------------------------------
// Elevation

class ElevationClient {
public:
  static constexpr std::string_view kEndpoint = "https://portal.opentopography.org/API/globaldem";

  ElevationClient(std::shared_ptr<Transport> transport, double max_bbox_area);

  static HttpRequest request_for(const GeoBBox& bbox, std::string_view api_key);
  /// Raw GeoTIFF bytes of the COP30 DEM over bbox.
  std::string fetch_dem(const GeoBBox& bbox, std::string_view api_key);

private:
  std::shared_ptr<Transport> transport_;
  double max_bbox_area_;
};

// ---------------------------------------------------------------------------
// OSM features

enum class FeatureSelector { Roads, PowerLines, Buildings };

std::string_view to_string(FeatureSelector selector);

struct OsmWay {
  std::int64_t id = 0;
  std::map<std::string, std::string> tags;
  std::vector<GeoPoint> geometry;

  bool closed() const { return geometry.size() >= 4 && geometry.front() == geometry.back(); }
};

/// Slack around the requested bbox that returned coordinates may occupy.
inline constexpr double kClipSlackDeg = 0.01;

std::string overpass_query(const GeoBBox& bbox, FeatureSelector selector);

/// Parses an Overpass JSON response. Ways are filtered by the selector's tags,
/// geometry is taken from inline `geometry` or resolved through `nodes`, and
/// clipped to bbox + kClipSlackDeg (lines are split at exits, buildings
/// leaving the window are dropped). Buildings must be closed.
std::vector<OsmWay> parse_overpass(std::string_view body, FeatureSelector selector, const GeoBBox& bbox);

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{1000};
};

/// One request in flight at a time; 429/504 answers are retried with
/// exponential backoff.
class OverpassClient {
public:
  static constexpr std::string_view kEndpoint = "https://overpass-api.de/api/interpreter";

  explicit OverpassClient(std::shared_ptr<Transport> transport, RetryPolicy retry = {});

  static HttpRequest request_for(const GeoBBox& bbox, FeatureSelector selector);
  std::vector<OsmWay> fetch_osm(const GeoBBox& bbox, FeatureSelector selector);

private:
  std::shared_ptr<Transport> transport_;
  RetryPolicy retry_;
  std::mutex in_flight_;
};

// ---------------------------------------------------------------------------
// Building heights

struct HeightRecord {
  std::vector<std::vector<GeoPoint>> rings;
  double height = 0.0;
};

/// Immutable after construction; safe for concurrent queries.
class HeightIndex {
public:
  static constexpr double kFallbackRadiusM = 10.0;

  HeightIndex() = default;
  explicit HeightIndex(std::vector<HeightRecord> records);

  /// Newline-delimited JSON, one `{"geometry": ring-or-rings, "height": m}` per line.
  static HeightIndex parse(std::istream& in);
  static HeightIndex load(const std::filesystem::path& path);

  std::size_t size() const { return entries_.size(); }
  /// Lines that could not be parsed.
  std::size_t malformed() const { return malformed_; }
  /// Well-formed records dropped for a missing or non-positive height.
  std::size_t skipped() const { return skipped_; }

  /// Height for a footprint: the unique record containing its centroid, the
  /// containing record with the nearest centroid, or the nearest record
  /// centroid within 10 m. nullopt otherwise.
  std::optional<double> match(std::span<const GeoPoint> footprint) const;

private:
  struct Entry {
    HeightRecord record;
    std::vector<std::vector<geodesy::MercatorPoint>> rings;
    geodesy::MercatorPoint centroid;
    double min_x, min_y, max_x, max_y;
  };
  std::vector<Entry> entries_;
  std::size_t malformed_ = 0;
  std::size_t skipped_ = 0;
};

inline std::optional<double> match_height(const OsmWay& footprint, const HeightIndex& index)
{
  return index.match(footprint.geometry);
}

/// Area centroid of a ring in Mercator meters (vertex mean for degenerate rings).
geodesy::MercatorPoint ring_centroid(std::span<const GeoPoint> ring);

}  // namespace cenergy::providers
