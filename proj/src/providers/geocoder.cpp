#include <algorithm>
#include <thread>

#include <json.hpp>

#include "cenergy/providers.hpp"

namespace cenergy::providers {

namespace {

std::string_view trim(std::string_view s)
{
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<GeoPoint> ring_from_json(const nlohmann::json& coords)
{
  std::vector<GeoPoint> ring;
  if (!coords.is_array()) return ring;
  for (const auto& c : coords) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
      throw Error(ErrorKind::Parse, "geocoder: malformed coordinate");
    ring.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  return ring;
}

}  // namespace

std::string normalize_place(std::string_view place)
{
  const auto trimmed = trim(place);
  if (trimmed.find(',') != std::string_view::npos) return std::string(place);
  std::string out;
  std::size_t start = 0;
  while (start <= trimmed.size()) {
    auto end = trimmed.find('-', start);
    if (end == std::string_view::npos) end = trimmed.size();
    const auto part = trim(trimmed.substr(start, end - start));
    if (!part.empty()) {
      if (!out.empty()) out += ", ";
      out += part;
    }
    start = end + 1;
  }
  return out;
}

PlaceResult parse_geocode_response(std::string_view body, std::string_view query)
{
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body.begin(), body.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("geocoder: malformed response: ") + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorKind::Parse, "geocoder: expected a JSON array");

  for (const auto& result : doc) {
    if (!result.is_object() || !result.contains("geojson")) continue;
    const auto& geo = result["geojson"];
    if (!geo.is_object() || !geo.contains("type") || !geo.contains("coordinates")) continue;
    const auto type = geo["type"];
    std::vector<std::vector<GeoPoint>> rings;
    if (type == "Polygon") {
      if (!geo["coordinates"].empty()) rings.push_back(ring_from_json(geo["coordinates"][0]));
    } else if (type == "MultiPolygon") {
      for (const auto& poly : geo["coordinates"])
        if (poly.is_array() && !poly.empty()) rings.push_back(ring_from_json(poly[0]));
    } else {
      continue;  // points and lines carry no usable boundary
    }
    std::erase_if(rings, [](const auto& r) { return r.size() < 3; });
    if (rings.empty()) continue;

    PlaceResult place;
    place.display_name = result.value("display_name", std::string(query));
    std::vector<GeoPoint> all;
    for (const auto& r : rings) {
      geodesy::bbox_of_ring(r);  // validates each ring
      all.insert(all.end(), r.begin(), r.end());
    }
    place.bbox = geodesy::bbox_of_points(all);
    place.boundary = std::move(rings);
    return place;
  }
  throw Error(ErrorKind::NotFound, "no polygon boundary found for '" + std::string(query) + "'");
}

Geocoder::Geocoder(std::shared_ptr<Transport> transport, std::chrono::milliseconds min_interval)
    : transport_(std::move(transport)), min_interval_(min_interval)
{
}

HttpRequest Geocoder::request_for(std::string_view query)
{
  HttpRequest req;
  req.method = "GET";
  req.url = std::string(kEndpoint) + "?q=" + url_encode(query) + "&format=jsonv2&polygon_geojson=1&limit=5";
  req.headers.emplace_back("User-Agent", std::string(kUserAgent));
  return req;
}

PlaceResult Geocoder::geocode(std::string_view place)
{
  const std::string query = normalize_place(place);
  if (query.empty()) throw Error(ErrorKind::InvalidArgument, "place name is empty");

  HttpResponse res;
  {
    // Nominatim's usage policy allows one request per second.
    std::lock_guard lock(mutex_);
    const auto wait = last_ + min_interval_ - std::chrono::steady_clock::now();
    if (wait > std::chrono::steady_clock::duration::zero()) std::this_thread::sleep_for(wait);
    res = transport_->send(request_for(query));
    last_ = std::chrono::steady_clock::now();
  }
  if (res.status != 200)
    throw Error(ErrorKind::Upstream, "geocoder returned HTTP " + std::to_string(res.status));
  return parse_geocode_response(res.body, query);
}

}  // namespace cenergy::providers
