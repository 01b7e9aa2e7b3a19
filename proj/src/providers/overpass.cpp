#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "cenergy/providers.hpp"

namespace cenergy::providers {

namespace {

bool selector_matches(FeatureSelector selector, const std::map<std::string, std::string>& tags)
{
  switch (selector) {
    case FeatureSelector::Roads: return tags.contains("highway");
    case FeatureSelector::Buildings: return tags.contains("building");
    case FeatureSelector::PowerLines: {
      auto it = tags.find("power");
      return it != tags.end() && (it->second == "line" || it->second == "minor_line" || it->second == "cable");
    }
  }
  return false;
}

std::string tag_text(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

std::string_view to_string(FeatureSelector selector)
{
  switch (selector) {
    case FeatureSelector::Roads: return "roads";
    case FeatureSelector::PowerLines: return "power";
    case FeatureSelector::Buildings: return "buildings";
  }
  return "?";
}

std::string overpass_query(const GeoBBox& bbox, FeatureSelector selector)
{
  const std::string box = "(" + format_coord(bbox.south) + "," + format_coord(bbox.west) + "," +
                          format_coord(bbox.north) + "," + format_coord(bbox.east) + ")";
  std::string filter;
  switch (selector) {
    case FeatureSelector::Roads: filter = R"(way["highway"])"; break;
    case FeatureSelector::PowerLines: filter = R"(way["power"~"^(line|minor_line|cable)$"])"; break;
    case FeatureSelector::Buildings: filter = R"(way["building"])"; break;
  }
  return "[out:json][timeout:90];" + filter + box + ";out geom;";
}

namespace {

std::vector<OsmWay> parse_overpass_unchecked(std::string_view body, FeatureSelector selector, const GeoBBox& bbox)
{
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body.begin(), body.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("overpass: malformed response: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("elements") || !doc["elements"].is_array())
    throw Error(ErrorKind::Parse, "overpass: response has no \"elements\" array");
  const auto& elements = doc["elements"];

  std::unordered_map<std::int64_t, GeoPoint> nodes;
  for (const auto& e : elements) {
    if (!e.is_object() || e.value("type", "") != "node") continue;
    if (!e.contains("id") || !e.contains("lat") || !e.contains("lon"))
      throw Error(ErrorKind::Parse, "overpass: node without id/lat/lon");
    nodes[e["id"].get<std::int64_t>()] = {e["lon"].get<double>(), e["lat"].get<double>()};
  }

  const GeoBBox window = bbox.expanded(kClipSlackDeg);
  std::vector<OsmWay> out;
  for (const auto& e : elements) {
    if (!e.is_object() || e.value("type", "") != "way") continue;
    if (!e.contains("id") || !e["id"].is_number_integer()) throw Error(ErrorKind::Parse, "overpass: way without id");
    OsmWay way;
    way.id = e["id"].get<std::int64_t>();
    if (e.contains("tags")) {
      if (!e["tags"].is_object()) throw Error(ErrorKind::Parse, "overpass: way tags must be an object");
      for (const auto& [k, v] : e["tags"].items()) way.tags[k] = tag_text(v);
    }
    if (!selector_matches(selector, way.tags)) continue;

    if (e.contains("geometry")) {
      if (!e["geometry"].is_array()) throw Error(ErrorKind::Parse, "overpass: way geometry must be an array");
      for (const auto& g : e["geometry"]) {
        if (g.is_null()) continue;
        if (!g.is_object() || !g.contains("lat") || !g.contains("lon") || !g["lat"].is_number() ||
            !g["lon"].is_number())
          throw Error(ErrorKind::Parse, "overpass: malformed geometry point");
        way.geometry.push_back({g["lon"].get<double>(), g["lat"].get<double>()});
      }
    } else if (e.contains("nodes") && e["nodes"].is_array()) {
      for (const auto& ref : e["nodes"]) {
        if (!ref.is_number_integer()) throw Error(ErrorKind::Parse, "overpass: malformed node reference");
        if (auto it = nodes.find(ref.get<std::int64_t>()); it != nodes.end()) way.geometry.push_back(it->second);
      }
    }

    if (selector == FeatureSelector::Buildings) {
      if (!way.closed()) continue;
      const bool inside = std::all_of(way.geometry.begin(), way.geometry.end(),
                                      [&](const GeoPoint& p) { return window.contains(p); });
      if (inside) out.push_back(std::move(way));
      continue;
    }

    // Lines: keep each maximal run of points inside the window.
    std::vector<GeoPoint> run;
    auto flush = [&] {
      if (run.size() >= 2) {
        OsmWay part{way.id, way.tags, std::move(run)};
        out.push_back(std::move(part));
      }
      run.clear();
    };
    for (const auto& p : way.geometry) {
      if (window.contains(p)) run.push_back(p);
      else flush();
    }
    flush();
  }
  return out;
}

}  // namespace

std::vector<OsmWay> parse_overpass(std::string_view body, FeatureSelector selector, const GeoBBox& bbox)
{
  try {
    return parse_overpass_unchecked(body, selector, bbox);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("overpass: unexpected value: ") + e.what());
  }
}

OverpassClient::OverpassClient(std::shared_ptr<Transport> transport, RetryPolicy retry)
    : transport_(std::move(transport)), retry_(retry)
{
}

HttpRequest OverpassClient::request_for(const GeoBBox& bbox, FeatureSelector selector)
{
  HttpRequest req;
  req.method = "POST";
  req.url = std::string(kEndpoint);
  req.headers.emplace_back("User-Agent", "cenergy3d/0.1");
  req.body = overpass_query(bbox, selector);
  return req;
}

std::vector<OsmWay> OverpassClient::fetch_osm(const GeoBBox& bbox, FeatureSelector selector)
{
  const HttpRequest req = request_for(bbox, selector);
  std::lock_guard lock(in_flight_);
  auto delay = retry_.base_delay;
  for (int attempt = 1;; ++attempt) {
    const HttpResponse res = transport_->send(req);
    if (res.status == 200) return parse_overpass(res.body, selector, bbox);
    const bool retryable = res.status == 429 || res.status == 504;
    if (!retryable || attempt >= retry_.max_attempts)
      throw Error(ErrorKind::Upstream, "overpass returned HTTP " + std::to_string(res.status) + " after " +
                                           std::to_string(attempt) + " attempt(s)");
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

}  // namespace cenergy::providers
