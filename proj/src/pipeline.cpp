#include "cenergy/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "cenergy/geometry.hpp"
#include "cenergy/raster.hpp"

namespace cenergy::pipeline {

namespace {

using nlohmann::json;

std::string_view base_name(BaseElevation b)
{
  switch (b) {
    case BaseElevation::Min: return "min";
    case BaseElevation::Mean: return "mean";
    case BaseElevation::Centroid: return "centroid";
  }
  return "min";
}

std::string grouped(std::size_t n)
{
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i != 0 && (digits.size() - i) % 3 == 0) out.push_back(',');
    out.push_back(digits[i]);
  }
  return out;
}

// Footprint as an open ring without consecutive duplicates.
std::vector<geodesy::GeoPoint> open_ring(const std::vector<geodesy::GeoPoint>& closed)
{
  std::vector<geodesy::GeoPoint> ring;
  for (const auto& p : closed)
    if (ring.empty() || !(ring.back() == p)) ring.push_back(p);
  while (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  return ring;
}

class StageTimer {
public:
  StageTimer(RunReport& report, const Deadline& deadline) : report_(report), deadline_(deadline) {}

  template <class Fn>
  auto run(const std::string& stage, Fn&& fn)
  {
    if (deadline_ && std::chrono::steady_clock::now() >= *deadline_)
      throw Error(ErrorKind::Timeout, "request time budget exhausted", stage);
    const auto start = std::chrono::steady_clock::now();
    auto record = [&] {
      const std::chrono::duration<double, std::milli> ms = std::chrono::steady_clock::now() - start;
      report_.stage_ms.emplace_back(stage, ms.count());
    };
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        record();
      } else {
        auto out = fn();
        record();
        return out;
      }
    } catch (const Error& e) {
      if (!e.stage().empty()) throw;
      throw e.with_stage(stage);
    }
  }

private:
  RunReport& report_;
  const Deadline& deadline_;
};

}  // namespace

// ---------------------------------------------------------------------------
// PipelineConfig

void PipelineConfig::validate() const
{
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error(ErrorKind::InvalidArgument, std::string("config: ") + name + " must be positive", "config");
  };
  positive(max_bbox_area, "max_bbox_area");
  positive(densify_step, "densify_step");
  positive(road_offset, "road_offset");
  positive(power_offset, "power_offset");
  positive(default_height, "default_height");
  positive(cache_ttl, "cache_ttl");
  if (offline && !fixture_dir)
    throw Error(ErrorKind::InvalidArgument, "config: offline mode requires a fixture directory", "config");
}

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base_dir)
{
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object", "config");
  PipelineConfig c;
  auto path_of = [&](const json& v) {
    std::filesystem::path p = v.get<std::string>();
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "max_bbox_area") c.max_bbox_area = v.get<double>();
      else if (key == "densify_step") c.densify_step = v.get<double>();
      else if (key == "road_offset") c.road_offset = v.get<double>();
      else if (key == "power_offset") c.power_offset = v.get<double>();
      else if (key == "default_height") c.default_height = v.get<double>();
      else if (key == "height_extract") c.height_extract = v.is_null() ? std::nullopt : std::optional(path_of(v));
      else if (key == "cache_ttl") c.cache_ttl = v.get<double>();
      else if (key == "offline") c.offline = v.get<bool>();
      else if (key == "fixture_dir") c.fixture_dir = v.is_null() ? std::nullopt : std::optional(path_of(v));
      else if (key == "terrain_colorscale") c.terrain_colorscale = v.get<std::string>();
      else if (key == "building_color") c.building_color = v.get<std::string>();
      else if (key == "base_elevation") {
        const auto s = v.get<std::string>();
        if (s == "min") c.base_elevation = BaseElevation::Min;
        else if (s == "mean") c.base_elevation = BaseElevation::Mean;
        else if (s == "centroid") c.base_elevation = BaseElevation::Centroid;
        else throw Error(ErrorKind::InvalidArgument, "config: base_elevation must be min, mean or centroid", "config");
      } else {
        throw Error(ErrorKind::InvalidArgument, "config: unknown key '" + key + "'", "config");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config: wrong value type: ") + e.what(), "config");
  }
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot read config file " + path.string(), "config");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config file is not valid JSON: ") + e.what(), "config");
  }
  return from_json(j, path.parent_path());
}

json PipelineConfig::to_json() const
{
  json j = json::object();
  j["max_bbox_area"] = max_bbox_area;
  j["densify_step"] = densify_step;
  j["road_offset"] = road_offset;
  j["power_offset"] = power_offset;
  j["default_height"] = default_height;
  j["height_extract"] = height_extract ? json(height_extract->string()) : json(nullptr);
  j["cache_ttl"] = cache_ttl;
  j["offline"] = offline;
  j["fixture_dir"] = fixture_dir ? json(fixture_dir->string()) : json(nullptr);
  j["base_elevation"] = base_name(base_elevation);
  j["terrain_colorscale"] = terrain_colorscale;
  j["building_color"] = building_color;
  return j;
}

std::string PipelineConfig::digest() const
{
  json j = to_json();
  j.erase("cache_ttl");
  return providers::sha256_hex(scene::canonical_dump(j));
}

// ---------------------------------------------------------------------------
// Stats and reports

std::string ModelStats::caption() const
{
  return "we collect " + grouped(elevation_count) + " records of elevations, " + grouped(road_segments) +
         " road segments, " + grouped(power_lines) + " power lines, and " + grouped(buildings_with_height) +
         " buildings with height";
}

std::string RunReport::log_line() const
{
  json j = json::object();
  j["event"] = "generate";
  j["place"] = place;
  j["stats"] = {{"elevation_count", stats.elevation_count},
                {"road_segments", stats.road_segments},
                {"power_lines", stats.power_lines},
                {"buildings_with_height", stats.buildings_with_height}};
  json stages = json::object();
  for (const auto& [name, ms] : stage_ms) stages[name] = std::round(ms * 1000.0) / 1000.0;
  j["stages_ms"] = std::move(stages);
  j["warnings"] = warnings;
  j["summary"] = stats.caption();
  return scene::canonical_dump(j);
}

// ---------------------------------------------------------------------------
// Providers

Providers Providers::over(std::shared_ptr<providers::Transport> transport, const PipelineConfig& config, bool polite)
{
  Providers p;
  p.transport = transport;
  p.geocoder = std::make_shared<providers::Geocoder>(
      transport, polite ? std::chrono::milliseconds(1000) : std::chrono::milliseconds(0));
  p.elevation = std::make_shared<providers::ElevationClient>(transport, config.max_bbox_area);
  providers::RetryPolicy retry;
  if (!polite) retry.base_delay = std::chrono::milliseconds(0);
  p.overpass = std::make_shared<providers::OverpassClient>(transport, retry);
  return p;
}

Providers Providers::for_config(const PipelineConfig& config, bool record)
{
  config.validate();
  if (config.offline) return over(std::make_shared<providers::ReplayTransport>(*config.fixture_dir), config, false);
  std::shared_ptr<providers::Transport> live = std::make_shared<providers::LiveTransport>();
  if (record) {
    if (!config.fixture_dir)
      throw Error(ErrorKind::InvalidArgument, "record mode requires a fixture directory", "config");
    live = std::make_shared<providers::RecordingTransport>(live, *config.fixture_dir);
  }
  return over(std::move(live), config, true);
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(PipelineConfig config, Providers providers)
    : config_(std::move(config)), providers_(std::move(providers))
{
  config_.validate();
  if (config_.height_extract) {
    try {
      heights_ = std::make_shared<const providers::HeightIndex>(providers::HeightIndex::load(*config_.height_extract));
    } catch (const Error& e) {
      throw e.with_stage("heights");
    }
  }
}

RunReport Pipeline::generate(std::string_view place, std::string_view api_key, Deadline deadline) const
{
  using geodesy::GeoPoint;
  RunReport report;
  report.place = std::string(place);
  StageTimer stage(report, deadline);

  if (place.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw Error(ErrorKind::InvalidArgument, "place name is empty", "geocode");
  std::string key(api_key);
  if (key.empty()) {
    if (!config_.offline) throw Error(ErrorKind::InvalidKey, "an OpenTopography API key is required", "dem");
    key = "offline";  // fixtures store the key redacted, any placeholder replays
  }

  const auto located = stage.run("geocode", [&] { return providers_.geocoder->geocode(place); });
  const auto bbox = located.bbox;
  stage.run("bbox", [&] {
    if (bbox.area_deg2() > config_.max_bbox_area)
      throw Error(ErrorKind::TooLarge, "bbox area " + providers::format_coord(bbox.area_deg2()) +
                                           " deg^2 exceeds the cap of " + providers::format_coord(config_.max_bbox_area));
  });

  const auto grid = stage.run("dem", [&] {
    const std::string bytes = providers_.elevation->fetch_dem(bbox, key);
    return raster::decode_geotiff(std::span<const char>(bytes.data(), bytes.size()));
  });
  const auto terrain = stage.run("terrain", [&] { return geometry::grid_mesh(grid); });
  report.stats.elevation_count = terrain.vertices.size();

  auto lines_layer = [&](const std::string& name, providers::FeatureSelector selector, double offset,
                         geometry::LineKind kind, std::size_t& count) {
    return stage.run(name, [&] {
      const auto ways = providers_.overpass->fetch_osm(bbox, selector);
      count = ways.size();
      std::vector<geometry::Polyline3> lines;
      for (const auto& way : ways) {
        auto draped = geometry::drape(geometry::densify(way.geometry, config_.densify_step), grid, offset, kind);
        if (draped) lines.push_back(std::move(*draped));
        else report.warnings.push_back(name + ": way " + std::to_string(way.id) + " lies outside the DEM");
      }
      return lines;
    });
  };
  const auto roads = lines_layer("roads", providers::FeatureSelector::Roads, config_.road_offset,
                                 geometry::LineKind::Road, report.stats.road_segments);
  const auto power = lines_layer("power", providers::FeatureSelector::PowerLines, config_.power_offset,
                                 geometry::LineKind::Power, report.stats.power_lines);

  const auto buildings = stage.run("buildings", [&] {
    const auto ways = providers_.overpass->fetch_osm(bbox, providers::FeatureSelector::Buildings);
    std::vector<geometry::TriMesh> prisms;
    for (const auto& way : ways) {
      const auto warn = [&](const std::string& why) {
        report.warnings.push_back("buildings: way " + std::to_string(way.id) + " skipped: " + why);
      };
      const auto ring = open_ring(way.geometry);
      if (ring.size() < 3) {
        warn("fewer than 3 distinct vertices");
        continue;
      }
      std::optional<double> height = heights_ ? heights_->match(ring) : std::nullopt;
      const double h = height.value_or(config_.default_height);

      std::optional<double> base;
      if (config_.base_elevation == BaseElevation::Centroid) {
        const auto c = geodesy::from_mercator(providers::ring_centroid(ring));
        base = raster::sample_bilinear(grid, c);
      } else {
        std::vector<double> samples;
        for (const auto& p : ring)
          if (auto s = raster::sample_bilinear(grid, p)) samples.push_back(*s);
        if (samples.size() == ring.size()) {
          base = config_.base_elevation == BaseElevation::Min
                     ? *std::min_element(samples.begin(), samples.end())
                     : std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
        }
      }
      if (!base) {
        warn("no terrain elevation under the footprint");
        continue;
      }

      geometry::Ring2 projected;
      for (const auto& p : ring) {
        const auto m = geodesy::to_mercator(p);
        projected.push_back({m.x, m.y});
      }
      try {
        prisms.push_back(geometry::extrude(projected, *base, h));
      } catch (const Error& e) {
        warn(e.message());
      }
    }
    return prisms;
  });
  report.stats.buildings_with_height = buildings.size();

  report.figure = stage.run("scene", [&] {
    const auto merged = geometry::merge_meshes(buildings);
    return scene::make_figure(located.display_name, scene::terrain_trace(terrain, config_.terrain_colorscale),
                              scene::buildings_trace(merged, config_.building_color),
                              scene::lines_trace(roads, geometry::LineKind::Road),
                              scene::lines_trace(power, geometry::LineKind::Power));
  });
  return report;
}

RunReport generate(std::string_view place, std::string_view api_key, const PipelineConfig& config)
{
  return Pipeline(config, Providers::for_config(config)).generate(place, api_key);
}

std::string cache_key(std::string_view place, const PipelineConfig& config)
{
  return providers::normalize_place(place) + "\n" + config.digest();
}

// ---------------------------------------------------------------------------
// FigureCache

FigureCache::FigureCache(std::chrono::duration<double> ttl, Clock clock) : ttl_(ttl), clock_(std::move(clock)) {}

std::shared_ptr<const std::string> FigureCache::lookup(const std::string& key) const
{
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  if (clock_() - it->second.stored >= ttl_) return nullptr;
  return it->second.bytes;
}

void FigureCache::insert(const std::string& key, std::string bytes)
{
  auto value = std::make_shared<const std::string>(std::move(bytes));
  const auto now = clock_();
  std::unique_lock lock(mutex_);
  std::erase_if(entries_, [&](const auto& kv) { return now - kv.second.stored >= ttl_; });
  entries_[key] = Entry{std::move(value), now};
}

std::size_t FigureCache::size() const
{
  const auto now = clock_();
  std::shared_lock lock(mutex_);
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [&](const auto& kv) { return now - kv.second.stored < ttl_; }));
}

}  // namespace cenergy::pipeline
