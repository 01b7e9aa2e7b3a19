#pragma once

// geocode -> DEM -> OSM layers -> heights -> meshes -> figure.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cenergy/providers.hpp"
#include "cenergy/scene.hpp"

namespace cenergy::pipeline {

/// Where a building's base sits relative to the terrain under its footprint.
enum class BaseElevation { Min, Mean, Centroid };

struct PipelineConfig {
  double max_bbox_area = 0.05;  // square degrees
  double densify_step = 30.0;   // meters
  double road_offset = 0.5;     // meters above terrain
  double power_offset = 10.0;
  double default_height = 8.0;
  std::optional<std::filesystem::path> height_extract;
  double cache_ttl = 86400.0;  // seconds
  bool offline = false;
  std::optional<std::filesystem::path> fixture_dir;
  BaseElevation base_elevation = BaseElevation::Min;
  std::string terrain_colorscale = std::string(scene::kTerrainColorscale);
  std::string building_color = std::string(scene::kBuildingColor);

  void validate() const;

  /// Unknown keys are rejected. Relative paths resolve against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// Digest of every field that can change the generated figure.
  std::string digest() const;
};

struct ModelStats {
  std::size_t elevation_count = 0;
  std::size_t road_segments = 0;
  std::size_t power_lines = 0;
  std::size_t buildings_with_height = 0;

  /// "we collect N records of elevations, ..." with thousands separators.
  std::string caption() const;
  friend bool operator==(const ModelStats&, const ModelStats&) = default;
};

struct RunReport {
  std::string place;
  scene::Figure figure;
  ModelStats stats;
  std::vector<std::pair<std::string, double>> stage_ms;
  std::vector<std::string> warnings;

  /// One-line JSON log record: stats, stage timings and warnings.
  std::string log_line() const;
};

struct Providers {
  std::shared_ptr<providers::Transport> transport;
  std::shared_ptr<providers::Geocoder> geocoder;
  std::shared_ptr<providers::ElevationClient> elevation;
  std::shared_ptr<providers::OverpassClient> overpass;

  /// Clients sharing one transport, with polite live-network defaults.
  static Providers over(std::shared_ptr<providers::Transport> transport, const PipelineConfig& config,
                        bool polite = true);
  /// Replay from fixture_dir when offline, otherwise live (recording into
  /// fixture_dir when `record` is set).
  static Providers for_config(const PipelineConfig& config, bool record = false);
};

using Deadline = std::optional<std::chrono::steady_clock::time_point>;

class Pipeline {
public:
  Pipeline(PipelineConfig config, Providers providers);

  RunReport generate(std::string_view place, std::string_view api_key, Deadline deadline = std::nullopt) const;

  const PipelineConfig& config() const { return config_; }
  const Providers& providers() const { return providers_; }

private:
  PipelineConfig config_;
  Providers providers_;
  std::shared_ptr<const providers::HeightIndex> heights_;
};

/// Library entry point: builds providers from the config and runs once.
RunReport generate(std::string_view place, std::string_view api_key, const PipelineConfig& config);

std::string cache_key(std::string_view place, const PipelineConfig& config);

/// In-memory TTL cache of serialized figures. Readers share a lock; inserts
/// replace the stored pointer atomically.
class FigureCache {
public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  explicit FigureCache(std::chrono::duration<double> ttl, Clock clock = [] { return std::chrono::steady_clock::now(); });

  std::shared_ptr<const std::string> lookup(const std::string& key) const;
  void insert(const std::string& key, std::string bytes);
  /// Entries that are still fresh.
  std::size_t size() const;

private:
  struct Entry {
    std::shared_ptr<const std::string> bytes;
    std::chrono::steady_clock::time_point stored;
  };
  std::chrono::duration<double> ttl_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> entries_;
};

}  // namespace cenergy::pipeline
