#pragma once

// Shared helpers for the unit and acceptance suites: fixture paths, a
// scriptable fake transport and hand-rolled random generators.

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cenergy/geometry.hpp"
#include "cenergy/providers.hpp"
#include "cenergy/raster.hpp"

namespace cenergy::test_support {

inline std::filesystem::path data_dir() { return CENERGY_TEST_DATA; }
inline std::filesystem::path fixture_dir() { return data_dir() / "testville"; }
inline std::filesystem::path golden_path() { return data_dir() / "testville_golden.json"; }

inline std::string read_file(const std::filesystem::path& p)
{
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Answers requests from a queue of canned responses, or from a handler.
class FakeTransport : public providers::Transport {
public:
  using Handler = std::function<providers::HttpResponse(const providers::HttpRequest&)>;

  FakeTransport() = default;
  explicit FakeTransport(Handler h) : handler_(std::move(h)) {}

  void push(int status, std::string body) { queue_.push_back({status, std::move(body)}); }

  providers::HttpResponse send(const providers::HttpRequest& request) override
  {
    std::lock_guard lock(mutex_);
    seen_.push_back(request);
    if (handler_) return handler_(request);
    if (queue_.empty()) throw Error(ErrorKind::Upstream, "fake transport: no response queued");
    auto r = queue_.front();
    queue_.pop_front();
    return r;
  }

  std::vector<providers::HttpRequest> seen() const
  {
    std::lock_guard lock(mutex_);
    return seen_;
  }

private:
  Handler handler_;
  std::deque<providers::HttpResponse> queue_;
  mutable std::mutex mutex_;
  std::vector<providers::HttpRequest> seen_;
};

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi)
{
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// rows x cols grid over a small geographic window; each pixel is nodata with
/// probability `p_nodata`.
inline raster::DemGrid random_grid(Rng& rng, std::size_t rows, std::size_t cols, double p_nodata)
{
  raster::DemGrid g;
  g.rows = rows;
  g.cols = cols;
  g.dlon = uniform(rng, 1e-4, 1e-3);
  g.dlat = uniform(rng, 1e-4, 1e-3);
  g.lon0 = uniform(rng, -170.0, 170.0);
  g.lat0 = uniform(rng, -70.0, 70.0);
  g.nodata = -32768.0f;
  g.values.resize(rows * cols);
  std::bernoulli_distribution hole(p_nodata);
  for (auto& v : g.values) v = hole(rng) ? *g.nodata : static_cast<float>(uniform(rng, -50.0, 2500.0));
  return g;
}

/// Star-shaped polygon: sorted random angles with random radii around the origin.
inline geometry::Ring2 random_star_polygon(Rng& rng, std::size_t n, double scale = 50.0)
{
  std::vector<double> angles(n);
  for (;;) {
    for (auto& a : angles) a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    std::sort(angles.begin(), angles.end());
    bool spread = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double next = i + 1 < n ? angles[i + 1] : angles[0] + 2.0 * std::numbers::pi;
      if (next - angles[i] < 1e-3 || next - angles[i] >= std::numbers::pi) spread = false;
    }
    if (spread) break;
  }
  geometry::Ring2 ring;
  for (double a : angles) {
    const double r = uniform(rng, 0.2, 1.0) * scale;
    ring.push_back({r * std::cos(a), r * std::sin(a)});
  }
  return ring;
}

inline bool ring_is_simple(const geometry::Ring2& ring)
{
  try {
    geometry::check_simple(ring);
    return true;
  } catch (const Error&) {
    return false;
  }
}

/// Random points untangled by 2-opt moves until no two edges cross. Produces
/// irregular, often highly concave, simple polygons.
inline geometry::Ring2 random_two_opt_polygon(Rng& rng, std::size_t n, double scale = 50.0)
{
  for (;;) {
    geometry::Ring2 ring(n);
    for (auto& p : ring) p = {uniform(rng, -scale, scale), uniform(rng, -scale, scale)};
    for (int round = 0; round < 10000; ++round) {
      bool changed = false;
      for (std::size_t i = 0; i < n && !changed; ++i) {
        for (std::size_t j = i + 2; j < n && !changed; ++j) {
          if (i == 0 && j == n - 1) continue;
          const auto& a = ring[i];
          const auto& b = ring[i + 1];
          const auto& c = ring[j];
          const auto& d = ring[(j + 1) % n];
          if (geometry::detail::segments_intersect(a, b, c, d)) {
            std::reverse(ring.begin() + static_cast<std::ptrdiff_t>(i) + 1, ring.begin() + static_cast<std::ptrdiff_t>(j) + 1);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    if (ring_is_simple(ring)) {
      if (uniform_index(rng, 0, 1) == 1) std::reverse(ring.begin(), ring.end());
      return ring;
    }
  }
}

/// Triangle area as a plain cross product, for area bookkeeping in tests.
inline double triangle_area(const geometry::Vec2& a, const geometry::Vec2& b, const geometry::Vec2& c)
{
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

/// Brute-force terrain mesh expectation: every valid pixel is a vertex; every
/// candidate triangle of every cell is emitted iff its three pixels are valid.
struct MeshCounts {
  std::size_t vertices = 0;
  std::size_t triangles = 0;
};

inline MeshCounts brute_force_counts(const raster::DemGrid& g)
{
  MeshCounts c;
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t col = 0; col < g.cols; ++col) c.vertices += g.valid(r, col) ? 1 : 0;
  for (std::size_t r = 0; r + 1 < g.rows; ++r) {
    for (std::size_t col = 0; col + 1 < g.cols; ++col) {
      const bool tl = g.valid(r, col), tr = g.valid(r, col + 1);
      const bool bl = g.valid(r + 1, col), br = g.valid(r + 1, col + 1);
      c.triangles += (tl && bl && br) ? 1 : 0;
      c.triangles += (tl && br && tr) ? 1 : 0;
    }
  }
  return c;
}

}  // namespace cenergy::test_support
