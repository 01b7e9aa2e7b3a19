#pragma once

// Figure documents (data + layout, mesh3d / scatter3d traces) and their
// canonical JSON form: sorted keys, no whitespace, shortest round-trip numbers,
// line breaks encoded as null.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cenergy/error.hpp"
#include "cenergy/geometry.hpp"

namespace cenergy::scene {

using json = nlohmann::json;

inline constexpr std::string_view kTerrainName = "Terrain";
inline constexpr std::string_view kBuildingsName = "Buildings";
inline constexpr std::string_view kRoadsName = "Roads";
inline constexpr std::string_view kPowerName = "Power lines";

inline constexpr std::string_view kRoadColor = "#1f77b4";
inline constexpr std::string_view kPowerColor = "#d62728";
inline constexpr std::string_view kBuildingColor = "#c8c8c8";
inline constexpr std::string_view kTerrainColorscale = "Viridis";
inline constexpr double kRoadWidth = 3.0;
inline constexpr double kPowerWidth = 4.0;

struct MeshTrace {
  std::string name;
  std::vector<double> x, y, z;
  std::vector<std::int64_t> i, j, k;
  std::optional<std::string> color;
  std::optional<std::vector<double>> intensity;
  std::optional<std::string> colorscale;
  json extras = json::object();

  friend bool operator==(const MeshTrace&, const MeshTrace&) = default;
};

struct LineStyle {
  std::optional<std::string> color;
  std::optional<double> width;
  json extras = json::object();

  friend bool operator==(const LineStyle&, const LineStyle&) = default;
};

/// scatter3d in "lines" mode; nullopt entries break the line.
struct LinesTrace {
  std::string name;
  std::vector<std::optional<double>> x, y, z;
  std::optional<LineStyle> line;
  json extras = json::object();

  friend bool operator==(const LinesTrace&, const LinesTrace&) = default;
};

/// Any trace this library does not model; kept verbatim.
struct OpaqueTrace {
  json value;
  friend bool operator==(const OpaqueTrace&, const OpaqueTrace&) = default;
};

using Trace = std::variant<MeshTrace, LinesTrace, OpaqueTrace>;

struct SceneLayout {
  std::optional<std::string> aspectmode;
  json extras = json::object();
  friend bool operator==(const SceneLayout&, const SceneLayout&) = default;
};

struct Layout {
  std::optional<std::string> title;
  std::optional<SceneLayout> scene;
  json extras = json::object();
  friend bool operator==(const Layout&, const Layout&) = default;
};

struct Figure {
  std::vector<Trace> data;
  std::optional<Layout> layout;
  json extras = json::object();
  friend bool operator==(const Figure&, const Figure&) = default;
};

inline const std::string* trace_name(const Trace& t)
{
  if (auto m = std::get_if<MeshTrace>(&t)) return &m->name;
  if (auto l = std::get_if<LinesTrace>(&t)) return &l->name;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Trace builders

inline MeshTrace mesh_trace(const geometry::TriMesh& mesh, std::string name)
{
  mesh.validate();
  MeshTrace t;
  t.name = std::move(name);
  t.x.reserve(mesh.vertices.size());
  t.y.reserve(mesh.vertices.size());
  t.z.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) {
    t.x.push_back(v.x);
    t.y.push_back(v.y);
    t.z.push_back(v.z);
  }
  for (const auto& tri : mesh.triangles) {
    t.i.push_back(tri.a);
    t.j.push_back(tri.b);
    t.k.push_back(tri.c);
  }
  return t;
}

/// Terrain surface colored by elevation.
inline MeshTrace terrain_trace(const geometry::TriMesh& mesh, std::string colorscale = std::string(kTerrainColorscale))
{
  if (mesh.empty()) throw Error(ErrorKind::InvalidArgument, "terrain mesh is empty");
  MeshTrace t = mesh_trace(mesh, std::string(kTerrainName));
  t.intensity = t.z;
  t.colorscale = std::move(colorscale);
  return t;
}

inline MeshTrace buildings_trace(const geometry::TriMesh& mesh, std::string color = std::string(kBuildingColor))
{
  MeshTrace t = mesh_trace(mesh, std::string(kBuildingsName));
  t.color = std::move(color);
  return t;
}

/// All polylines of one kind as a single trace, separated by null breaks.
inline LinesTrace lines_trace(std::span<const geometry::Polyline3> lines, geometry::LineKind kind)
{
  const bool road = kind == geometry::LineKind::Road;
  LinesTrace t;
  t.name = std::string(road ? kRoadsName : kPowerName);
  t.line = LineStyle{std::string(road ? kRoadColor : kPowerColor), road ? kRoadWidth : kPowerWidth, json::object()};
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (lines[n].points.size() < 2) throw Error(ErrorKind::InvalidArgument, "polyline needs at least 2 points");
    if (n > 0) {
      t.x.emplace_back();
      t.y.emplace_back();
      t.z.emplace_back();
    }
    for (const auto& p : lines[n].points) {
      t.x.emplace_back(p.x);
      t.y.emplace_back(p.y);
      t.z.emplace_back(p.z);
    }
  }
  return t;
}

/// The four layers in their fixed order: terrain, buildings, roads, power lines.
inline Figure make_figure(std::string title, MeshTrace terrain, MeshTrace buildings, LinesTrace roads, LinesTrace power)
{
  Figure fig;
  fig.data.emplace_back(std::move(terrain));
  fig.data.emplace_back(std::move(buildings));
  fig.data.emplace_back(std::move(roads));
  fig.data.emplace_back(std::move(power));
  Layout layout;
  layout.title = std::move(title);
  layout.scene = SceneLayout{"data", json::object()};
  fig.layout = std::move(layout);
  return fig;
}

/// Throws unless the figure has exactly the four named layers in order.
inline void check_layers(const Figure& fig)
{
  static constexpr std::string_view names[] = {kTerrainName, kBuildingsName, kRoadsName, kPowerName};
  if (fig.data.size() != 4) throw Error(ErrorKind::Schema, "figure must have exactly 4 traces");
  for (std::size_t n = 0; n < 4; ++n) {
    const auto* name = trace_name(fig.data[n]);
    const bool mesh_expected = n < 2;
    const bool kind_ok = mesh_expected ? std::holds_alternative<MeshTrace>(fig.data[n])
                                       : std::holds_alternative<LinesTrace>(fig.data[n]);
    if (!name || *name != names[n] || !kind_ok)
      throw Error(ErrorKind::Schema, "trace " + std::to_string(n) + " must be '" + std::string(names[n]) + "'");
  }
}

// ---------------------------------------------------------------------------
// Canonical JSON

namespace detail {

inline void write_number(std::string& out, double v)
{
  if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "figure contains a non-finite number");
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

inline void write_string(std::string& out, std::string_view s)
{
  static constexpr char hex[] = "0123456789abcdef";
  out.push_back('"');
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          out += "\\u00";
          out.push_back(hex[c >> 4]);
          out.push_back(hex[c & 0xf]);
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  out.push_back('"');
}

inline void write_json(std::string& out, const json& v)
{
  switch (v.type()) {
    case json::value_t::null: out += "null"; break;
    case json::value_t::boolean: out += v.get<bool>() ? "true" : "false"; break;
    case json::value_t::number_integer: out += std::to_string(v.get<std::int64_t>()); break;
    case json::value_t::number_unsigned: out += std::to_string(v.get<std::uint64_t>()); break;
    case json::value_t::number_float: write_number(out, v.get<double>()); break;
    case json::value_t::string: write_string(out, v.get_ref<const std::string&>()); break;
    case json::value_t::array: {
      out.push_back('[');
      bool first = true;
      for (const auto& e : v) {
        if (!first) out.push_back(',');
        first = false;
        write_json(out, e);
      }
      out.push_back(']');
      break;
    }
    case json::value_t::object: {
      // nlohmann's default object is a std::map, so iteration is key-sorted.
      out.push_back('{');
      bool first = true;
      for (const auto& [key, e] : v.items()) {
        if (!first) out.push_back(',');
        first = false;
        write_string(out, key);
        out.push_back(':');
        write_json(out, e);
      }
      out.push_back('}');
      break;
    }
    default: throw Error(ErrorKind::InvalidArgument, "unsupported JSON value in figure");
  }
}

inline json numbers(const std::vector<double>& v)
{
  json a = json::array();
  for (double d : v) {
    if (!std::isfinite(d)) throw Error(ErrorKind::InvalidArgument, "figure contains a non-finite number");
    a.push_back(d);
  }
  return a;
}

inline json nullable_numbers(const std::vector<std::optional<double>>& v)
{
  json a = json::array();
  for (const auto& d : v) {
    if (!d) a.push_back(nullptr);
    else if (!std::isfinite(*d)) throw Error(ErrorKind::InvalidArgument, "figure contains a non-finite number");
    else a.push_back(*d);
  }
  return a;
}

inline json merged(json base, const json& extras)
{
  for (const auto& [k, v] : extras.items())
    if (!base.contains(k)) base[k] = v;
  return base;
}

inline void check_mesh(const MeshTrace& t)
{
  if (t.x.size() != t.y.size() || t.x.size() != t.z.size())
    throw Error(ErrorKind::InvalidArgument, "mesh trace '" + t.name + "': x/y/z length mismatch");
  if (t.i.size() != t.j.size() || t.i.size() != t.k.size())
    throw Error(ErrorKind::InvalidArgument, "mesh trace '" + t.name + "': i/j/k length mismatch");
  const auto n = static_cast<std::int64_t>(t.x.size());
  for (const auto* idx : {&t.i, &t.j, &t.k})
    for (auto v : *idx)
      if (v < 0 || v >= n) throw Error(ErrorKind::InvalidArgument, "mesh trace '" + t.name + "': index out of range");
  if (t.intensity && t.intensity->size() != t.x.size())
    throw Error(ErrorKind::InvalidArgument, "mesh trace '" + t.name + "': intensity length mismatch");
}

inline void check_lines(const LinesTrace& t)
{
  if (t.x.size() != t.y.size() || t.x.size() != t.z.size())
    throw Error(ErrorKind::InvalidArgument, "lines trace '" + t.name + "': x/y/z length mismatch");
  for (std::size_t n = 0; n < t.x.size(); ++n)
    if (t.x[n].has_value() != t.y[n].has_value() || t.x[n].has_value() != t.z[n].has_value())
      throw Error(ErrorKind::InvalidArgument, "lines trace '" + t.name + "': misaligned break markers");
}

inline json to_json(const Trace& trace)
{
  if (const auto* m = std::get_if<MeshTrace>(&trace)) {
    check_mesh(*m);
    json o = json::object();
    o["type"] = "mesh3d";
    o["name"] = m->name;
    o["x"] = numbers(m->x);
    o["y"] = numbers(m->y);
    o["z"] = numbers(m->z);
    o["i"] = m->i;
    o["j"] = m->j;
    o["k"] = m->k;
    if (m->color) o["color"] = *m->color;
    if (m->intensity) o["intensity"] = numbers(*m->intensity);
    if (m->colorscale) o["colorscale"] = *m->colorscale;
    return merged(std::move(o), m->extras);
  }
  if (const auto* l = std::get_if<LinesTrace>(&trace)) {
    check_lines(*l);
    json o = json::object();
    o["type"] = "scatter3d";
    o["mode"] = "lines";
    o["name"] = l->name;
    o["x"] = nullable_numbers(l->x);
    o["y"] = nullable_numbers(l->y);
    o["z"] = nullable_numbers(l->z);
    if (l->line) {
      json line = json::object();
      if (l->line->color) line["color"] = *l->line->color;
      if (l->line->width) line["width"] = *l->line->width;
      o["line"] = merged(std::move(line), l->line->extras);
    }
    return merged(std::move(o), l->extras);
  }
  return std::get<OpaqueTrace>(trace).value;
}

inline json to_json(const Figure& fig)
{
  json o = json::object();
  json data = json::array();
  for (const auto& t : fig.data) data.push_back(to_json(t));
  o["data"] = std::move(data);
  if (fig.layout) {
    json layout = json::object();
    if (fig.layout->title) layout["title"] = *fig.layout->title;
    if (fig.layout->scene) {
      json scene = json::object();
      if (fig.layout->scene->aspectmode) scene["aspectmode"] = *fig.layout->scene->aspectmode;
      layout["scene"] = merged(std::move(scene), fig.layout->scene->extras);
    }
    o["layout"] = merged(std::move(layout), fig.layout->extras);
  }
  return merged(std::move(o), fig.extras);
}

// Remaining keys of `obj` once `known` are removed.
inline json rest(const json& obj, std::initializer_list<std::string_view> known)
{
  json out = json::object();
  for (const auto& [k, v] : obj.items()) {
    bool skip = false;
    for (auto kk : known) skip = skip || k == kk;
    if (!skip) out[k] = v;
  }
  return out;
}

inline bool number_array(const json& v, std::vector<double>& out)
{
  if (!v.is_array()) return false;
  out.clear();
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number()) return false;
    out.push_back(e.get<double>());
  }
  return true;
}

inline bool index_array(const json& v, std::vector<std::int64_t>& out)
{
  if (!v.is_array()) return false;
  out.clear();
  out.reserve(v.size());
  for (const auto& e : v) {
    if (e.is_number_unsigned()) {
      if (e.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) return false;
      out.push_back(static_cast<std::int64_t>(e.get<std::uint64_t>()));
    } else if (e.is_number_integer()) {
      out.push_back(e.get<std::int64_t>());
    } else {
      return false;
    }
  }
  return true;
}

inline bool nullable_array(const json& v, std::vector<std::optional<double>>& out)
{
  if (!v.is_array()) return false;
  out.clear();
  out.reserve(v.size());
  for (const auto& e : v) {
    if (e.is_null()) out.emplace_back();
    else if (e.is_number()) out.emplace_back(e.get<double>());
    else return false;
  }
  return true;
}

inline std::optional<MeshTrace> mesh_from_json(const json& o)
{
  MeshTrace t;
  if (!o.contains("name") || !o["name"].is_string()) return std::nullopt;
  t.name = o["name"].get<std::string>();
  for (auto [key, dst] : {std::pair{"x", &t.x}, std::pair{"y", &t.y}, std::pair{"z", &t.z}})
    if (!o.contains(key) || !number_array(o[key], *dst)) return std::nullopt;
  for (auto [key, dst] : {std::pair{"i", &t.i}, std::pair{"j", &t.j}, std::pair{"k", &t.k}})
    if (!o.contains(key) || !index_array(o[key], *dst)) return std::nullopt;
  if (o.contains("color")) {
    if (!o["color"].is_string()) return std::nullopt;
    t.color = o["color"].get<std::string>();
  }
  if (o.contains("intensity")) {
    std::vector<double> v;
    if (!number_array(o["intensity"], v)) return std::nullopt;
    t.intensity = std::move(v);
  }
  if (o.contains("colorscale")) {
    if (!o["colorscale"].is_string()) return std::nullopt;
    t.colorscale = o["colorscale"].get<std::string>();
  }
  t.extras = rest(o, {"type", "name", "x", "y", "z", "i", "j", "k", "color", "intensity", "colorscale"});
  return t;
}

inline std::optional<LinesTrace> lines_from_json(const json& o)
{
  LinesTrace t;
  if (!o.contains("mode") || o["mode"] != "lines") return std::nullopt;
  if (!o.contains("name") || !o["name"].is_string()) return std::nullopt;
  t.name = o["name"].get<std::string>();
  for (auto [key, dst] : {std::pair{"x", &t.x}, std::pair{"y", &t.y}, std::pair{"z", &t.z}})
    if (!o.contains(key) || !nullable_array(o[key], *dst)) return std::nullopt;
  if (o.contains("line")) {
    const auto& line = o["line"];
    if (!line.is_object()) return std::nullopt;
    LineStyle style;
    if (line.contains("color")) {
      if (!line["color"].is_string()) return std::nullopt;
      style.color = line["color"].get<std::string>();
    }
    if (line.contains("width")) {
      if (!line["width"].is_number()) return std::nullopt;
      style.width = line["width"].get<double>();
    }
    style.extras = rest(line, {"color", "width"});
    t.line = std::move(style);
  }
  t.extras = rest(o, {"type", "mode", "name", "x", "y", "z", "line"});
  return t;
}

inline Trace trace_from_json(const json& o)
{
  if (o.is_object() && o.contains("type")) {
    if (o["type"] == "mesh3d")
      if (auto m = mesh_from_json(o)) return *m;
    if (o["type"] == "scatter3d")
      if (auto l = lines_from_json(o)) return *l;
  }
  return OpaqueTrace{o};
}

}  // namespace detail

/// Canonical JSON encoding of a figure.
inline std::string serialize(const Figure& fig)
{
  std::string out;
  detail::write_json(out, detail::to_json(fig));
  return out;
}

/// Canonical encoding of an arbitrary JSON value (sorted keys, shortest numbers).
inline std::string canonical_dump(const json& value)
{
  std::string out;
  detail::write_json(out, value);
  return out;
}

inline Figure deserialize(std::string_view bytes)
{
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("malformed figure JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::Schema, "figure must be a JSON object");
  if (!doc.contains("data")) throw Error(ErrorKind::Schema, "figure has no \"data\" member");
  if (!doc["data"].is_array()) throw Error(ErrorKind::Schema, "figure \"data\" must be an array");

  Figure fig;
  for (const auto& t : doc["data"]) fig.data.push_back(detail::trace_from_json(t));
  if (doc.contains("layout")) {
    const auto& lj = doc["layout"];
    if (!lj.is_object()) throw Error(ErrorKind::Schema, "figure \"layout\" must be an object");
    Layout layout;
    std::vector<std::string_view> known;
    if (lj.contains("title") && lj["title"].is_string()) {
      layout.title = lj["title"].get<std::string>();
      known.push_back("title");
    }
    if (lj.contains("scene") && lj["scene"].is_object()) {
      const auto& sj = lj["scene"];
      SceneLayout scene;
      if (sj.contains("aspectmode") && sj["aspectmode"].is_string()) {
        scene.aspectmode = sj["aspectmode"].get<std::string>();
        scene.extras = detail::rest(sj, {"aspectmode"});
      } else {
        scene.extras = sj;
      }
      layout.scene = std::move(scene);
      known.push_back("scene");
    }
    layout.extras = json::object();
    for (const auto& [k, v] : lj.items())
      if (std::find(known.begin(), known.end(), k) == known.end()) layout.extras[k] = v;
    fig.layout = std::move(layout);
  }
  fig.extras = detail::rest(doc, {"data", "layout"});
  return fig;
}

}  // namespace cenergy::scene
