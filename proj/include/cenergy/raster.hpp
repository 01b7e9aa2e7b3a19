#pragma once

// Single-band elevation rasters: a GeoTIFF subset decoder and bilinear sampling.
//
// Supported input is what COP30 exports look like: classic TIFF (either byte
// order), one band, int16 or float32 samples, strips or tiles, no compression
// or deflate. Geo-referencing comes from ModelPixelScale + ModelTiepoint and is
// assumed to be EPSG:4326 with PixelIsArea semantics.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "cenergy/error.hpp"
#include "cenergy/geodesy.hpp"

namespace cenergy::raster {

using geodesy::GeoPoint;
using geodesy::MercatorPoint;

/// Row-major elevation grid. (lon0, lat0) is the center of pixel [0,0]; rows
/// run north to south, columns west to east.
struct DemGrid {
  double lon0 = 0.0;
  double lat0 = 0.0;
  double dlon = 0.0;
  double dlat = 0.0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;
  std::optional<float> nodata;

  bool is_nodata(float v) const
  {
    if (!nodata) return false;
    if (std::isnan(*nodata)) return std::isnan(v);
    return v == *nodata;
  }
  float at(std::size_t row, std::size_t col) const { return values[row * cols + col]; }
  bool valid(std::size_t row, std::size_t col) const { return !is_nodata(at(row, col)); }

  GeoPoint center(std::size_t row, std::size_t col) const
  {
    return {lon0 + static_cast<double>(col) * dlon, lat0 - static_cast<double>(row) * dlat};
  }

  std::size_t valid_count() const
  {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [this](float v) { return !is_nodata(v); }));
  }

  /// (min, max) over valid pixels; nullopt when every pixel is nodata.
  std::optional<std::pair<float, float>> valid_range() const
  {
    std::optional<std::pair<float, float>> out;
    for (float v : values) {
      if (is_nodata(v)) continue;
      if (!out) out = std::pair{v, v};
      else out = std::pair{std::min(out->first, v), std::max(out->second, v)};
    }
    return out;
  }

  void validate() const
  {
    if (rows < 2 || cols < 2)
      throw Error(ErrorKind::InvalidArgument, "grid needs at least 2 rows and 2 columns");
    if (values.size() != rows * cols)
      throw Error(ErrorKind::InvalidArgument, "grid value count does not match rows*cols");
    if (!(dlon > 0.0) || !(dlat > 0.0) || !std::isfinite(dlon) || !std::isfinite(dlat))
      throw Error(ErrorKind::InvalidArgument, "grid pixel size must be positive");
    if (!std::isfinite(lon0) || !std::isfinite(lat0))
      throw Error(ErrorKind::InvalidArgument, "grid origin must be finite");
  }
};

enum class SampleFormat { Integer, Float };
enum class Layout { Strips, Tiles };
enum class Compression { None, Deflate };

struct GeoTiffMeta {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint16_t bits_per_sample = 0;
  SampleFormat sample_format = SampleFormat::Integer;
  double pixel_scale_x = 0.0;
  double pixel_scale_y = 0.0;
  double tie_raster_x = 0.0;
  double tie_raster_y = 0.0;
  double tie_lon = 0.0;
  double tie_lat = 0.0;
  std::optional<float> nodata;
  Layout layout = Layout::Strips;
  Compression compression = Compression::None;
};

namespace detail {

enum TiffTag : std::uint16_t {
  kImageWidth = 256,
  kImageLength = 257,
  kBitsPerSample = 258,
  kCompression = 259,
  kStripOffsets = 273,
  kSamplesPerPixel = 277,
  kRowsPerStrip = 278,
  kStripByteCounts = 279,
  kPredictor = 317,
  kTileWidth = 322,
  kTileLength = 323,
  kTileOffsets = 324,
  kTileByteCounts = 325,
  kSampleFormat = 339,
  kModelPixelScale = 33550,
  kModelTiepoint = 33922,
  kGdalNodata = 42113,
};

class ByteReader {
public:
  ByteReader(std::span<const std::uint8_t> bytes, bool little) : bytes_(bytes), little_(little) {}

  std::size_t size() const { return bytes_.size(); }

  void require(std::uint64_t offset, std::uint64_t len) const
  {
    if (offset > bytes_.size() || len > bytes_.size() - offset)
      throw Error(ErrorKind::Parse, "truncated TIFF: read past end of data");
  }

  std::uint64_t uint(std::uint64_t offset, unsigned width) const
  {
    require(offset, width);
    std::uint64_t v = 0;
    for (unsigned i = 0; i < width; ++i) {
      const unsigned shift = little_ ? 8 * i : 8 * (width - 1 - i);
      v |= static_cast<std::uint64_t>(bytes_[offset + i]) << shift;
    }
    return v;
  }
  std::uint16_t u16(std::uint64_t off) const { return static_cast<std::uint16_t>(uint(off, 2)); }
  std::uint32_t u32(std::uint64_t off) const { return static_cast<std::uint32_t>(uint(off, 4)); }
  float f32(std::uint64_t off) const { return std::bit_cast<float>(u32(off)); }
  double f64(std::uint64_t off) const { return std::bit_cast<double>(uint(off, 8)); }
  std::span<const std::uint8_t> slice(std::uint64_t off, std::uint64_t len) const
  {
    require(off, len);
    return bytes_.subspan(off, len);
  }

private:
  std::span<const std::uint8_t> bytes_;
  bool little_;
};

struct IfdEntry {
  std::uint16_t type = 0;
  std::uint32_t count = 0;
  std::uint64_t value_offset = 0;  // absolute offset of the first value
};

inline unsigned type_size(std::uint16_t type)
{
  switch (type) {
    case 1: case 2: case 6: case 7: return 1;
    case 3: case 8: return 2;
    case 4: case 9: case 11: return 4;
    case 5: case 10: case 12: return 8;
    default: return 0;
  }
}

inline std::vector<double> read_numbers(const ByteReader& r, const IfdEntry& e)
{
  std::vector<double> out;
  out.reserve(e.count);
  const unsigned sz = type_size(e.type);
  if (sz == 0) throw Error(ErrorKind::Parse, "unsupported TIFF field type " + std::to_string(e.type));
  r.require(e.value_offset, static_cast<std::uint64_t>(e.count) * sz);
  for (std::uint32_t i = 0; i < e.count; ++i) {
    const std::uint64_t off = e.value_offset + static_cast<std::uint64_t>(i) * sz;
    switch (e.type) {
      case 1: case 7: out.push_back(static_cast<double>(r.uint(off, 1))); break;
      case 6: out.push_back(static_cast<double>(static_cast<std::int8_t>(r.uint(off, 1)))); break;
      case 3: out.push_back(r.u16(off)); break;
      case 8: out.push_back(static_cast<std::int16_t>(r.u16(off))); break;
      case 4: out.push_back(r.u32(off)); break;
      case 9: out.push_back(static_cast<std::int32_t>(r.u32(off))); break;
      case 11: out.push_back(r.f32(off)); break;
      case 12: out.push_back(r.f64(off)); break;
      case 5: {
        const double den = r.u32(off + 4);
        out.push_back(den == 0 ? 0.0 : r.u32(off) / den);
        break;
      }
      case 10: {
        const double den = static_cast<std::int32_t>(r.u32(off + 4));
        out.push_back(den == 0 ? 0.0 : static_cast<std::int32_t>(r.u32(off)) / den);
        break;
      }
      default: throw Error(ErrorKind::Parse, "unsupported TIFF field type");
    }
  }
  return out;
}

inline std::string read_ascii(const ByteReader& r, const IfdEntry& e)
{
  auto raw = r.slice(e.value_offset, e.count);
  std::string s(raw.begin(), raw.end());
  while (!s.empty() && (s.back() == '\0' || s.back() == ' ')) s.pop_back();
  return s;
}

inline std::vector<std::uint8_t> inflate_chunk(std::span<const std::uint8_t> src, std::size_t expected)
{
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw Error(ErrorKind::Parse, "zlib init failed");
  zs.next_in = const_cast<Bytef*>(src.data());
  zs.avail_in = static_cast<uInt>(src.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = Z_OK;
  while (rc == Z_OK && zs.avail_out > 0) rc = inflate(&zs, Z_NO_FLUSH);
  const std::size_t produced = expected - zs.avail_out;
  inflateEnd(&zs);
  if (rc != Z_OK && rc != Z_STREAM_END)
    throw Error(ErrorKind::Parse, "corrupt deflate data in TIFF chunk");
  if (produced < expected)
    throw Error(ErrorKind::Parse, "truncated TIFF chunk: decompressed data too short");
  return out;
}

}  // namespace detail

/// Reads the header of a GeoTIFF and returns the metadata plus the raw chunk
/// layout. Most callers want decode_geotiff.
inline GeoTiffMeta read_geotiff_meta(std::span<const std::uint8_t> bytes,
                                     std::map<std::uint16_t, detail::IfdEntry>* entries_out = nullptr)
{
  using namespace detail;
  if (bytes.size() < 8) throw Error(ErrorKind::Parse, "not a TIFF");
  bool little = false;
  if (bytes[0] == 'I' && bytes[1] == 'I') little = true;
  else if (bytes[0] == 'M' && bytes[1] == 'M') little = false;
  else throw Error(ErrorKind::Parse, "not a TIFF");
  ByteReader r(bytes, little);
  const auto magic = r.u16(2);
  if (magic == 43) throw Error(ErrorKind::Parse, "BigTIFF is not supported");
  if (magic != 42) throw Error(ErrorKind::Parse, "not a TIFF");

  const std::uint64_t ifd = r.u32(4);
  const std::uint16_t n = r.u16(ifd);
  std::map<std::uint16_t, IfdEntry> entries;
  for (std::uint16_t i = 0; i < n; ++i) {
    const std::uint64_t at = ifd + 2 + 12ull * i;
    IfdEntry e;
    const auto tag = r.u16(at);
    e.type = r.u16(at + 2);
    e.count = r.u32(at + 4);
    const unsigned sz = type_size(e.type);
    const std::uint64_t total = static_cast<std::uint64_t>(e.count) * sz;
    e.value_offset = (sz != 0 && total <= 4) ? at + 8 : r.u32(at + 8);
    entries[tag] = e;
  }
  (void)r.u32(ifd + 2 + 12ull * n);  // next-IFD offset must be present even though only the first IFD is read

  auto number = [&](std::uint16_t tag, std::optional<double> fallback) -> double {
    auto it = entries.find(tag);
    if (it == entries.end()) {
      if (!fallback) throw Error(ErrorKind::Parse, "missing required TIFF tag " + std::to_string(tag));
      return *fallback;
    }
    auto v = read_numbers(r, it->second);
    if (v.empty()) throw Error(ErrorKind::Parse, "empty TIFF tag " + std::to_string(tag));
    return v.front();
  };

  GeoTiffMeta meta;
  meta.width = static_cast<std::uint32_t>(number(kImageWidth, std::nullopt));
  meta.height = static_cast<std::uint32_t>(number(kImageLength, std::nullopt));
  if (static_cast<std::uint64_t>(meta.width) * meta.height == 0)
    throw Error(ErrorKind::Parse, "TIFF has zero pixels");
  if (number(kSamplesPerPixel, 1.0) != 1.0)
    throw Error(ErrorKind::Parse, "unsupported band count");
  meta.bits_per_sample = static_cast<std::uint16_t>(number(kBitsPerSample, 1.0));
  const auto fmt = static_cast<int>(number(kSampleFormat, 1.0));
  if (fmt == 3) meta.sample_format = SampleFormat::Float;
  else if (fmt == 2) meta.sample_format = SampleFormat::Integer;
  else throw Error(ErrorKind::Parse, "unsupported sample format " + std::to_string(fmt));
  const bool ok_type = (meta.sample_format == SampleFormat::Integer && meta.bits_per_sample == 16) ||
                       (meta.sample_format == SampleFormat::Float && meta.bits_per_sample == 32);
  if (!ok_type) throw Error(ErrorKind::Parse, "unsupported sample type (need int16 or float32)");

  const auto comp = static_cast<int>(number(kCompression, 1.0));
  if (comp == 1) meta.compression = Compression::None;
  else if (comp == 8 || comp == 32946) meta.compression = Compression::Deflate;
  else throw Error(ErrorKind::Parse, "unsupported compression " + std::to_string(comp));
  if (number(kPredictor, 1.0) != 1.0) throw Error(ErrorKind::Parse, "unsupported predictor");

  if (entries.contains(kTileOffsets)) meta.layout = Layout::Tiles;
  else if (entries.contains(kStripOffsets)) meta.layout = Layout::Strips;
  else throw Error(ErrorKind::Parse, "TIFF has neither strips nor tiles");

  if (!entries.contains(kModelPixelScale) || !entries.contains(kModelTiepoint))
    throw Error(ErrorKind::Parse, "missing geo tags (ModelPixelScale/ModelTiepoint)");
  const auto scale = read_numbers(r, entries[kModelPixelScale]);
  const auto tie = read_numbers(r, entries[kModelTiepoint]);
  if (scale.size() < 2 || tie.size() < 6) throw Error(ErrorKind::Parse, "malformed geo tags");
  meta.pixel_scale_x = scale[0];
  meta.pixel_scale_y = scale[1];
  meta.tie_raster_x = tie[0];
  meta.tie_raster_y = tie[1];
  meta.tie_lon = tie[3];
  meta.tie_lat = tie[4];

  if (auto it = entries.find(kGdalNodata); it != entries.end()) {
    const std::string text = read_ascii(r, it->second);
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end == text.c_str()) throw Error(ErrorKind::Parse, "malformed GDAL_NODATA value '" + text + "'");
    meta.nodata = static_cast<float>(v);
  }
  if (entries_out) *entries_out = std::move(entries);
  return meta;
}

inline DemGrid decode_geotiff(std::span<const std::uint8_t> bytes)
{
  using namespace detail;
  std::map<std::uint16_t, IfdEntry> entries;
  const GeoTiffMeta meta = read_geotiff_meta(bytes, &entries);
  const bool little = bytes[0] == 'I';
  ByteReader r(bytes, little);
  const std::size_t bps = meta.bits_per_sample / 8;
  const std::size_t width = meta.width;
  const std::size_t height = meta.height;

  DemGrid grid;
  grid.rows = height;
  grid.cols = width;
  grid.values.assign(width * height, 0.0f);
  grid.nodata = meta.nodata;

  auto sample = [&](std::span<const std::uint8_t> chunk, std::size_t idx) -> float {
    ByteReader cr(chunk, little);
    if (meta.sample_format == SampleFormat::Float) return cr.f32(idx * 4);
    return static_cast<float>(static_cast<std::int16_t>(cr.u16(idx * 2)));
  };

  auto load_chunk = [&](std::uint64_t offset, std::uint64_t byte_count, std::size_t expected) {
    if (meta.compression == Compression::Deflate)
      return inflate_chunk(r.slice(offset, byte_count), expected);
    if (byte_count < expected) throw Error(ErrorKind::Parse, "truncated TIFF strip: byte count too small");
    auto raw = r.slice(offset, expected);
    return std::vector<std::uint8_t>(raw.begin(), raw.end());
  };

  auto numbers_of = [&](std::uint16_t tag) {
    auto it = entries.find(tag);
    if (it == entries.end()) throw Error(ErrorKind::Parse, "missing required TIFF tag " + std::to_string(tag));
    return read_numbers(r, it->second);
  };

  if (meta.layout == Layout::Strips) {
    const auto offsets = numbers_of(kStripOffsets);
    const auto counts = numbers_of(kStripByteCounts);
    std::size_t rows_per_strip = height;
    if (auto it = entries.find(kRowsPerStrip); it != entries.end()) {
      const auto v = read_numbers(r, it->second);
      if (!v.empty()) rows_per_strip = std::min<std::size_t>(static_cast<std::size_t>(v[0]), height);
    }
    if (rows_per_strip == 0) throw Error(ErrorKind::Parse, "RowsPerStrip is zero");
    const std::size_t strips = (height + rows_per_strip - 1) / rows_per_strip;
    if (offsets.size() < strips || counts.size() < strips)
      throw Error(ErrorKind::Parse, "truncated strips: fewer strip offsets than rows require");
    for (std::size_t s = 0; s < strips; ++s) {
      const std::size_t row0 = s * rows_per_strip;
      const std::size_t nrows = std::min(rows_per_strip, height - row0);
      const auto chunk = load_chunk(static_cast<std::uint64_t>(offsets[s]), static_cast<std::uint64_t>(counts[s]),
                                    nrows * width * bps);
      for (std::size_t i = 0; i < nrows * width; ++i) grid.values[row0 * width + i] = sample(chunk, i);
    }
  } else {
    const auto offsets = numbers_of(kTileOffsets);
    const auto counts = numbers_of(kTileByteCounts);
    const auto tw = static_cast<std::size_t>(numbers_of(kTileWidth).at(0));
    const auto th = static_cast<std::size_t>(numbers_of(kTileLength).at(0));
    if (tw == 0 || th == 0) throw Error(ErrorKind::Parse, "zero tile size");
    const std::size_t across = (width + tw - 1) / tw;
    const std::size_t down = (height + th - 1) / th;
    if (offsets.size() < across * down || counts.size() < across * down)
      throw Error(ErrorKind::Parse, "truncated tiles: fewer tile offsets than the image requires");
    for (std::size_t ty = 0; ty < down; ++ty) {
      for (std::size_t tx = 0; tx < across; ++tx) {
        const std::size_t t = ty * across + tx;
        const auto chunk = load_chunk(static_cast<std::uint64_t>(offsets[t]), static_cast<std::uint64_t>(counts[t]),
                                      tw * th * bps);
        for (std::size_t y = 0; y < th && ty * th + y < height; ++y)
          for (std::size_t x = 0; x < tw && tx * tw + x < width; ++x)
            grid.values[(ty * th + y) * width + tx * tw + x] = sample(chunk, y * tw + x);
      }
    }
  }

  grid.dlon = meta.pixel_scale_x;
  grid.dlat = meta.pixel_scale_y;
  // Tiepoint maps raster (I,J) to (X,Y); raster (0,0) is the outer corner of the first pixel.
  const double corner_lon = meta.tie_lon - meta.tie_raster_x * grid.dlon;
  const double corner_lat = meta.tie_lat + meta.tie_raster_y * grid.dlat;
  grid.lon0 = corner_lon + grid.dlon / 2.0;
  grid.lat0 = corner_lat - grid.dlat / 2.0;
  grid.validate();
  return grid;
}

inline DemGrid decode_geotiff(std::span<const char> bytes)
{
  return decode_geotiff(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

namespace detail {

// Snap fractional pixel coordinates that are within rounding noise of an integer,
// so sampling exactly at a pixel center returns the stored value.
inline double snap(double v)
{
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace detail

/// Bilinear elevation at p. Absent outside the pixel-center envelope or when
/// any of the four neighbouring pixels is nodata.
inline std::optional<double> sample_bilinear(const DemGrid& grid, const GeoPoint& p)
{
  if (!std::isfinite(p.lon) || !std::isfinite(p.lat)) return std::nullopt;
  const double fc = detail::snap((p.lon - grid.lon0) / grid.dlon);
  const double fr = detail::snap((grid.lat0 - p.lat) / grid.dlat);
  const double max_c = static_cast<double>(grid.cols - 1);
  const double max_r = static_cast<double>(grid.rows - 1);
  if (fc < 0.0 || fr < 0.0 || fc > max_c || fr > max_r) return std::nullopt;

  const auto c0 = std::min(static_cast<std::size_t>(fc), grid.cols - 2);
  const auto r0 = std::min(static_cast<std::size_t>(fr), grid.rows - 2);
  const double t = fc - static_cast<double>(c0);
  const double u = fr - static_cast<double>(r0);

  const float tl = grid.at(r0, c0), tr = grid.at(r0, c0 + 1);
  const float bl = grid.at(r0 + 1, c0), br = grid.at(r0 + 1, c0 + 1);
  if (grid.is_nodata(tl) || grid.is_nodata(tr) || grid.is_nodata(bl) || grid.is_nodata(br)) return std::nullopt;

  // Differences of binary32 values are exact in binary64.
  const double top = tl + t * (static_cast<double>(tr) - tl);
  const double bottom = bl + t * (static_cast<double>(br) - bl);
  const double v = top + u * (bottom - top);
  const double lo = std::min({tl, tr, bl, br});
  const double hi = std::max({tl, tr, bl, br});
  return std::clamp(v, lo, hi);
}

struct GridVertex {
  MercatorPoint position;
  float elevation = 0.0f;
};

inline GridVertex grid_vertex_mercator(const DemGrid& grid, std::size_t row, std::size_t col)
{
  if (row >= grid.rows || col >= grid.cols)
    throw Error(ErrorKind::InvalidArgument, "grid index out of range");
  return {geodesy::to_mercator(grid.center(row, col)), grid.at(row, col)};
}

}  // namespace cenergy::raster
