#include <gtest/gtest.h>
#include <unistd.h>

#include <sstream>

#include <json.hpp>

#include "cenergy/providers.hpp"
#include "support.hpp"

namespace ts = cenergy::test_support;

using namespace cenergy;
using namespace cenergy::providers;
using nlohmann::json;

namespace {

const GeoBBox kBox{10.0, 59.9, 10.003, 59.903};

std::filesystem::path scratch_dir(const std::string& name)
{
  auto dir = std::filesystem::temp_directory_path() / ("cenergy_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string overpass_doc(const json& elements) { return json{{"elements", elements}}.dump(); }

json geom_way(std::int64_t id, json tags, std::vector<GeoPoint> pts)
{
  json g = json::array();
  for (const auto& p : pts) g.push_back({{"lat", p.lat}, {"lon", p.lon}});
  return {{"type", "way"}, {"id", id}, {"tags", tags}, {"geometry", g}};
}

ErrorKind kind_of(const std::function<void()>& fn)
{
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(NormalizePlace, HyphensBecomeCommas)
{
  EXPECT_EQ(normalize_place("Rousay-Orkney Islands-Scotland"), "Rousay, Orkney Islands, Scotland");
  EXPECT_EQ(normalize_place("  Alna - Oslo  "), "Alna, Oslo");
  EXPECT_EQ(normalize_place("Testville"), "Testville");
  EXPECT_EQ(normalize_place("a--b-"), "a, b");
  EXPECT_EQ(normalize_place(""), "");
  EXPECT_EQ(normalize_place("---"), "");
}

TEST(NormalizePlace, CommasPassThrough)
{
  EXPECT_EQ(normalize_place("Saint-Denis, France"), "Saint-Denis, France");
}

TEST(NormalizePlace, Idempotent)
{
  for (std::string s : {"Rousay-Orkney Islands-Scotland", "x - y - z", "Avalon", "a-b, c", " -q- "}) {
    const auto once = normalize_place(s);
    EXPECT_EQ(normalize_place(once), once) << s;
  }
}

TEST(Formatting, CoordinatesArePositionalShortest)
{
  EXPECT_EQ(format_coord(10.0), "10");
  EXPECT_EQ(format_coord(59.9), "59.9");
  EXPECT_EQ(format_coord(-0.0), "0");
  EXPECT_EQ(format_coord(1e-7), "0.0000001");
  EXPECT_EQ(format_coord(-2.9841234), "-2.9841234");
  EXPECT_EQ(url_encode("Rousay, Orkney Islands"), "Rousay%2C%20Orkney%20Islands");
  EXPECT_EQ(url_encode("a-b_c.d~"), "a-b_c.d~");
}

TEST(Fixtures, KeyIsRedactedBeforeHashing)
{
  const auto a = ElevationClient::request_for(kBox, "secret-one");
  const auto b = ElevationClient::request_for(kBox, "secret-two");
  EXPECT_EQ(fixture_key(a), fixture_key(b));
  EXPECT_EQ(redacted_request_text(a).find("secret"), std::string::npos);
  EXPECT_NE(redacted_request_text(a).find("API_Key=REDACTED"), std::string::npos);
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Fixtures, ReplayMissingFixture)
{
  ReplayTransport replay(scratch_dir("empty_replay"));
  EXPECT_EQ(kind_of([&] { replay.send(Geocoder::request_for("Nowhere")); }), ErrorKind::FixtureMissing);
}

TEST(Fixtures, RecordThenReplay)
{
  const auto dir = scratch_dir("record");
  auto fake = std::make_shared<ts::FakeTransport>();
  fake->push(200, "payload-1");
  fake->push(503, "busy");
  RecordingTransport rec(fake, dir);
  HttpRequest req{"GET", "https://example.org/x?API_Key=k", {}, ""};
  EXPECT_EQ(rec.send(req).body, "payload-1");
  HttpRequest other{"POST", "https://example.org/y", {}, "body"};
  EXPECT_EQ(rec.send(other).status, 503);
  const auto key = fixture_key(req);
  EXPECT_EQ(ts::read_file(dir / (key + ".req")), "GET https://example.org/x?API_Key=REDACTED\n");
  EXPECT_FALSE(std::filesystem::exists(dir / (fixture_key(other) + ".resp")));

  ReplayTransport replay(dir);
  req.url = "https://example.org/x?API_Key=another";
  const auto res = replay.send(req);
  EXPECT_EQ(res.status, 200);
  EXPECT_EQ(res.body, "payload-1");
  std::filesystem::remove_all(dir);
}

TEST(Fixtures, CommittedFixturesAreNamedByHash)
{
  std::size_t pairs = 0;
  for (const auto& entry : std::filesystem::directory_iterator(ts::fixture_dir())) {
    if (entry.path().extension() != ".req") continue;
    ++pairs;
    EXPECT_EQ(sha256_hex(ts::read_file(entry.path())), entry.path().stem().string());
    auto resp = entry.path();
    resp.replace_extension(".resp");
    EXPECT_TRUE(std::filesystem::exists(resp));
  }
  EXPECT_GE(pairs, 6u);
}

TEST(Geocoder, RequestShape)
{
  const auto req = Geocoder::request_for("Rousay, Orkney Islands, Scotland");
  EXPECT_EQ(req.method, "GET");
  EXPECT_EQ(req.url,
            "https://nominatim.openstreetmap.org/search?q=Rousay%2C%20Orkney%20Islands%2C%20Scotland"
            "&format=jsonv2&polygon_geojson=1&limit=5");
  ASSERT_EQ(req.headers.size(), 1u);
  EXPECT_EQ(req.headers[0].first, "User-Agent");
  EXPECT_FALSE(req.headers[0].second.empty());
}

TEST(Geocoder, NormalizesBeforeQuerying)
{
  auto fake = std::make_shared<ts::FakeTransport>();
  fake->push(200, R"([{"display_name":"R","geojson":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}])");
  Geocoder geocoder(fake);
  const auto place = geocoder.geocode("Rousay-Orkney Islands-Scotland");
  EXPECT_NE(fake->seen().at(0).url.find("q=Rousay%2C%20Orkney%20Islands%2C%20Scotland&"), std::string::npos);
  EXPECT_EQ(place.display_name, "R");
  EXPECT_EQ(place.bbox, (GeoBBox{0, 0, 1, 1}));
}

TEST(Geocoder, PicksFirstPolygonAndSkipsPoints)
{
  const std::string body =
      R"([{"display_name":"pt","geojson":{"type":"Point","coordinates":[5,5]}},)"
      R"({"display_name":"multi","geojson":{"type":"MultiPolygon","coordinates":[)"
      R"([[[0,0],[1,0],[1,1],[0,0]]],[[[3,3],[4,3],[4,5],[3,3]]]]}}])";
  const auto place = parse_geocode_response(body, "q");
  EXPECT_EQ(place.display_name, "multi");
  EXPECT_EQ(place.boundary.size(), 2u);
  EXPECT_EQ(place.bbox, (GeoBBox{0, 0, 4, 5}));
  for (const auto& ring : place.boundary)
    for (const auto& p : ring) EXPECT_TRUE(place.bbox.contains(p));
}

TEST(Geocoder, Errors)
{
  EXPECT_EQ(kind_of([] { parse_geocode_response("[]", "q"); }), ErrorKind::NotFound);
  EXPECT_EQ(kind_of([] { parse_geocode_response(R"([{"geojson":{"type":"Point","coordinates":[1,2]}}])", "q"); }),
            ErrorKind::NotFound);
  EXPECT_EQ(kind_of([] { parse_geocode_response("not json", "q"); }), ErrorKind::Parse);
  auto fake = std::make_shared<ts::FakeTransport>();
  fake->push(500, "");
  Geocoder geocoder(fake);
  EXPECT_EQ(kind_of([&] { geocoder.geocode("X"); }), ErrorKind::Upstream);
  EXPECT_EQ(kind_of([&] { geocoder.geocode(""); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(fake->seen().size(), 1u);
}

TEST(Elevation, RequestShape)
{
  EXPECT_EQ(ElevationClient::request_for(kBox, "K").url,
            "https://portal.opentopography.org/API/globaldem?demtype=COP30&south=59.9&north=59.903&west=10"
            "&east=10.003&outputFormat=GTiff&API_Key=K");
}

TEST(Elevation, LocalChecksSendNothing)
{
  auto fake = std::make_shared<ts::FakeTransport>();
  ElevationClient client(fake, 0.05);
  EXPECT_EQ(kind_of([&] { client.fetch_dem(kBox, ""); }), ErrorKind::InvalidKey);
  try {
    client.fetch_dem({0, 0, 1, 1}, "K");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooLarge);
    EXPECT_NE(std::string(e.what()).find("bbox too large"), std::string::npos);
  }
  EXPECT_TRUE(fake->seen().empty());
}

TEST(Elevation, StatusMapping)
{
  auto fake = std::make_shared<ts::FakeTransport>();
  ElevationClient client(fake, 0.05);
  fake->push(401, "bad key");
  EXPECT_EQ(kind_of([&] { client.fetch_dem(kBox, "K"); }), ErrorKind::InvalidKey);
  fake->push(400, "bad");
  EXPECT_EQ(kind_of([&] { client.fetch_dem(kBox, "K"); }), ErrorKind::BadRequest);
  fake->push(500, "oops");
  EXPECT_EQ(kind_of([&] { client.fetch_dem(kBox, "K"); }), ErrorKind::Upstream);
  fake->push(200, "TIFFBYTES");
  EXPECT_EQ(client.fetch_dem(kBox, "K"), "TIFFBYTES");
}

TEST(Overpass, QueryBodies)
{
  EXPECT_EQ(overpass_query(kBox, FeatureSelector::Roads),
            R"([out:json][timeout:90];way["highway"](59.9,10,59.903,10.003);out geom;)");
  EXPECT_EQ(overpass_query(kBox, FeatureSelector::PowerLines),
            R"([out:json][timeout:90];way["power"~"^(line|minor_line|cable)$"](59.9,10,59.903,10.003);out geom;)");
  EXPECT_EQ(overpass_query(kBox, FeatureSelector::Buildings),
            R"([out:json][timeout:90];way["building"](59.9,10,59.903,10.003);out geom;)");
  const auto req = OverpassClient::request_for(kBox, FeatureSelector::Roads);
  EXPECT_EQ(req.method, "POST");
  EXPECT_EQ(req.url, "https://overpass-api.de/api/interpreter");
}

TEST(Overpass, OpenBuildingExcluded)
{
  const json elements = {
      geom_way(1, {{"building", "yes"}}, {{10.001, 59.901}, {10.002, 59.901}, {10.002, 59.902}, {10.001, 59.901}}),
      geom_way(2, {{"building", "yes"}}, {{10.001, 59.901}, {10.002, 59.901}, {10.002, 59.902}}),
  };
  const auto ways = parse_overpass(overpass_doc(elements), FeatureSelector::Buildings, kBox);
  ASSERT_EQ(ways.size(), 1u);
  EXPECT_EQ(ways[0].id, 1);
  EXPECT_TRUE(ways[0].closed());
}

TEST(Overpass, EmptyPowerResult)
{
  const json elements = {geom_way(5, {{"highway", "primary"}}, {{10.001, 59.901}, {10.002, 59.901}}),
                         geom_way(6, {{"power", "tower"}}, {{10.001, 59.901}, {10.002, 59.901}})};
  EXPECT_TRUE(parse_overpass(overpass_doc(elements), FeatureSelector::PowerLines, kBox).empty());
  EXPECT_TRUE(parse_overpass(R"({"elements":[]})", FeatureSelector::PowerLines, kBox).empty());
}

TEST(Overpass, PowerTagSet)
{
  json elements = json::array();
  int id = 1;
  for (const char* v : {"line", "minor_line", "cable", "tower", "substation"})
    elements.push_back(geom_way(id++, {{"power", v}}, {{10.001, 59.901}, {10.002, 59.901}}));
  EXPECT_EQ(parse_overpass(overpass_doc(elements), FeatureSelector::PowerLines, kBox).size(), 3u);
}

TEST(Overpass, NodeReferencesResolved)
{
  const json elements = {
      {{"type", "way"}, {"id", 9}, {"tags", {{"highway", "service"}}}, {"nodes", {1, 2, 3}}},
      {{"type", "node"}, {"id", 1}, {"lat", 59.901}, {"lon", 10.001}},
      {{"type", "node"}, {"id", 2}, {"lat", 59.9015}, {"lon", 10.0015}},
      {{"type", "node"}, {"id", 3}, {"lat", 59.902}, {"lon", 10.002}},
  };
  const auto ways = parse_overpass(overpass_doc(elements), FeatureSelector::Roads, kBox);
  ASSERT_EQ(ways.size(), 1u);
  EXPECT_EQ(ways[0].geometry, (std::vector<GeoPoint>{{10.001, 59.901}, {10.0015, 59.9015}, {10.002, 59.902}}));
}

TEST(Overpass, LinesClippedToWindow)
{
  const json elements = {geom_way(
      3, {{"highway", "trunk"}},
      {{10.001, 59.901}, {10.002, 59.901}, {10.5, 59.901}, {10.002, 59.902}, {10.001, 59.902}, {11.0, 59.0}})};
  const auto ways = parse_overpass(overpass_doc(elements), FeatureSelector::Roads, kBox);
  ASSERT_EQ(ways.size(), 2u);
  EXPECT_EQ(ways[0].geometry.size(), 2u);
  EXPECT_EQ(ways[1].geometry.size(), 2u);
}

TEST(Overpass, MalformedResponses)
{
  EXPECT_EQ(kind_of([] { parse_overpass("<html>", FeatureSelector::Roads, kBox); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_overpass("{}", FeatureSelector::Roads, kBox); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_overpass(R"({"elements":[{"type":"way","id":"x"}]})", FeatureSelector::Roads, kBox); }),
            ErrorKind::Parse);
  EXPECT_EQ(kind_of([] {
              parse_overpass(R"({"elements":[{"type":"way","id":1,"tags":{"highway":"x"},"geometry":[{"lat":"a"}]}]})",
                             FeatureSelector::Roads, kBox);
            }),
            ErrorKind::Parse);
}

TEST(OverpassProperty, GeometryWithinSlack)
{
  ts::Rng rng(404);
  const GeoBBox window = kBox.expanded(kClipSlackDeg);
  for (int trial = 0; trial < 200; ++trial) {
    json elements = json::array();
    for (int w = 0; w < 5; ++w) {
      std::vector<GeoPoint> pts(ts::uniform_index(rng, 2, 10));
      for (auto& p : pts) p = {ts::uniform(rng, 9.95, 10.05), ts::uniform(rng, 59.85, 59.95)};
      const bool building = ts::uniform_index(rng, 0, 1) == 1;
      if (building) pts.push_back(pts.front());
      elements.push_back(geom_way(w, building ? json{{"building", "yes"}} : json{{"highway", "x"}}, pts));
    }
    for (auto selector : {FeatureSelector::Roads, FeatureSelector::Buildings}) {
      for (const auto& way : parse_overpass(overpass_doc(elements), selector, kBox)) {
        ASSERT_GE(way.geometry.size(), 2u);
        for (const auto& p : way.geometry) ASSERT_TRUE(window.contains(p));
        if (selector == FeatureSelector::Buildings) ASSERT_TRUE(way.closed());
      }
    }
  }
}

TEST(OverpassClient, RetriesOn429Then504)
{
  auto fake = std::make_shared<ts::FakeTransport>();
  fake->push(429, "slow down");
  fake->push(504, "gateway");
  fake->push(200, R"({"elements":[]})");
  OverpassClient client(fake, RetryPolicy{4, std::chrono::milliseconds(1)});
  EXPECT_TRUE(client.fetch_osm(kBox, FeatureSelector::Roads).empty());
  EXPECT_EQ(fake->seen().size(), 3u);
}

TEST(OverpassClient, GivesUpAfterMaxAttempts)
{
  auto fake = std::make_shared<ts::FakeTransport>([](const HttpRequest&) { return HttpResponse{429, ""}; });
  OverpassClient client(fake, RetryPolicy{3, std::chrono::milliseconds(1)});
  EXPECT_EQ(kind_of([&] { client.fetch_osm(kBox, FeatureSelector::Roads); }), ErrorKind::Upstream);
  EXPECT_EQ(fake->seen().size(), 3u);
}

TEST(OverpassClient, DoesNotRetryClientErrors)
{
  auto fake = std::make_shared<ts::FakeTransport>();
  fake->push(400, "bad query");
  OverpassClient client(fake, RetryPolicy{4, std::chrono::milliseconds(1)});
  EXPECT_EQ(kind_of([&] { client.fetch_osm(kBox, FeatureSelector::Roads); }), ErrorKind::Upstream);
  EXPECT_EQ(fake->seen().size(), 1u);
}

namespace {

std::string square_record(double lon, double lat, double half, double height)
{
  json ring = json::array();
  for (auto [dx, dy] : {std::pair{-1, -1}, {1, -1}, {1, 1}, {-1, 1}, {-1, -1}})
    ring.push_back({lon + dx * half, lat + dy * half});
  return json{{"geometry", ring}, {"height", height}}.dump() + "\n";
}

std::vector<GeoPoint> square(double lon, double lat, double half)
{
  return {{lon - half, lat - half}, {lon + half, lat - half}, {lon + half, lat + half}, {lon - half, lat + half}, {lon - half, lat - half}};
}

HeightIndex index_of(const std::string& text)
{
  std::istringstream in(text);
  return HeightIndex::parse(in);
}

}  // namespace

TEST(Heights, ParseCountsAndSkips)
{
  const auto idx = index_of(square_record(10, 60, 1e-4, 12) + square_record(10.01, 60, 1e-4, 9) +
                            square_record(10.02, 60, 1e-4, 30) + R"({"geometry":[[0,0],[1,0],[1,1]]})" + "\n" +
                            square_record(10.03, 60, 1e-4, 0) + square_record(10.04, 60, 1e-4, -2) + "{oops\n\n");
  EXPECT_EQ(idx.size(), 3u);
  EXPECT_EQ(idx.skipped(), 3u);
  EXPECT_EQ(idx.malformed(), 1u);
}

TEST(Heights, EmptyAndUnreadable)
{
  EXPECT_EQ(index_of("").size(), 0u);
  EXPECT_THROW(HeightIndex::load("/nonexistent/heights.ndjson"), Error);
  const auto idx = HeightIndex::load(ts::data_dir() / "testville_heights.ndjson");
  EXPECT_EQ(idx.size(), 1u);
  EXPECT_EQ(idx.malformed(), 1u);
  EXPECT_EQ(idx.skipped(), 1u);
}

TEST(Heights, DirectContainment)
{
  const auto idx = index_of(square_record(10, 60, 2e-4, 12) + square_record(10.01, 60, 2e-4, 20));
  EXPECT_EQ(idx.match(square(10, 60, 5e-5)), 12.0);
  EXPECT_EQ(idx.match(square(10.01, 60, 5e-5)), 20.0);
}

TEST(Heights, OverlapPicksNearestCentroid)
{
  // Both squares contain the footprint centroid at (10, 60); the second is centered 0.5e-4 deg away,
  // the first 1.5e-4 deg away.
  const auto idx = index_of(square_record(10.00015, 60, 3e-4, 11) + square_record(10.00005, 60, 3e-4, 22));
  EXPECT_EQ(idx.match(square(10, 60, 2e-5)), 22.0);
}

TEST(Heights, FallbackWithinTenMetres)
{
  // 1e-4 deg of longitude at 60N is about 5.6 m of ground distance.
  const auto idx = index_of(square_record(10.0, 60, 2e-5, 14));
  EXPECT_EQ(idx.match(square(10.0001, 60, 1e-5)), 14.0);
  // 50 m away: nothing.
  EXPECT_FALSE(idx.match(square(10.0009, 60, 1e-5)));
}

TEST(Heights, MultiRingRecord)
{
  const json rec = {{"geometry", {{{10, 60}, {10.001, 60}, {10.001, 60.001}}, {{11, 61}, {11.001, 61}, {11.001, 61.001}}}},
                    {"height", 6.5}};
  const auto idx = index_of(rec.dump() + "\n");
  ASSERT_EQ(idx.size(), 1u);
  EXPECT_EQ(idx.match(square(11.0007, 61.0003, 1e-5)), 6.5);
}

TEST(HeightsProperty, NeverNonPositive)
{
  ts::Rng rng(55);
  std::string text;
  for (int i = 0; i < 200; ++i)
    text += square_record(ts::uniform(rng, 10, 10.01), ts::uniform(rng, 60, 60.01), ts::uniform(rng, 1e-5, 2e-4),
                          ts::uniform(rng, -20, 60));
  const auto idx = index_of(text);
  for (int i = 0; i < 2000; ++i) {
    const auto h = idx.match(square(ts::uniform(rng, 9.999, 10.011), ts::uniform(rng, 59.999, 60.011), 1e-5));
    if (h) ASSERT_GT(*h, 0.0);
  }
}
