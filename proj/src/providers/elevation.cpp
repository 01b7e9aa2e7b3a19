#include "cenergy/providers.hpp"

namespace cenergy::providers {

ElevationClient::ElevationClient(std::shared_ptr<Transport> transport, double max_bbox_area)
    : transport_(std::move(transport)), max_bbox_area_(max_bbox_area)
{
}

HttpRequest ElevationClient::request_for(const GeoBBox& bbox, std::string_view api_key)
{
  HttpRequest req;
  req.method = "GET";
  req.url = std::string(kEndpoint) + "?demtype=COP30&south=" + format_coord(bbox.south) +
            "&north=" + format_coord(bbox.north) + "&west=" + format_coord(bbox.west) +
            "&east=" + format_coord(bbox.east) + "&outputFormat=GTiff&API_Key=" + url_encode(api_key);
  return req;
}

std::string ElevationClient::fetch_dem(const GeoBBox& bbox, std::string_view api_key)
{
  if (api_key.empty()) throw Error(ErrorKind::InvalidKey, "OpenTopography API key is required");
  if (bbox.area_deg2() > max_bbox_area_)
    throw Error(ErrorKind::TooLarge, "bbox too large: " + format_coord(bbox.area_deg2()) + " deg^2 exceeds cap of " +
                                         format_coord(max_bbox_area_));
  const HttpResponse res = transport_->send(request_for(bbox, api_key));
  if (res.status == 200) return res.body;
  if (res.status == 401) throw Error(ErrorKind::InvalidKey, "elevation service rejected the API key (HTTP 401)");
  if (res.status >= 400 && res.status < 500)
    throw Error(ErrorKind::BadRequest, "elevation service returned HTTP " + std::to_string(res.status));
  throw Error(ErrorKind::Upstream, "elevation service returned HTTP " + std::to_string(res.status));
}

}  // namespace cenergy::providers
