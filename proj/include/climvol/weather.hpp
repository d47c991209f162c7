#pragma once

#include <functional>
#include <string>
#include <vector>

#include "climvol/ingest.hpp"
#include "climvol/series.hpp"

namespace climvol::weather {

// Monthly point request against a NASA POWER style endpoint. The monthly
// API takes whole years; months outside [start, end] are dropped.
struct PowerRequest {
    double lat = 0.0;
    double lon = 0.0;
    YearMonth start{2012, 1};
    YearMonth end{2024, 10};
    std::vector<std::string> parameters{"PRECTOTCORR", "T2M_MAX"};
    std::string community = "AG";
};

struct PowerClientConfig {
    std::string base_url = "https://power.larc.nasa.gov";
    std::string endpoint = "/api/temporal/monthly/point";
    std::string cache_dir = ".climvol_cache";
    bool offline = false;  // never touch the network; a cache miss is an error
    int timeout_seconds = 60;
};

// (base_url, path_with_query) -> response body. Throws on transport or
// HTTP failure.
using HttpGetter = std::function<std::string(const std::string&, const std::string&)>;

HttpGetter default_http_getter(int timeout_seconds = 60);

std::string request_path(const PowerRequest& req, const PowerClientConfig& cfg);

// Stable cache key over (lat, lon, range, parameters).
std::string cache_key(const PowerRequest& req);

// Parses a POWER JSON body. Values equal to the advertised fill value
// (default -999) become missing; PRECTOTCORR (mm/day) is converted to
// mm/month; the annual "13" entries are skipped.
ingest::WeatherSeries parse_power_response(const std::string& body, const PowerRequest& req);

// Serves from the disk cache when present, otherwise fetches and writes the
// raw body to the cache atomically.
ingest::WeatherSeries fetch_weather(const PowerRequest& req, const PowerClientConfig& cfg,
                                    const HttpGetter& get = default_http_getter());

}  // namespace climvol::weather
