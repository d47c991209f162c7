#include "climvol/weather.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "climvol/errors.hpp"

namespace climvol::weather {

namespace fs = std::filesystem;

namespace {

int days_in_month(YearMonth m) {
    static constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (m.year % 4 == 0 && m.year % 100 != 0) || m.year % 400 == 0;
    return m.month == 2 && leap ? 29 : days[m.month - 1];
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

HttpGetter default_http_getter(int timeout_seconds) {
    return [timeout_seconds](const std::string& base, const std::string& path) {
        httplib::Client cli(base);
        cli.set_connection_timeout(timeout_seconds, 0);
        cli.set_read_timeout(timeout_seconds, 0);
        cli.set_follow_location(true);
        auto res = cli.Get(path);
        if (!res) throw DataError("weather fetch: " + httplib::to_string(res.error()) + " (" + base + ")");
        if (res->status != 200) throw DataError("weather fetch: HTTP " + std::to_string(res->status) + " from " + base);
        return res->body;
    };
}

std::string request_path(const PowerRequest& req, const PowerClientConfig& cfg) {
    std::string params;
    for (const auto& p : req.parameters) params += (params.empty() ? "" : ",") + p;
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s?parameters=%s&community=%s&longitude=%.4f&latitude=%.4f&start=%d&end=%d&format=JSON",
                  cfg.endpoint.c_str(), params.c_str(), req.community.c_str(), req.lon, req.lat, req.start.year,
                  req.end.year);
    return buf;
}

std::string cache_key(const PowerRequest& req) {
    std::string canon;
    char buf[128];
    std::snprintf(buf, sizeof buf, "lat=%.4f;lon=%.4f;start=%s;end=%s;community=%s;vars=", req.lat, req.lon,
                  req.start.str().c_str(), req.end.str().c_str(), req.community.c_str());
    canon = buf;
    for (const auto& p : req.parameters) canon += p + ",";
    std::snprintf(buf, sizeof buf, "power_%016llx.json", static_cast<unsigned long long>(fnv1a(canon)));
    return buf;
}

ingest::WeatherSeries parse_power_response(const std::string& body, const PowerRequest& req) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("weather response is not JSON: ") + e.what());
    }
    double fill = -999.0;
    if (j.contains("header") && j["header"].contains("fill_value")) fill = j["header"]["fill_value"].get<double>();
    if (!j.contains("properties") || !j["properties"].contains("parameter")) {
        throw DataError("weather response lacks properties.parameter");
    }
    const auto& params = j["properties"]["parameter"];
    if (req.end < req.start) throw DataError("weather request: empty date range");
    const auto n = static_cast<std::size_t>(months_between(req.start, req.end) + 1);

    auto extract = [&](const std::string& name, bool per_day) {
        if (!params.contains(name)) throw DataError("weather response lacks parameter " + name);
        std::vector<double> v(n, kMissing);
        for (const auto& [key, val] : params[name].items()) {
            if (key.size() != 6) throw DataError("weather response: bad month key '" + key + "'");
            int year = 0, month = 0;
            try {
                year = std::stoi(key.substr(0, 4));
                month = std::stoi(key.substr(4, 2));
            } catch (const std::exception&) {
                throw DataError("weather response: bad month key '" + key + "'");
            }
            if (month == 13) continue;  // annual aggregate
            if (month < 1 || month > 12) throw DataError("weather response: bad month key '" + key + "'");
            const YearMonth ym{year, month};
            if (ym < req.start || req.end < ym) continue;
            if (!val.is_number()) throw DataError("weather response: non-numeric value for " + key);
            double x = val.get<double>();
            if (x == fill || !std::isfinite(x)) {
                x = kMissing;
            } else if (per_day) {
                x *= days_in_month(ym);
            }
            v[static_cast<std::size_t>(months_between(req.start, ym))] = x;
        }
        return v;
    };
    ingest::WeatherSeries w;
    w.precipitation = MonthlySeries(req.start, extract("PRECTOTCORR", true), "precipitation");
    w.tasmax = MonthlySeries(req.start, extract("T2M_MAX", false), "tasmax");
    return w;
}

ingest::WeatherSeries fetch_weather(const PowerRequest& req, const PowerClientConfig& cfg, const HttpGetter& get) {
    const fs::path dir(cfg.cache_dir);
    const fs::path file = dir / cache_key(req);
    if (fs::exists(file)) return parse_power_response(read_file(file), req);
    if (cfg.offline) throw DataError("weather cache miss for " + file.string() + " in offline mode");

    const std::string body = get(cfg.base_url, request_path(req, cfg));
    auto parsed = parse_power_response(body, req);  // validate before caching

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create cache directory " + dir.string() + ": " + ec.message());
    const fs::path tmp = file.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary);
        out << body;
        if (!out) throw DataError("cannot write cache file " + tmp.string());
    }
    fs::rename(tmp, file, ec);
    if (ec) throw DataError("cannot move cache file into place: " + ec.message());
    return parsed;
}

}  // namespace climvol::weather
