#include "climvol/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <boost/tokenizer.hpp>

#include "climvol/errors.hpp"

namespace climvol::ingest {

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::optional<double> parse_double(const std::string& text) {
    const std::string t = trim(text);
    if (t.empty()) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<int> parse_int(const std::string& text) {
    const std::string t = trim(text);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

bool is_na(const std::string& text) {
    const std::string t = lower(trim(text));
    return t.empty() || t == "na" || t == "nan";
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return in;
}

std::map<std::string, std::size_t> header_index(const std::string& line, const std::vector<std::string>& required,
                                                const std::string& path) {
    std::map<std::string, std::size_t> idx;
    const auto cols = split_csv_line(line);
    for (std::size_t i = 0; i < cols.size(); ++i) idx[lower(trim(cols[i]))] = i;
    std::string missing;
    for (const auto& r : required) {
        if (!idx.count(r)) missing += (missing.empty() ? "" : ",") + r;
    }
    if (!missing.empty()) throw DataError(path + ": missing required columns: " + missing);
    return idx;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
    using Sep = boost::escaped_list_separator<char>;
    boost::tokenizer<Sep> tok(line, Sep('\\', ',', '"'));
    return {tok.begin(), tok.end()};
}

PriceReadResult read_price_csv(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    strip_cr(line);
    const auto idx = header_index(line, {"state", "district", "commodity", "year", "month", "modal_price"}, path);
    const std::optional<std::size_t> day_col = idx.count("day") ? std::optional(idx.at("day")) : std::nullopt;
    std::size_t width = 0;
    for (const auto& [name, i] : idx) width = std::max(width, i + 1);

    PriceReadResult out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (trim(line).empty()) continue;
        ++out.data_rows;
        auto fail = [&](const std::string& reason) { out.errors.push_back({lineno, line, reason}); };
        std::vector<std::string> f;
        try {
            f = split_csv_line(line);
        } catch (const boost::escaped_list_error& e) {
            fail(std::string("malformed quoting: ") + e.what());
            continue;
        }
        if (f.size() < width) {
            fail("expected at least " + std::to_string(width) + " fields, got " + std::to_string(f.size()));
            continue;
        }
        RawPriceRecord r;
        r.line = lineno;
        r.state = trim(f[idx.at("state")]);
        r.district = trim(f[idx.at("district")]);
        r.commodity = trim(f[idx.at("commodity")]);
        const auto year = parse_int(f[idx.at("year")]);
        const auto month = parse_int(f[idx.at("month")]);
        if (!year || !month || *month < 1 || *month > 12) {
            fail("unparseable year/month");
            continue;
        }
        r.month = {*year, *month};
        if (day_col) {
            const auto day = parse_int(f[*day_col]);
            if (!day || *day < 1 || *day > 31) {
                fail("unparseable day");
                continue;
            }
            r.day = *day;
        }
        const auto price = parse_double(f[idx.at("modal_price")]);
        if (!price) {
            fail("unparseable modal_price '" + trim(f[idx.at("modal_price")]) + "'");
            continue;
        }
        if (*price <= 0.0) {
            fail("non-positive modal_price");
            continue;
        }
        if (r.district.empty()) {
            fail("empty district");
            continue;
        }
        r.modal_price = *price;
        out.records.push_back(std::move(r));
    }
    return out;
}

MonthlyStat parse_monthly_stat(const std::string& s) {
    if (s == "close") return MonthlyStat::close;
    if (s == "mean") return MonthlyStat::mean;
    throw DataError("monthly stat must be 'close' or 'mean', got '" + s + "'");
}

std::string to_string(MonthlyStat s) { return s == MonthlyStat::close ? "close" : "mean"; }

std::map<std::string, Location> read_district_csv(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    strip_cr(line);
    auto idx = header_index(line, {"lat", "lon"}, path);
    if (!idx.count("district_id")) {
        if (!idx.count("district")) throw DataError(path + ": missing required columns: district_id");
        idx["district_id"] = idx.at("district");
    }
    std::map<std::string, Location> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (trim(line).empty()) continue;
        const auto f = split_csv_line(line);
        const auto where = path + ":" + std::to_string(lineno);
        if (f.size() <= std::max({idx.at("district_id"), idx.at("lat"), idx.at("lon")})) throw DataError(where + ": too few fields");
        const auto lat = parse_double(f[idx.at("lat")]);
        const auto lon = parse_double(f[idx.at("lon")]);
        if (!lat || !lon || std::abs(*lat) > 90.0 || std::abs(*lon) > 180.0) throw DataError(where + ": bad coordinates");
        if (!out.emplace(trim(f[idx.at("district_id")]), Location{*lat, *lon}).second) {
            throw DataError(where + ": duplicate district");
        }
    }
    return out;
}

DistrictPanel build_price_panel(const std::vector<RawPriceRecord>& records, const std::string& commodity,
                                const std::string& state, MonthlyStat stat,
                                const std::map<std::string, Location>& locations) {
    struct Acc {
        double sum = 0.0;
        int count = 0;
        int close_day = -1;
        double close = 0.0;
    };
    std::map<std::string, std::map<long, Acc>> acc;
    for (const auto& r : records) {
        if (lower(r.commodity) != lower(commodity)) continue;
        if (!state.empty() && lower(r.state) != lower(state)) continue;
        auto& a = acc[r.district][r.month.ordinal()];
        a.sum += r.modal_price;
        ++a.count;
        if (r.day >= a.close_day) {
            a.close_day = r.day;
            a.close = r.modal_price;
        }
    }
    if (acc.empty()) throw DataError("no price records for commodity '" + commodity + "'" + (state.empty() ? "" : " in '" + state + "'"));

    DistrictPanel panel;
    panel.region = state;
    for (const auto& [name, months] : acc) {
        const auto loc = locations.find(name);
        if (loc == locations.end()) throw DataError("district '" + name + "' has no coordinates");
        const long first = months.begin()->first;
        const long last = months.rbegin()->first;
        std::vector<double> v(static_cast<std::size_t>(last - first + 1), kMissing);
        for (const auto& [ord, a] : months) {
            v[static_cast<std::size_t>(ord - first)] = stat == MonthlyStat::close ? a.close : a.sum / a.count;
        }
        panel.districts[name] = District{MonthlySeries(YearMonth::from_ordinal(first), std::move(v), name),
                                         loc->second.lat, loc->second.lon};
    }
    return panel;
}

std::vector<WeatherRecord> read_weather_csv(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    strip_cr(line);
    const auto idx = header_index(line, {"location", "lat", "lon", "year", "month", "precipitation", "tasmax"}, path);
    std::size_t width = 0;
    for (const auto& [name, i] : idx) width = std::max(width, i + 1);
    std::vector<WeatherRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (trim(line).empty()) continue;
        const auto f = split_csv_line(line);
        const auto where = path + ":" + std::to_string(lineno);
        if (f.size() < width) throw DataError(where + ": too few fields");
        WeatherRecord r;
        r.location = trim(f[idx.at("location")]);
        const auto lat = parse_double(f[idx.at("lat")]);
        const auto lon = parse_double(f[idx.at("lon")]);
        const auto year = parse_int(f[idx.at("year")]);
        const auto month = parse_int(f[idx.at("month")]);
        if (!lat || !lon || !year || !month || *month < 1 || *month > 12) throw DataError(where + ": bad location or date");
        r.lat = *lat;
        r.lon = *lon;
        r.month = {*year, *month};
        for (auto [col, dst] : {std::pair{"precipitation", &r.precipitation}, std::pair{"tasmax", &r.tasmax}}) {
            const auto& cell = f[idx.at(col)];
            if (is_na(cell)) continue;
            const auto v = parse_double(cell);
            if (!v) throw DataError(where + ": unparseable " + col);
            *dst = *v;
        }
        if (!is_missing(r.precipitation) && r.precipitation < 0.0) throw DataError(where + ": negative precipitation");
        if (!is_missing(r.tasmax) && !(r.tasmax > -60.0 && r.tasmax < 60.0)) throw DataError(where + ": tasmax out of range");
        out.push_back(std::move(r));
    }
    return out;
}

void write_weather_csv(const std::string& path, const std::string& location, double lat, double lon,
                       const WeatherSeries& w) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot write " + path);
    std::fputs("location,lat,lon,year,month,precipitation,tasmax\n", f);
    auto cell = [](double v) {
        if (is_missing(v)) return std::string("NA");
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return std::string(buf);
    };
    for (std::size_t i = 0; i < w.precipitation.size(); ++i) {
        const auto m = w.precipitation.month_at(i);
        std::fprintf(f, "%s,%.4f,%.4f,%d,%d,%s,%s\n", location.c_str(), lat, lon, m.year, m.month,
                     cell(w.precipitation[i]).c_str(), cell(w.tasmax[i]).c_str());
    }
    std::fclose(f);
}

WeatherSeries weather_series(const std::vector<WeatherRecord>& records, const std::string& location) {
    std::set<std::string> names;
    for (const auto& r : records) names.insert(r.location);
    std::string loc = location;
    if (loc.empty()) {
        if (names.size() != 1) throw DataError("weather file holds several locations; one must be selected");
        loc = *names.begin();
    } else if (!names.count(loc)) {
        throw DataError("weather location '" + loc + "' not found");
    }
    std::map<long, const WeatherRecord*> by_month;
    for (const auto& r : records) {
        if (r.location != loc) continue;
        if (!by_month.emplace(r.month.ordinal(), &r).second) throw DataError("duplicate weather month " + r.month.str());
    }
    const long first = by_month.begin()->first;
    const long last = by_month.rbegin()->first;
    const auto n = static_cast<std::size_t>(last - first + 1);
    std::vector<double> pr(n, kMissing), tx(n, kMissing);
    for (const auto& [ord, r] : by_month) {
        pr[static_cast<std::size_t>(ord - first)] = r->precipitation;
        tx[static_cast<std::size_t>(ord - first)] = r->tasmax;
    }
    const auto start = YearMonth::from_ordinal(first);
    return {MonthlySeries(start, std::move(pr), "precipitation"), MonthlySeries(start, std::move(tx), "tasmax")};
}

std::size_t interpolate_gaps(std::vector<double>& v, std::size_t max_gap) {
    std::size_t longest = 0;
    std::size_t i = 0;
    while (i < v.size() && is_missing(v[i])) ++i;
    while (i < v.size()) {
        if (!is_missing(v[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < v.size() && is_missing(v[j])) ++j;
        if (j == v.size()) break;  // trailing run
        const std::size_t run = j - i;
        longest = std::max(longest, run);
        if (run <= max_gap) {
            const double a = v[i - 1];
            const double b = v[j];
            for (std::size_t k = i; k < j; ++k) {
                const double w = static_cast<double>(k - i + 1) / static_cast<double>(run + 1);
                v[k] = a + w * (b - a);
            }
        }
        i = j;
    }
    return longest;
}

namespace {

// First and last observed months; nullopt when nothing is observed.
std::optional<std::pair<YearMonth, YearMonth>> observed_range(const MonthlySeries& s) {
    std::size_t a = 0;
    while (a < s.size() && is_missing(s[a])) ++a;
    if (a == s.size()) return std::nullopt;
    std::size_t b = s.size() - 1;
    while (is_missing(s[b])) --b;
    return std::pair{s.month_at(a), s.month_at(b)};
}

}  // namespace

AlignedDataset align_and_impute(const DistrictPanel& panel, const WeatherSeries& weather,
                                std::optional<YearMonth> range_start, std::optional<YearMonth> range_end,
                                std::size_t max_gap) {
    if (panel.districts.empty()) throw DataError("align: empty price panel");
    YearMonth lo{-100000, 1};
    YearMonth hi{100000, 12};
    auto narrow = [&](const MonthlySeries& s, const std::string& what) {
        const auto r = observed_range(s);
        if (!r) throw DataError("align: " + what + " has no observations");
        lo = std::max(lo, r->first);
        hi = std::min(hi, r->second);
    };
    narrow(weather.precipitation, "precipitation");
    narrow(weather.tasmax, "tasmax");
    for (const auto& [name, d] : panel.districts) narrow(d.series, "district " + name);
    if (range_start) lo = std::max(lo, *range_start);
    if (range_end) hi = std::min(hi, *range_end);
    if (hi < lo) throw DataError("align: price and weather series do not overlap");

    AlignedDataset out;
    out.start = lo;
    out.end = hi;
    out.panel.region = panel.region;
    for (const auto& [what, src, dst] : {std::tuple{"precipitation", &weather.precipitation, &out.weather.precipitation},
                                         std::tuple{"tasmax", &weather.tasmax, &out.weather.tasmax}}) {
        *dst = src->slice(lo, hi);
        const auto longest = interpolate_gaps(dst->values, max_gap);
        if (longest > max_gap) {
            throw DataError(std::string("align: ") + what + " has a gap of " + std::to_string(longest) + " months");
        }
    }
    for (const auto& [name, d] : panel.districts) {
        District nd = d;
        nd.series = d.series.slice(lo, hi);
        const auto longest = interpolate_gaps(nd.series.values, max_gap);
        if (longest > max_gap) {
            out.excluded.push_back(name + ": interior gap of " + std::to_string(longest) + " months exceeds " +
                                   std::to_string(max_gap));
            continue;
        }
        if (nd.series.has_missing()) {
            // a gap cut by the common range ends up at an edge and cannot be interpolated
            out.excluded.push_back(name + ": missing values at the edge of the common range");
            continue;
        }
        out.panel.districts.emplace(name, std::move(nd));
    }
    if (out.panel.districts.empty()) throw DataError("align: every district was excluded");
    return out;
}

void write_panel_csv(const std::string& path, const DistrictPanel& panel) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    if (panel.districts.empty()) return;
    if (!panel.aligned()) throw DataError("write_panel_csv: panel is not aligned");
    out << "month";
    for (const auto& [name, d] : panel.districts) out << ',' << name;
    out << '\n';
    const auto& first = panel.districts.begin()->second.series;
    char buf[64];
    for (std::size_t t = 0; t < first.size(); ++t) {
        out << first.month_at(t).str();
        for (const auto& [name, d] : panel.districts) {
            if (is_missing(d.series[t])) {
                out << ",NA";
            } else {
                std::snprintf(buf, sizeof buf, "%.10g", d.series[t]);
                out << ',' << buf;
            }
        }
        out << '\n';
    }
}

void write_row_errors_csv(const std::string& path, const std::vector<RowError>& errors) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "line,reason,raw\n";
    for (const auto& e : errors) {
        std::string raw = e.raw;
        std::string quoted;
        for (char c : raw) {
            if (c == '"') quoted += '"';
            quoted += c;
        }
        out << e.line << ",\"" << e.reason << "\",\"" << quoted << "\"\n";
    }
}

}  // namespace climvol::ingest
