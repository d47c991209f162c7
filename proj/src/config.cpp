#include "climvol/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "climvol/errors.hpp"

namespace climvol {

namespace {

namespace fs = std::filesystem;

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw DataError("config: " + key + ": cannot parse '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw DataError("config: " + key + ": expected a boolean, got '" + text + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        out.push_back(parse_number<int>(key, item));
    }
    if (out.empty()) throw DataError("config: " + key + ": empty list");
    return out;
}

std::string resolve(const std::string& base, const std::string& p) {
    if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(base) / p).lexically_normal().string();
}

YearMonth parse_month(const std::string& key, const std::string& text) {
    try {
        return YearMonth::parse(text);
    } catch (const std::exception&) {
        throw DataError("config: " + key + ": expected YYYY-MM, got '" + text + "'");
    }
}

void set_key(PipelineConfig& c, const std::string& key, const std::string& v, const std::string& base) {
    using Setter = std::function<void()>;
    const auto i = [&] { return parse_number<int>(key, v); };
    const auto d = [&] { return parse_number<double>(key, v); };
    const std::map<std::string, Setter> setters = {
        {"data.prices", [&] { c.prices = resolve(base, v); }},
        {"data.districts", [&] { c.districts = resolve(base, v); }},
        {"data.weather", [&] { c.weather = resolve(base, v); }},
        {"data.weather_location", [&] { c.weather_location = v; }},
        {"data.boundary", [&] { c.boundary = resolve(base, v); }},
        {"data.commodity", [&] { c.commodity = v; }},
        {"data.state", [&] { c.state = v; }},
        {"data.start", [&] { c.start = parse_month(key, v); }},
        {"data.end", [&] { c.end = parse_month(key, v); }},
        {"data.monthly_stat", [&] { c.monthly_stat = ingest::parse_monthly_stat(v); }},
        {"weather.base_url", [&] { c.power.base_url = v; }},
        {"weather.endpoint", [&] { c.power.endpoint = v; }},
        {"weather.cache_dir", [&] { c.power.cache_dir = resolve(base, v); }},
        {"weather.offline", [&] { c.power.offline = parse_bool(key, v); }},
        {"weather.timeout", [&] { c.power.timeout_seconds = i(); }},
        {"weather.lat", [&] { c.weather_lat = d(); }},
        {"weather.lon", [&] { c.weather_lon = d(); }},
        {"egarch.p", [&] { c.egarch.p = i(); }},
        {"egarch.o", [&] { c.egarch.o = i(); }},
        {"egarch.q", [&] { c.egarch.q = i(); }},
        {"tests.ccf_max_lag", [&] { c.ccf_max_lag = i(); }},
        {"tests.granger_max_lag", [&] { c.granger_max_lag = i(); }},
        {"sarimax.test_months", [&] { c.test_months = parse_number<std::size_t>(key, v); }},
        {"sarimax.p", [&] { c.grid.p = parse_int_list(key, v); }},
        {"sarimax.d", [&] { c.grid.d = parse_int_list(key, v); }},
        {"sarimax.q", [&] { c.grid.q = parse_int_list(key, v); }},
        {"sarimax.P", [&] { c.grid.P = parse_int_list(key, v); }},
        {"sarimax.D", [&] { c.grid.D = parse_int_list(key, v); }},
        {"sarimax.Q", [&] { c.grid.Q = parse_int_list(key, v); }},
        {"sarimax.s", [&] { c.grid.s = i(); }},
        {"lstm.hidden_dim", [&] { c.lstm.hidden_dim = i(); }},
        {"lstm.lookback", [&] { c.lstm.lookback = i(); }},
        {"lstm.epochs", [&] { c.lstm.epochs = i(); }},
        {"lstm.learning_rate", [&] { c.lstm.learning_rate = d(); }},
        {"lstm.clip_norm", [&] { c.lstm.clip_norm = d(); }},
        {"spatial.k", [&] { c.surfaces.k = i(); }},
        {"spatial.rho", [&] { c.surfaces.car.rho = d(); }},
        {"spatial.prior_shape", [&] { c.surfaces.car.prior_shape = d(); }},
        {"spatial.prior_rate", [&] { c.surfaces.car.prior_rate = d(); }},
        {"spatial.n_iter", [&] { c.surfaces.car.n_iter = i(); }},
        {"spatial.burn_in", [&] { c.surfaces.car.burn_in = i(); }},
        {"spatial.thin", [&] { c.surfaces.car.thin = i(); }},
        {"spatial.cell_size", [&] { c.surfaces.cell_size = d(); }},
        {"spatial.padding", [&] { c.surfaces.padding = d(); }},
        {"spatial.power", [&] { c.surfaces.power = d(); }},
        {"spatial.json", [&] { c.surface_json = parse_bool(key, v); }},
        {"run.seed", [&] { c.seed = parse_number<std::uint64_t>(key, v); }},
        {"run.out_dir", [&] { c.out_dir = resolve(base, v); }},
    };
    const auto it = setters.find(key);
    if (it == setters.end()) throw DataError("config: unknown key '" + key + "'");
    it->second();
}

}  // namespace

void PipelineConfig::validate() const {
    if (prices.empty()) throw DataError("config: data.prices is required");
    if (districts.empty()) throw DataError("config: data.districts is required");
    if (commodity.empty()) throw DataError("config: data.commodity is required");
    if (end < start) throw DataError("config: empty date range " + start.str() + ".." + end.str());
    if ((weather_lat.has_value()) != (weather_lon.has_value())) throw DataError("config: weather.lat and weather.lon go together");
    egarch.validate();
    if (ccf_max_lag < 0) throw DataError("config: tests.ccf_max_lag must be >= 0");
    if (granger_max_lag < 1) throw DataError("config: tests.granger_max_lag must be >= 1");
    if (test_months < 1) throw DataError("config: sarimax.test_months must be >= 1");
    lstm.validate();
    surfaces.car.validate();
    if (surfaces.k < 1) throw DataError("config: spatial.k must be >= 1");
    if (!(surfaces.cell_size > 0.0)) throw DataError("config: spatial.cell_size must be positive");
    if (!(surfaces.power > 0.0)) throw DataError("config: spatial.power must be positive");
    if (out_dir.empty()) throw DataError("config: run.out_dir is required");
}

PipelineConfig parse_config(const std::string& text, const std::string& base_dir) {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw DataError(std::string("config: ") + e.what());
    }
    PipelineConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw DataError("config: key '" + section + "' outside a section");
        for (const auto& [key, value] : body) set_key(cfg, section + "." + key, value.data(), base_dir);
    }
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), fs::path(path).parent_path().string());
}

void apply_overrides(PipelineConfig& cfg, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw DataError("override '" + o + "' is not section.key=value");
        set_key(cfg, o.substr(0, eq), o.substr(eq + 1), {});
    }
}

}  // namespace climvol
