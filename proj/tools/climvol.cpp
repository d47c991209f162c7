// climvol command-line front end.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "climvol/config.hpp"
#include "climvol/errors.hpp"
#include "climvol/ingest.hpp"
#include "climvol/pipeline.hpp"
#include "climvol/weather.hpp"

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumerical = 3;

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string monthly_stat;
    std::vector<std::string> overrides;
    bool quiet = false;
};

struct FetchOptions {
    double lat = 0.0;
    double lon = 0.0;
    std::string start = "2012-01";
    std::string end = "2024-10";
    std::string output = "weather.csv";
    std::string location = "point";
    std::string cache_dir;
    std::string base_url;
    bool offline = false;
};

climvol::PipelineConfig build_config(const GlobalOptions& g) {
    if (g.config.empty()) throw CLI::RequiredError("--config");
    auto cfg = climvol::load_config(g.config);
    climvol::apply_overrides(cfg, g.overrides);
    if (g.seed) cfg.seed = *g.seed;
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (!g.monthly_stat.empty()) cfg.monthly_stat = climvol::ingest::parse_monthly_stat(g.monthly_stat);
    return cfg;
}

int run_stage(const GlobalOptions& g, climvol::Stage stage) {
    const auto cfg = build_config(g);
    climvol::Logger log;
    if (!g.quiet) log = [](const std::string& m) { std::cerr << m << '\n'; };
    const auto res = climvol::run_pipeline(cfg, stage, log);
    std::cout << "wrote " << cfg.out_dir << "/report.json";
    if (!res.warnings.empty()) std::cout << " (" << res.warnings.size() << " warnings)";
    std::cout << '\n';
    return 0;
}

int fetch(const GlobalOptions& g, const FetchOptions& f) {
    climvol::weather::PowerRequest req;
    req.lat = f.lat;
    req.lon = f.lon;
    req.start = climvol::YearMonth::parse(f.start);
    req.end = climvol::YearMonth::parse(f.end);
    climvol::weather::PowerClientConfig pc;
    if (!g.config.empty()) pc = build_config(g).power;
    if (!f.cache_dir.empty()) pc.cache_dir = f.cache_dir;
    if (!f.base_url.empty()) pc.base_url = f.base_url;
    if (f.offline) pc.offline = true;
    const auto w = climvol::weather::fetch_weather(req, pc);
    climvol::ingest::write_weather_csv(f.output, f.location, f.lat, f.lon, w);
    std::cout << "wrote " << f.output << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"climvol: climate-linked commodity price volatility toolkit"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config, "pipeline config file (INI)");
    app.add_option("--seed", g.seed, "global random seed (overrides run.seed)");
    app.add_option("--out-dir", g.out_dir, "output directory (overrides run.out_dir)");
    app.add_option("--monthly-stat", g.monthly_stat, "monthly price statistic")->check(CLI::IsMember({"close", "mean"}));
    app.add_option("--set", g.overrides, "override a config key, section.key=value");
    app.add_flag("-q,--quiet", g.quiet, "no progress messages");

    const std::vector<std::pair<std::string, climvol::Stage>> stages = {
        {"ingest", climvol::Stage::ingest},     {"returns", climvol::Stage::returns},
        {"egarch-fit", climvol::Stage::egarch}, {"tests", climvol::Stage::tests},
        {"sarimax", climvol::Stage::sarimax},   {"lstm", climvol::Stage::lstm},
        {"surfaces", climvol::Stage::surfaces}, {"run", climvol::Stage::surfaces},
    };
    const std::map<std::string, std::string> help = {
        {"ingest", "read prices and weather, align and impute"},
        {"returns", "aggregate districts and compute log returns"},
        {"egarch-fit", "fit EGARCH to the aggregate returns"},
        {"tests", "CCF, KPSS and Granger tests of volatility against weather"},
        {"sarimax", "SARIMAX grid search and test-window forecasts"},
        {"lstm", "LSTM training and test-window forecasts"},
        {"surfaces", "per-district EGARCH and monthly spatial surfaces"},
        {"run", "full pipeline"},
    };
    std::optional<climvol::Stage> chosen;
    for (const auto& [name, stage] : stages) {
        auto* sub = app.add_subcommand(name, help.at(name));
        sub->fallthrough();
        sub->callback([&chosen, s = stage] { chosen = s; });
    }
    FetchOptions f;
    bool fetch_chosen = false;
    auto* fw = app.add_subcommand("fetch-weather", "download monthly precipitation and Tmax for one point");
    fw->add_option("--lat", f.lat)->required();
    fw->add_option("--lon", f.lon)->required();
    fw->add_option("--start", f.start, "YYYY-MM");
    fw->add_option("--end", f.end, "YYYY-MM");
    fw->add_option("-o,--output", f.output);
    fw->add_option("--location", f.location, "location label written to the CSV");
    fw->add_option("--cache-dir", f.cache_dir);
    fw->add_option("--base-url", f.base_url);
    fw->add_flag("--offline", f.offline, "only serve from the cache");
    fw->callback([&] { fetch_chosen = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        if (fetch_chosen) return fetch(g, f);
        return run_stage(g, *chosen);
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const climvol::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const climvol::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    }
}
