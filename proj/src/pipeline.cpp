#include "climvol/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "climvol/egarch.hpp"
#include "climvol/errors.hpp"
#include "climvol/ingest.hpp"
#include "climvol/lstm.hpp"
#include "climvol/sarimax.hpp"
#include "climvol/spatial.hpp"
#include "climvol/stats_tests.hpp"
#include "climvol/weather.hpp"

namespace climvol {

namespace fs = std::filesystem;

std::string to_string(Stage s) {
    switch (s) {
        case Stage::ingest: return "ingest";
        case Stage::aggregate: return "aggregate";
        case Stage::returns: return "returns";
        case Stage::egarch: return "egarch";
        case Stage::tests: return "tests";
        case Stage::sarimax: return "sarimax";
        case Stage::lstm: return "lstm";
        case Stage::surfaces: return "surfaces";
    }
    return "unknown";
}

namespace {

template <class F>
auto tagged(Stage stage, F&& f) -> decltype(f()) {
    const std::string tag = "[" + to_string(stage) + "] ";
    try {
        return f();
    } catch (const NumericalError& e) {
        throw NumericalError(tag + e.what());
    } catch (const DataError& e) {
        throw DataError(tag + e.what());
    } catch (const fs::filesystem_error& e) {
        throw DataError(tag + e.what());
    }
}

std::string fmt(double v) {
    if (is_missing(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// All columns must start in the same month.
void write_columns(const fs::path& path, const std::vector<std::string>& names, const std::vector<MonthlySeries>& cols) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "month";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    if (cols.empty()) return;
    for (std::size_t t = 0; t < cols[0].size(); ++t) {
        out << cols[0].month_at(t).str();
        for (const auto& c : cols) out << ',' << fmt(c[t]);
        out << '\n';
    }
}

nlohmann::json stats_json(const SummaryStats& s) {
    return {{"n", s.n},       {"mean", s.mean},         {"std", s.std},
            {"min", s.min},   {"max", s.max},           {"skewness", s.skewness},
            {"excess_kurtosis", s.excess_kurtosis}};
}

std::vector<spatial::LatLon> read_boundary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open boundary file " + path);
    std::string line;
    std::getline(in, line);
    std::vector<spatial::LatLon> poly;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = ingest::split_csv_line(line);
        if (f.size() < 2) throw DataError("boundary file " + path + ": expected lat,lon");
        try {
            poly.push_back({std::stod(f[0]), std::stod(f[1])});
        } catch (const std::exception&) {
            throw DataError("boundary file " + path + ": bad coordinate in '" + line + "'");
        }
    }
    if (poly.size() < 3) throw DataError("boundary polygon needs at least 3 vertices");
    return poly;
}

std::vector<MonthlySeries> slice_all(const std::vector<MonthlySeries>& xs, YearMonth from, YearMonth to) {
    std::vector<MonthlySeries> out;
    for (const auto& x : xs) out.push_back(x.slice(from, to));
    return out;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, Stage until, const Logger& log) {
    PipelineResult res;
    auto& rep = res.report;
    auto say = [&](const std::string& m) {
        if (log) log(m);
    };
    auto warn = [&](const std::string& m) {
        res.warnings.push_back(m);
        say("warning: " + m);
    };
    auto done = [&](Stage s) { return s >= until; };
    const fs::path out_dir(cfg.out_dir);

    ingest::AlignedDataset data = tagged(Stage::ingest, [&] {
        cfg.validate();
        fs::create_directories(out_dir);
        say("ingest: reading " + cfg.prices);
        const auto prices = ingest::read_price_csv(cfg.prices);
        ingest::write_row_errors_csv((out_dir / "ingest_errors.csv").string(), prices.errors);
        for (const auto& e : prices.errors) warn("price row " + std::to_string(e.line) + ": " + e.reason);
        const auto locations = ingest::read_district_csv(cfg.districts);
        const auto panel = ingest::build_price_panel(prices.records, cfg.commodity, cfg.state, cfg.monthly_stat, locations);

        ingest::WeatherSeries weather;
        double wlat = 0.0, wlon = 0.0;
        if (!cfg.weather.empty()) {
            weather = ingest::weather_series(ingest::read_weather_csv(cfg.weather), cfg.weather_location);
        } else {
            for (const auto& [name, d] : panel.districts) {
                wlat += d.lat;
                wlon += d.lon;
            }
            wlat = cfg.weather_lat.value_or(wlat / static_cast<double>(panel.districts.size()));
            wlon = cfg.weather_lon.value_or(wlon / static_cast<double>(panel.districts.size()));
            weather::PowerRequest req;
            req.lat = wlat;
            req.lon = wlon;
            req.start = cfg.start;
            req.end = cfg.end;
            say("ingest: fetching weather for " + fmt(wlat) + "," + fmt(wlon));
            weather = weather::fetch_weather(req, cfg.power);
        }
        auto aligned = ingest::align_and_impute(panel, weather, cfg.start, cfg.end);
        for (const auto& e : aligned.excluded) warn("excluded district " + e);
        ingest::write_panel_csv((out_dir / "prices.csv").string(), aligned.panel);
        write_columns(out_dir / "weather.csv", {"precipitation", "tasmax"},
                      {aligned.weather.precipitation, aligned.weather.tasmax});

        nlohmann::json excluded = aligned.excluded;
        rep["config"] = {{"commodity", cfg.commodity}, {"state", cfg.state},      {"seed", cfg.seed},
                         {"start", cfg.start.str()},   {"end", cfg.end.str()},    {"monthly_stat", ingest::to_string(cfg.monthly_stat)}};
        rep["ingest"] = {{"data_rows", prices.data_rows},
                         {"records", prices.records.size()},
                         {"row_errors", prices.errors.size()},
                         {"districts_found", panel.districts.size()},
                         {"districts_used", aligned.panel.districts.size()},
                         {"excluded", excluded},
                         {"start", aligned.start.str()},
                         {"end", aligned.end.str()}};
        return aligned;
    });

    auto finish = [&] {
        rep["warnings"] = res.warnings;
        std::ofstream out(out_dir / "report.json");
        out << rep.dump(2) << '\n';
        return res;
    };
    if (done(Stage::ingest)) return finish();

    const DistrictAggregate agg = tagged(Stage::aggregate, [&] {
        auto a = aggregate_districts(data.panel);
        write_columns(out_dir / "aggregate.csv", {"mean", "lower", "upper"}, {a.mean, a.lower, a.upper});
        rep["prices"] = stats_json(summary_stats(a.mean));
        return a;
    });
    if (done(Stage::aggregate)) return finish();

    const MonthlySeries returns = tagged(Stage::returns, [&] {
        auto r = log_returns(agg.mean);
        write_columns(out_dir / "returns.csv", {"log_return", "squared"}, {r, squared_log_returns(agg.mean)});
        rep["returns"] = stats_json(summary_stats(r));
        return r;
    });
    if (done(Stage::returns)) return finish();

    const egarch::EgarchFit fit = tagged(Stage::egarch, [&] {
        say("egarch: fitting " + std::to_string(cfg.egarch.p) + "," + std::to_string(cfg.egarch.o) + "," +
            std::to_string(cfg.egarch.q));
        auto f = egarch::egarch_fit(returns, cfg.egarch);
        if (!f.converged) warn("egarch: optimizer did not report convergence");
        write_columns(out_dir / "volatility.csv", {"cond_vol", "residual"}, {f.cond_vol, f.residuals});
        rep["egarch"] = egarch::to_json(f);
        return f;
    });
    if (done(Stage::egarch)) return finish();

    const MonthlySeries& vol = fit.cond_vol;
    const YearMonth v0 = vol.start;
    const YearMonth v1 = vol.end();
    const std::vector<MonthlySeries> exog = slice_all({data.weather.precipitation, data.weather.tasmax}, v0, v1);
    const std::vector<std::string> exog_names = {"precipitation", "tasmax"};

    tagged(Stage::tests, [&] {
        nlohmann::json tests;
        const int max_lag = std::min(cfg.ccf_max_lag, static_cast<int>(vol.size()) - 3);
        if (max_lag < cfg.ccf_max_lag) warn("tests: CCF lags capped at " + std::to_string(max_lag));
        for (std::size_t j = 0; j < exog.size(); ++j) {
            const auto c = stats::ccf(vol, exog[j], max_lag);
            tests["ccf"][exog_names[j]] = stats::to_json(c);
            std::ofstream out(out_dir / ("ccf_" + exog_names[j] + ".csv"));
            out << "lag,value\n";
            for (std::size_t i = 0; i < c.lags.size(); ++i) out << c.lags[i] << ',' << fmt(c.values[i]) << '\n';
        }

        std::vector<MonthlySeries> series{vol, exog[0], exog[1]};
        const std::vector<std::string> names{"volatility", "precipitation", "tasmax"};
        bool any_diff = false;
        for (std::size_t j = 0; j < series.size(); ++j) {
            const auto k = stats::kpss_test(series[j]);
            auto kj = stats::to_json(k);
            kj["differenced"] = !k.stationary_at_5pct;
            tests["kpss"][names[j]] = kj;
            if (!k.stationary_at_5pct) {
                series[j] = stats::difference(series[j], 1);
                any_diff = true;
            }
        }
        if (any_diff) {
            for (auto& s : series) {
                if (s.start == v0) s = s.tail_from(1);
            }
        }
        const int t = static_cast<int>(series[0].size());
        const int lag_cap = std::min(cfg.granger_max_lag, (t - 2) / 3);
        if (lag_cap < cfg.granger_max_lag) warn("tests: Granger lags capped at " + std::to_string(lag_cap));
        for (std::size_t j = 1; j < series.size(); ++j) {
            nlohmann::json rows = nlohmann::json::array();
            for (int k = 1; k <= lag_cap; ++k) rows.push_back(stats::to_json(stats::granger_causality(series[0], series[j], k)));
            tests["granger"][names[j] + "_causes_volatility"] = rows;
        }
        rep["tests"] = tests;
        return 0;
    });
    if (done(Stage::tests)) return finish();

    const std::size_t n = vol.size();
    if (cfg.test_months + 24 > n) {
        throw DataError("[sarimax] test_months=" + std::to_string(cfg.test_months) + " leaves too little training data (" +
                        std::to_string(n) + " months)");
    }
    const std::size_t n_train = n - cfg.test_months;
    const MonthlySeries actual = vol.tail_from(n_train);
    nlohmann::json mape_rows = nlohmann::json::array();
    const std::string state_label = cfg.state.empty() ? data.panel.region : cfg.state;

    tagged(Stage::sarimax, [&] {
        std::vector<MonthlySeries> exog_train;
        for (const auto& x : exog) exog_train.push_back(x.head(n_train));
        say("sarimax: grid search on " + std::to_string(n_train) + " months");
        const auto grid = sarimax::aic_grid_search(vol.head(n_train), exog_train, cfg.grid);
        const auto pred = sarimax::sarimax_rolling_forecast(grid.best, vol, exog);
        const double m = mape(actual, pred);
        write_columns(out_dir / "sarimax_forecast.csv", {"actual", "forecast"}, {actual, pred});
        rep["sarimax"] = {{"fit", sarimax::to_json(grid.best)},
                          {"candidates", grid.candidates},
                          {"converged", grid.converged},
                          {"test_months", cfg.test_months},
                          {"mape", m}};
        mape_rows.push_back({{"state", state_label}, {"crop", cfg.commodity}, {"model", "SARIMAX"}, {"mape", m}});
        rep["mape_table"] = mape_rows;
        return 0;
    });
    if (done(Stage::sarimax)) return finish();

    tagged(Stage::lstm, [&] {
        lstm::LstmConfig lc = cfg.lstm;
        lc.input_dim = 1 + static_cast<int>(exog.size());
        lc.seed = cfg.seed;
        lc.train_fraction = static_cast<double>(n_train) / static_cast<double>(n);
        say("lstm: training " + std::to_string(lc.epochs) + " epochs");
        const auto model = lstm::lstm_train(vol, exog, lc);
        if (model.train_rows != n_train) throw NumericalError("train split mismatch");
        const auto pred = lstm::lstm_rolling_forecast(model, vol, exog, n_train);
        const double m = mape(actual, pred);
        write_columns(out_dir / "lstm_forecast.csv", {"actual", "forecast"}, {actual, pred});
        std::ofstream(out_dir / "lstm_model.json") << lstm::to_json(model).dump() << '\n';
        rep["lstm"] = {{"hidden_dim", lc.hidden_dim},
                       {"lookback", lc.lookback},
                       {"epochs", lc.epochs},
                       {"final_loss", model.loss_history.empty() ? 0.0 : model.loss_history.back()},
                       {"mape", m}};
        mape_rows.push_back({{"state", state_label}, {"crop", cfg.commodity}, {"model", "LSTM"}, {"mape", m}});
        rep["mape_table"] = mape_rows;
        return 0;
    });
    if (done(Stage::lstm)) return finish();

    tagged(Stage::surfaces, [&] {
        DistrictPanel vols;
        vols.region = data.panel.region;
        nlohmann::json district_fits;
        for (const auto& [name, d] : data.panel.districts) {
            try {
                const auto f = egarch::egarch_fit(log_returns(d.series), cfg.egarch);
                vols.districts[name] = District{f.cond_vol, d.lat, d.lon};
                district_fits[name] = {{"params", f.params.to_vector()}, {"log_likelihood", f.log_likelihood}};
            } catch (const NumericalError& e) {
                warn("surfaces: district " + name + " EGARCH failed: " + e.what());
            }
        }
        std::vector<std::string> names;
        std::vector<MonthlySeries> cols;
        for (const auto& [name, d] : vols.districts) {
            names.push_back(name);
            cols.push_back(d.series);
        }
        write_columns(out_dir / "district_volatility.csv", names, cols);

        spatial::SurfaceConfig sc = cfg.surfaces;
        sc.seed = cfg.seed;
        if (!cfg.boundary.empty()) sc.boundary = read_boundary(cfg.boundary);
        const fs::path sdir = out_dir / "surfaces";
        fs::create_directories(sdir);
        std::size_t months = 0, rows = 0, cols_n = 0;
        say("surfaces: " + std::to_string(vols.districts.size()) + " districts");
        spatial::monthly_surfaces(
            vols, sc,
            [&](spatial::MonthSurface&& m) {
                const std::string stem = m.month.str();
                spatial::write_surface_csv(m.surface, (sdir / (stem + "_grid.csv")).string());
                spatial::write_site_csv(m, (sdir / (stem + "_sites.csv")).string());
                if (cfg.surface_json) std::ofstream(sdir / (stem + "_grid.json")) << spatial::surface_to_json(m.surface).dump() << '\n';
                ++months;
                rows = m.surface.rows;
                cols_n = m.surface.cols;
            },
            warn);
        rep["surfaces"] = {{"districts", district_fits},
                           {"months", months},
                           {"rows", rows},
                           {"cols", cols_n},
                           {"cell_size", sc.cell_size},
                           {"k", sc.k},
                           {"rho", sc.car.rho}};
        return 0;
    });
    return finish();
}

}  // namespace climvol
