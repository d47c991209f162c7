#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "climvol/egarch.hpp"
#include "climvol/ingest.hpp"
#include "climvol/lstm.hpp"
#include "climvol/sarimax.hpp"
#include "climvol/series.hpp"
#include "climvol/spatial.hpp"
#include "climvol/weather.hpp"

namespace climvol {

// Pipeline settings. On disk this is an INI file with [sections] and
// key = value lines; relative paths resolve against the file's directory.
struct PipelineConfig {
    // [data]
    std::string prices;
    std::string districts;
    std::string weather;  // CSV; empty means fetch from the POWER endpoint
    std::string weather_location;
    std::string boundary;  // optional lat,lon polygon CSV for the surface mask
    std::string commodity = "Soybean";
    std::string state = "Madhya Pradesh";
    YearMonth start{2012, 1};
    YearMonth end{2024, 10};
    ingest::MonthlyStat monthly_stat = ingest::MonthlyStat::close;

    // [weather]
    weather::PowerClientConfig power;
    std::optional<double> weather_lat;  // default: centroid of the districts
    std::optional<double> weather_lon;

    // [egarch]
    egarch::EgarchSpec egarch{1, 1, 1};

    // [tests]
    int ccf_max_lag = 24;
    int granger_max_lag = 12;

    // [sarimax]
    std::size_t test_months = 62;
    sarimax::OrderGrid grid;

    // [lstm]
    lstm::LstmConfig lstm;

    // [spatial]
    spatial::SurfaceConfig surfaces;
    bool surface_json = false;

    // [run]
    std::uint64_t seed = 42;
    std::string out_dir = "climvol_out";

    void validate() const;
};

// Parses the INI text; `base_dir` anchors relative paths.
PipelineConfig parse_config(const std::string& text, const std::string& base_dir = {});
PipelineConfig load_config(const std::string& path);

// Applies "section.key=value" overrides on top of a loaded config.
void apply_overrides(PipelineConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace climvol
