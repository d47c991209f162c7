#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "climvol/series.hpp"

namespace climvol::ingest {

// Price CSV schema: state,district,commodity,year,month,modal_price with an
// optional `day` column for sub-monthly quotes. Column order is free.
struct RawPriceRecord {
    std::string state;
    std::string district;
    std::string commodity;
    YearMonth month;
    int day = 0;  // 0 when the file has no day column
    double modal_price = 0.0;  // INR/quintal
    std::size_t line = 0;
};

struct RowError {
    std::size_t line = 0;
    std::string raw;
    std::string reason;
};

struct PriceReadResult {
    std::vector<RawPriceRecord> records;
    std::vector<RowError> errors;
    std::size_t data_rows = 0;  // == records.size() + errors.size()
};

PriceReadResult read_price_csv(const std::string& path);

// Splits one CSV line honouring double quotes.
std::vector<std::string> split_csv_line(const std::string& line);

enum class MonthlyStat { close, mean };
MonthlyStat parse_monthly_stat(const std::string& s);
std::string to_string(MonthlyStat s);

struct Location {
    double lat = 0.0;
    double lon = 0.0;
};

// district_id,lat,lon (a plain `district` header is accepted too)
std::map<std::string, Location> read_district_csv(const std::string& path);

// One series per district for the given commodity/state, spanning that
// district's first to last quoted month with NaN for months without quotes.
// `close` takes the quote with the latest day (file order breaks ties).
DistrictPanel build_price_panel(const std::vector<RawPriceRecord>& records, const std::string& commodity,
                                const std::string& state, MonthlyStat stat,
                                const std::map<std::string, Location>& locations);

struct WeatherRecord {
    std::string location;
    double lat = 0.0;
    double lon = 0.0;
    YearMonth month;
    double precipitation = kMissing;  // mm per month
    double tasmax = kMissing;         // deg C
};

struct WeatherSeries {
    MonthlySeries precipitation;
    MonthlySeries tasmax;
};

// location,lat,lon,year,month,precipitation,tasmax; empty, NA or NaN cells
// become missing. Out-of-range values throw DataError.
std::vector<WeatherRecord> read_weather_csv(const std::string& path);
void write_weather_csv(const std::string& path, const std::string& location, double lat, double lon,
                       const WeatherSeries& w);

// Contiguous series for one location (or the only one when `location` is
// empty), NaN for months absent from the records.
WeatherSeries weather_series(const std::vector<WeatherRecord>& records, const std::string& location = {});

// Linear interpolation of interior runs of at most `max_gap` missing values.
// Returns the longest interior run; runs longer than `max_gap` are left
// untouched. Leading/trailing missing values are never filled.
std::size_t interpolate_gaps(std::vector<double>& values, std::size_t max_gap);

struct AlignedDataset {
    DistrictPanel panel;
    WeatherSeries weather;
    YearMonth start;
    YearMonth end;
    std::vector<std::string> excluded;  // "<district>: <reason>"
};

// Trims everything to the common observed range (optionally intersected
// with [range_start, range_end]), fills interior gaps of up to two months
// and drops districts with longer gaps.
AlignedDataset align_and_impute(const DistrictPanel& panel, const WeatherSeries& weather,
                                std::optional<YearMonth> range_start = std::nullopt,
                                std::optional<YearMonth> range_end = std::nullopt, std::size_t max_gap = 2);

void write_panel_csv(const std::string& path, const DistrictPanel& panel);
void write_row_errors_csv(const std::string& path, const std::vector<RowError>& errors);

}  // namespace climvol::ingest
