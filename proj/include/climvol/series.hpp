#pragma once

#include <cmath>
#include <compare>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace climvol {

// Calendar month. Ordering and arithmetic are by month ordinal.
struct YearMonth {
    int year = 1970;
    int month = 1;  // 1..12

    static YearMonth from_ordinal(long ordinal);
    static YearMonth parse(const std::string& text);  // "YYYY-MM"

    long ordinal() const { return static_cast<long>(year) * 12 + (month - 1); }
    bool valid() const { return month >= 1 && month <= 12; }
    YearMonth plus(long months) const { return from_ordinal(ordinal() + months); }
    std::string str() const;  // "YYYY-MM"

    friend bool operator==(const YearMonth&, const YearMonth&) = default;
    friend auto operator<=>(const YearMonth& a, const YearMonth& b) { return a.ordinal() <=> b.ordinal(); }
};

long months_between(YearMonth from, YearMonth to);  // to - from

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

// Contiguous monthly observations. Missing months are NaN and must be
// imputed before any of the transforms below accept the series.
struct MonthlySeries {
    YearMonth start;
    std::vector<double> values;
    std::string label;

    MonthlySeries() = default;
    MonthlySeries(YearMonth start_month, std::vector<double> vals, std::string lbl = {})
        : start(start_month), values(std::move(vals)), label(std::move(lbl)) {}

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    double operator[](std::size_t i) const { return values[i]; }
    YearMonth month_at(std::size_t i) const { return start.plus(static_cast<long>(i)); }
    YearMonth end() const { return month_at(values.size() - 1); }
    bool has_missing() const;

    // Sub-series covering [from, to] inclusive; both must lie within range.
    MonthlySeries slice(YearMonth from, YearMonth to) const;
    MonthlySeries tail_from(std::size_t index) const;
    MonthlySeries head(std::size_t count) const;
};

struct District {
    MonthlySeries series;
    double lat = 0.0;
    double lon = 0.0;
};

struct DistrictPanel {
    std::string region;
    std::map<std::string, District> districts;

    bool aligned() const;
};

struct SummaryStats {
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;  // sample (n-1)
    double min = 0.0;
    double max = 0.0;
    double skewness = 0.0;         // m3 / m2^1.5, 1/n moments
    double excess_kurtosis = 0.0;  // m4 / m2^2 - 3
};

struct DistrictAggregate {
    MonthlySeries mean;
    MonthlySeries lower;  // mean - 2 s
    MonthlySeries upper;  // mean + 2 s
};

DistrictAggregate aggregate_districts(const DistrictPanel& panel);

MonthlySeries log_returns(const MonthlySeries& prices);
MonthlySeries squared_log_returns(const MonthlySeries& prices);

SummaryStats summary_stats(const MonthlySeries& series);

// Mean absolute percentage error as a fraction (0.1 == 10%).
double mape(const MonthlySeries& actual, const MonthlySeries& predicted);
double mape(std::span<const double> actual, std::span<const double> predicted);

double mean(std::span<const double> x);
double sample_variance(std::span<const double> x);

}  // namespace climvol
