#include "climvol/series.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "climvol/errors.hpp"

namespace climvol {

YearMonth YearMonth::from_ordinal(long ordinal) {
    long year = ordinal / 12;
    long month0 = ordinal % 12;
    if (month0 < 0) {
        month0 += 12;
        --year;
    }
    return YearMonth{static_cast<int>(year), static_cast<int>(month0) + 1};
}

YearMonth YearMonth::parse(const std::string& text) {
    int y = 0;
    int m = 0;
    char dash = 0;
    if (std::sscanf(text.c_str(), "%d%c%d", &y, &dash, &m) != 3 || dash != '-' || m < 1 || m > 12) {
        throw DataError("invalid year-month '" + text + "' (expected YYYY-MM)");
    }
    return YearMonth{y, m};
}

std::string YearMonth::str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
    return buf;
}

long months_between(YearMonth from, YearMonth to) { return to.ordinal() - from.ordinal(); }

bool MonthlySeries::has_missing() const {
    return std::any_of(values.begin(), values.end(), [](double v) { return is_missing(v); });
}

MonthlySeries MonthlySeries::slice(YearMonth from, YearMonth to) const {
    const long lo = months_between(start, from);
    const long hi = months_between(start, to);
    if (lo < 0 || hi < lo || hi >= static_cast<long>(values.size())) {
        throw DataError("slice " + from.str() + ".." + to.str() + " outside series '" + label + "'");
    }
    return MonthlySeries(from, {values.begin() + lo, values.begin() + hi + 1}, label);
}

MonthlySeries MonthlySeries::tail_from(std::size_t index) const {
    if (index > values.size()) throw DataError("tail_from index beyond series end");
    return MonthlySeries(month_at(index), {values.begin() + static_cast<long>(index), values.end()}, label);
}

MonthlySeries MonthlySeries::head(std::size_t count) const {
    if (count > values.size()) throw DataError("head count beyond series end");
    return MonthlySeries(start, {values.begin(), values.begin() + static_cast<long>(count)}, label);
}

bool DistrictPanel::aligned() const {
    if (districts.empty()) return true;
    const auto& first = districts.begin()->second.series;
    return std::all_of(districts.begin(), districts.end(), [&](const auto& kv) {
        return kv.second.series.start == first.start && kv.second.series.size() == first.size();
    });
}

namespace {

void require_complete(const MonthlySeries& s, const char* what) {
    if (s.has_missing()) {
        throw DataError(std::string(what) + ": series '" + s.label + "' has unfilled gaps");
    }
}

}  // namespace

double mean(std::span<const double> x) {
    if (x.empty()) throw DataError("mean of empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
    if (x.size() < 2) throw DataError("sample variance needs at least 2 values");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

DistrictAggregate aggregate_districts(const DistrictPanel& panel) {
    if (panel.districts.empty()) throw DataError("aggregate_districts: empty panel");
    if (!panel.aligned()) throw DataError("aggregate_districts: district series are not aligned");
    const auto& first = panel.districts.begin()->second.series;
    const std::size_t n = first.size();
    const auto k = static_cast<double>(panel.districts.size());

    std::vector<double> mu(n, 0.0);
    std::vector<double> lo(n);
    std::vector<double> hi(n);
    for (const auto& [id, d] : panel.districts) {
        require_complete(d.series, "aggregate_districts");
        for (std::size_t t = 0; t < n; ++t) mu[t] += d.series[t];
    }
    for (auto& v : mu) v /= k;
    for (std::size_t t = 0; t < n; ++t) {
        double s = 0.0;
        if (panel.districts.size() > 1) {
            double ss = 0.0;
            for (const auto& [id, d] : panel.districts) ss += (d.series[t] - mu[t]) * (d.series[t] - mu[t]);
            s = std::sqrt(ss / (k - 1.0));
        }
        lo[t] = mu[t] - 2.0 * s;
        hi[t] = mu[t] + 2.0 * s;
    }
    const std::string label = panel.region.empty() ? std::string("mean") : panel.region;
    return {MonthlySeries(first.start, std::move(mu), label),
            MonthlySeries(first.start, std::move(lo), label + " lower"),
            MonthlySeries(first.start, std::move(hi), label + " upper")};
}

MonthlySeries log_returns(const MonthlySeries& prices) {
    if (prices.size() < 2) throw DataError("log_returns: need at least 2 prices");
    require_complete(prices, "log_returns");
    std::vector<double> r(prices.size() - 1);
    for (std::size_t t = 0; t < prices.size(); ++t) {
        if (!(prices[t] > 0.0)) {
            throw DataError("log_returns: nonpositive price at " + prices.month_at(t).str());
        }
    }
    for (std::size_t t = 1; t < prices.size(); ++t) r[t - 1] = std::log(prices[t]) - std::log(prices[t - 1]);
    return MonthlySeries(prices.month_at(1), std::move(r), prices.label + " log return");
}

MonthlySeries squared_log_returns(const MonthlySeries& prices) {
    auto r = log_returns(prices);
    for (auto& v : r.values) v *= v;
    r.label = prices.label + " squared log return";
    return r;
}

SummaryStats summary_stats(const MonthlySeries& series) {
    require_complete(series, "summary_stats");
    const auto& x = series.values;
    if (x.size() < 4) throw DataError("summary_stats: need at least 4 observations");
    SummaryStats s;
    s.n = x.size();
    s.mean = mean(x);
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    s.min = *mn;
    s.max = *mx;

    const auto n = static_cast<double>(x.size());
    double m2 = 0.0;
    double m3 = 0.0;
    double m4 = 0.0;
    for (double v : x) {
        const double d = v - s.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    s.std = std::sqrt(m2 / (n - 1.0));
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (!(m2 > 0.0)) throw DataError("summary_stats: zero variance, skewness/kurtosis undefined");
    s.skewness = m3 / std::pow(m2, 1.5);
    s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    return s;
}

double mape(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size()) throw DataError("mape: length mismatch");
    if (actual.empty()) throw DataError("mape: empty input");
    double acc = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        if (actual[t] == 0.0) throw DataError("mape: zero actual value");
        acc += std::abs((actual[t] - predicted[t]) / actual[t]);
    }
    return acc / static_cast<double>(actual.size());
}

double mape(const MonthlySeries& actual, const MonthlySeries& predicted) {
    return mape(std::span<const double>(actual.values), std::span<const double>(predicted.values));
}

}  // namespace climvol
