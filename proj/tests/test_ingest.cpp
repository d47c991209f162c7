#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "climvol/config.hpp"
#include "climvol/errors.hpp"
#include "climvol/ingest.hpp"
#include "climvol/weather.hpp"
#include "test_support.hpp"

// after Eigen: resolv.h, pulled in by httplib, defines a `_res` macro
#include <httplib.h>

using namespace climvol;
using namespace climvol::ingest;
using testing_support::series;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() / ("climvol_" + std::string(info->test_suite_name()) + "_" + info->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }

    std::string write(const std::string& name, const std::string& text) const {
        const auto p = path_ / name;
        std::ofstream(p) << text;
        return p.string();
    }
    std::string str() const { return path_.string(); }

private:
    fs::path path_;
};

const char* kHeader = "state,district,commodity,year,month,modal_price\n";

}  // namespace

TEST(PriceCsv, HeaderAndOneRow) {
    TempDir dir;
    const auto r = read_price_csv(dir.write("p.csv", std::string(kHeader) + "Madhya Pradesh,Indore,Soybean,2015,3,4100\n"));
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].district, "Indore");
    EXPECT_EQ(r.records[0].month, (YearMonth{2015, 3}));
    EXPECT_EQ(r.records[0].modal_price, 4100.0);
    EXPECT_EQ(r.data_rows, 1u);
}

TEST(PriceCsv, BadRowsAreLoggedNotFatal) {
    TempDir dir;
    const auto r = read_price_csv(dir.write("p.csv", std::string(kHeader) +
                                                        "MP,Indore,Soybean,2015,3,4100\n"
                                                        "MP,Indore,Soybean,2015,4,-\n"
                                                        "\n"
                                                        "MP,Indore,Soybean,2015,5,0\n"
                                                        "MP,Indore,Soybean,2015,13,4000\n"
                                                        "MP,Indore,Soybean,2015\n"
                                                        "\"MP, central\",Indore,Soybean,2015,6,4200\n"));
    EXPECT_EQ(r.records.size(), 2u);
    EXPECT_EQ(r.records[1].state, "MP, central");
    ASSERT_EQ(r.errors.size(), 4u);
    EXPECT_EQ(r.errors[0].line, 3u);
    EXPECT_NE(r.errors[0].reason.find("modal_price"), std::string::npos);
    EXPECT_EQ(r.data_rows, r.records.size() + r.errors.size());
}

TEST(PriceCsv, RowCountIsLossless) {
    TempDir dir;
    testing_support::Gen g(3);
    std::string text = kHeader;
    std::size_t rows = 0;
    for (int i = 0; i < 300; ++i) {
        const double u = g.uniform();
        ++rows;
        if (u < 0.1) text += "MP,Dewas,Soybean,2016,2,NA\n";
        else if (u < 0.15) text += "MP,Dewas,Soybean,20x6,2,100\n";
        else text += "MP,Dewas,Soybean,2016," + std::to_string(g.integer(1, 12)) + "," + std::to_string(g.uniform(1000, 6000)) + "\n";
    }
    const auto r = read_price_csv(dir.write("p.csv", text));
    EXPECT_EQ(r.data_rows, rows);
    EXPECT_EQ(r.records.size() + r.errors.size(), rows);
    EXPECT_GT(r.errors.size(), 0u);
}

TEST(PriceCsv, MissingColumnsOrFile) {
    TempDir dir;
    EXPECT_THROW(read_price_csv(dir.write("p.csv", "state,district,year,month,modal_price\n")), DataError);
    EXPECT_THROW(read_price_csv(dir.str() + "/nope.csv"), DataError);
}

TEST(PricePanel, CloseVersusMean) {
    TempDir dir;
    const auto r = read_price_csv(dir.write("p.csv",
                                            "state,district,commodity,year,month,day,modal_price\n"
                                            "MP,Indore,Soybean,2015,3,20,4200\n"
                                            "MP,Indore,Soybean,2015,3,5,4000\n"
                                            "MP,Indore,soybean,2015,5,1,4400\n"
                                            "MP,Indore,Wheat,2015,4,1,2000\n"));
    const std::map<std::string, Location> locs{{"Indore", {22.7, 75.9}}};
    const auto close = build_price_panel(r.records, "Soybean", "MP", MonthlyStat::close, locs);
    const auto mean = build_price_panel(r.records, "Soybean", "mp", MonthlyStat::mean, locs);
    const auto& c = close.districts.at("Indore").series;
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c[0], 4200.0);
    EXPECT_TRUE(is_missing(c[1]));
    EXPECT_EQ(c[2], 4400.0);
    EXPECT_EQ(mean.districts.at("Indore").series[0], 4100.0);
    EXPECT_THROW(build_price_panel(r.records, "Soybean", "MP", MonthlyStat::close, {}), DataError);
    EXPECT_THROW(build_price_panel(r.records, "Maize", "MP", MonthlyStat::close, locs), DataError);
    EXPECT_EQ(parse_monthly_stat("mean"), MonthlyStat::mean);
    EXPECT_THROW(parse_monthly_stat("median"), DataError);
}

TEST(DistrictCsv, AcceptsBothHeaders) {
    TempDir dir;
    const auto a = read_district_csv(dir.write("a.csv", "district_id,lat,lon\nIndore,22.7,75.9\n"));
    const auto b = read_district_csv(dir.write("b.csv", "district,lat,lon\nIndore,22.7,75.9\n"));
    EXPECT_EQ(a.at("Indore").lat, 22.7);
    EXPECT_EQ(b.at("Indore").lon, 75.9);
    EXPECT_THROW(read_district_csv(dir.write("c.csv", "district_id,lat,lon\nX,95,75\n")), DataError);
}

TEST(Interpolate, Examples) {
    std::vector<double> a{4, kMissing, 6};
    EXPECT_EQ(interpolate_gaps(a, 2), 1u);
    EXPECT_DOUBLE_EQ(a[1], 5.0);
    std::vector<double> b{1, kMissing, kMissing, kMissing, 5};
    EXPECT_EQ(interpolate_gaps(b, 2), 3u);
    EXPECT_TRUE(is_missing(b[2]));
    std::vector<double> c{kMissing, 1, kMissing, kMissing, 4, kMissing};
    interpolate_gaps(c, 2);
    EXPECT_TRUE(is_missing(c[0]));
    EXPECT_DOUBLE_EQ(c[2], 2.0);
    EXPECT_DOUBLE_EQ(c[3], 3.0);
    EXPECT_TRUE(is_missing(c[5]));
}

namespace {

WeatherSeries flat_weather(YearMonth start, std::size_t n) {
    WeatherSeries w;
    w.precipitation = series(std::vector<double>(n, 50.0), start);
    w.tasmax = series(std::vector<double>(n, 30.0), start);
    return w;
}

}  // namespace

TEST(Align, ImputesExcludesAndTrims) {
    DistrictPanel p;
    p.districts["a"] = District{series({kMissing, 10, kMissing, 12, 13, 14, kMissing}, {2015, 1}), 22, 75};
    p.districts["b"] = District{series({5, 5, kMissing, kMissing, kMissing, 5, 5}, {2015, 1}), 23, 76};
    p.districts["c"] = District{series({7, 7, 7, 7, 7, 7, 7}, {2015, 1}), 24, 77};
    const auto out = align_and_impute(p, flat_weather({2014, 6}, 30));
    EXPECT_EQ(out.start, (YearMonth{2015, 2}));
    EXPECT_EQ(out.end, (YearMonth{2015, 6}));
    EXPECT_EQ(out.panel.districts.size(), 2u);
    ASSERT_EQ(out.excluded.size(), 1u);
    EXPECT_EQ(out.excluded[0].substr(0, 2), "b:");
    EXPECT_EQ(out.panel.districts.at("a").series.values, (std::vector<double>{10, 11, 12, 13, 14}));
    EXPECT_EQ(out.weather.tasmax.size(), 5u);

    // a gap the common range cuts in half lands on the edge
    p.districts["b"] = District{series({5, 5, 5, 5, 5, kMissing, kMissing}, {2015, 1}), 23, 76};
    p.districts["d"] = District{series({1, 1, 1, 1, 1, 1, 1, 1}, {2015, 1}), 23, 78};
    p.districts["c"] = District{series({7, 7, 7, 7, 7, 7}, {2015, 1}), 24, 77};
    p.districts["b"].series.values.push_back(5);
    const auto edge = align_and_impute(p, flat_weather({2014, 6}, 30));
    EXPECT_EQ(edge.end, (YearMonth{2015, 6}));
    ASSERT_EQ(edge.excluded.size(), 1u);
    EXPECT_EQ(edge.excluded[0].substr(0, 2), "b:");
}

TEST(Align, AlreadyAlignedIsIdentity) {
    testing_support::Gen g(4);
    DistrictPanel p;
    for (const char* id : {"x", "y"}) p.districts[id] = District{series(g.normals(24), {2018, 1}), 0, 0};
    const auto w = flat_weather({2018, 1}, 24);
    const auto out = align_and_impute(p, w);
    EXPECT_EQ(out.panel.districts.at("x").series.values, p.districts.at("x").series.values);
    EXPECT_EQ(out.weather.precipitation.values, w.precipitation.values);
    EXPECT_TRUE(out.excluded.empty());
}

TEST(Align, Errors) {
    DistrictPanel p;
    p.districts["a"] = District{series({1, kMissing, kMissing, kMissing, 5}, {2015, 1}), 0, 0};
    EXPECT_THROW(align_and_impute(p, flat_weather({2015, 1}, 5)), DataError);
    p.districts["a"] = District{series({1, 2, 3, 4, 5}, {2015, 1}), 0, 0};
    auto w = flat_weather({2015, 1}, 5);
    w.tasmax.values[1] = w.tasmax.values[2] = w.tasmax.values[3] = kMissing;
    EXPECT_THROW(align_and_impute(p, w), DataError);
    EXPECT_THROW(align_and_impute(p, flat_weather({2019, 1}, 5)), DataError);
}

TEST(WeatherCsv, ReadWriteAndRanges) {
    TempDir dir;
    const auto path = dir.write("w.csv",
                                "location,lat,lon,year,month,precipitation,tasmax\n"
                                "c,23,77,2015,1,10.5,25\n"
                                "c,23,77,2015,2,NA,26\n"
                                "c,23,77,2015,4,3,\n");
    const auto w = weather_series(read_weather_csv(path));
    ASSERT_EQ(w.precipitation.size(), 4u);
    EXPECT_EQ(w.precipitation[0], 10.5);
    EXPECT_TRUE(is_missing(w.precipitation[1]));
    EXPECT_TRUE(is_missing(w.precipitation[2]));
    EXPECT_TRUE(is_missing(w.tasmax[3]));
    const auto out = dir.str() + "/round.csv";
    write_weather_csv(out, "c", 23, 77, w);
    const auto back = weather_series(read_weather_csv(out));
    EXPECT_EQ(back.tasmax[0], 25.0);
    EXPECT_EQ(back.precipitation.start, w.precipitation.start);

    EXPECT_THROW(read_weather_csv(dir.write("n.csv", "location,lat,lon,year,month,precipitation,tasmax\nc,23,77,2015,1,-1,25\n")),
                 DataError);
    EXPECT_THROW(read_weather_csv(dir.write("t.csv", "location,lat,lon,year,month,precipitation,tasmax\nc,23,77,2015,1,1,75\n")),
                 DataError);
}

namespace {

const char* kPowerBody = R"({
  "header": {"fill_value": -999.0},
  "properties": {"parameter": {
    "PRECTOTCORR": {"202001": 1.0, "202002": 2.0, "202003": -999.0, "202013": 5.0, "201912": 9.0},
    "T2M_MAX": {"202001": 25.5, "202002": -999.0, "202003": 30.0, "202013": 28.0}
  }}
})";

weather::PowerRequest small_request() {
    weather::PowerRequest req;
    req.lat = 23.25;
    req.lon = 77.41;
    req.start = {2020, 1};
    req.end = {2020, 3};
    return req;
}

}  // namespace

TEST(PowerResponse, FillValuesUnitsAndAnnualKey) {
    const auto w = weather::parse_power_response(kPowerBody, small_request());
    ASSERT_EQ(w.precipitation.size(), 3u);
    EXPECT_DOUBLE_EQ(w.precipitation[0], 31.0);
    EXPECT_DOUBLE_EQ(w.precipitation[1], 58.0);  // leap February
    EXPECT_TRUE(is_missing(w.precipitation[2]));
    EXPECT_DOUBLE_EQ(w.tasmax[0], 25.5);
    EXPECT_TRUE(is_missing(w.tasmax[1]));
    EXPECT_THROW(weather::parse_power_response("not json", small_request()), DataError);
    EXPECT_THROW(weather::parse_power_response(R"({"properties":{"parameter":{}}})", small_request()), DataError);
}

TEST(PowerRequest, PathAndKey) {
    const auto req = small_request();
    const auto path = weather::request_path(req, weather::PowerClientConfig{});
    EXPECT_NE(path.find("latitude=23.2500"), std::string::npos);
    EXPECT_NE(path.find("start=2020&end=2020"), std::string::npos);
    auto other = req;
    other.lat += 0.01;
    EXPECT_NE(weather::cache_key(req), weather::cache_key(other));
    EXPECT_EQ(weather::cache_key(req), weather::cache_key(small_request()));
}

TEST(PowerClient, CacheAvoidsSecondRequest) {
    TempDir dir;
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Get("/api/temporal/monthly/point", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.set_content(kPowerBody, "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    weather::PowerClientConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.cache_dir = dir.str() + "/cache";
    const auto a = weather::fetch_weather(small_request(), cfg, weather::default_http_getter(5));
    EXPECT_EQ(hits.load(), 1);
    const auto b = weather::fetch_weather(small_request(), cfg, weather::default_http_getter(5));
    EXPECT_EQ(hits.load(), 1);
    EXPECT_EQ(a.tasmax[0], b.tasmax[0]);
    EXPECT_TRUE(fs::exists(cfg.cache_dir + "/" + weather::cache_key(small_request())));

    server.stop();
    th.join();
}

TEST(PowerClient, OfflineMissFails) {
    TempDir dir;
    weather::PowerClientConfig cfg;
    cfg.cache_dir = dir.str();
    cfg.offline = true;
    int calls = 0;
    const weather::HttpGetter getter = [&](const std::string&, const std::string&) {
        ++calls;
        return std::string(kPowerBody);
    };
    EXPECT_THROW(weather::fetch_weather(small_request(), cfg, getter), DataError);
    EXPECT_EQ(calls, 0);
    cfg.offline = false;
    EXPECT_NO_THROW(weather::fetch_weather(small_request(), cfg, getter));
    cfg.offline = true;
    EXPECT_NO_THROW(weather::fetch_weather(small_request(), cfg, getter));
    EXPECT_EQ(calls, 1);
}

TEST(Config, ParseOverridesAndUnknownKeys) {
    const auto cfg = parse_config(
        "[data]\nprices = prices.csv\ncommodity = Brinjal\nstart = 2015-01\n"
        "[sarimax]\np = 0,1\ntest_months = 12\n[run]\nseed = 7\n",
        "/base");
    EXPECT_EQ(fs::path(cfg.prices), fs::path("/base/prices.csv"));
    EXPECT_EQ(cfg.commodity, "Brinjal");
    EXPECT_EQ(cfg.start, (YearMonth{2015, 1}));
    EXPECT_EQ(cfg.grid.p, (std::vector<int>{0, 1}));
    EXPECT_EQ(cfg.test_months, 12u);
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_EQ(cfg.state, "Madhya Pradesh");

    auto c2 = cfg;
    apply_overrides(c2, {"run.seed=99", "lstm.epochs=10", "data.monthly_stat=mean"});
    EXPECT_EQ(c2.seed, 99u);
    EXPECT_EQ(c2.lstm.epochs, 10);
    EXPECT_EQ(c2.monthly_stat, MonthlyStat::mean);
    EXPECT_THROW(apply_overrides(c2, {"run.nope=1"}), DataError);
    EXPECT_THROW(apply_overrides(c2, {"run.seed"}), DataError);
    EXPECT_THROW(parse_config("[spatial]\nrho = abc\n"), DataError);
    EXPECT_THROW(parse_config("[weird]\nx = 1\n"), DataError);
}
