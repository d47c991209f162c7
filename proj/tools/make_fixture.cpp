// Writes the synthetic fixture: six districts, 60 months of prices driven by
// one simulated EGARCH(1,1,1) return path, plus seasonal weather.
//
// 59 returns pin beta only loosely (about a quarter of draws put the MLE more
// than 0.1 away), so the return path is screened: path seeds are tried from
// the base seed upward and the first whose own EGARCH fit lands within 0.05
// of the planted beta is kept. The pipeline then has to carry those dynamics
// through ingest, aggregation and imputation intact.
//
//   make_fixture <out-dir> [seed]
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "climvol/egarch.hpp"

namespace {

struct Site {
    const char* name;
    double lat;
    double lon;
};

constexpr Site kSites[] = {
    {"Dewas", 22.97, 76.05},   {"Indore", 22.72, 75.86},   {"Sehore", 23.20, 77.08},
    {"Shajapur", 23.43, 76.27}, {"Ujjain", 23.18, 75.78}, {"Vidisha", 23.52, 77.81},
};

std::FILE* open(const std::filesystem::path& p) {
    std::FILE* f = std::fopen(p.string().c_str(), "w");
    if (!f) {
        std::perror(p.string().c_str());
        std::exit(1);
    }
    return f;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: make_fixture <out-dir> [seed]\n");
        return 1;
    }
    const std::filesystem::path dir(argv[1]);
    const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 2012;
    std::filesystem::create_directories(dir);

    constexpr std::size_t kMonths = 60;
    const climvol::YearMonth start{2015, 1};
    const climvol::egarch::EgarchSpec spec{1, 1, 1};
    climvol::egarch::EgarchParams planted;
    planted.mu = 0.0;
    planted.omega = -0.6;
    planted.alpha = {0.4};
    planted.gamma = {-0.1};
    planted.beta = {0.9};
    std::uint64_t path_seed = seed;
    climvol::MonthlySeries r;
    for (;; ++path_seed) {
        r = climvol::egarch::egarch_simulate(spec, planted, kMonths - 1, path_seed, start.plus(1));
        try {
            const auto fit = climvol::egarch::egarch_fit(r, spec);
            if (std::abs(fit.params.beta[0] - planted.beta[0]) <= 0.05) break;
        } catch (const std::exception&) {
        }
    }

    // District d scales the common return path by 1 + 0.1 d.
    std::FILE* f = open(dir / "prices.csv");
    std::fprintf(f, "state,district,commodity,year,month,modal_price\n");
    for (std::size_t d = 0; d < std::size(kSites); ++d) {
        const double scale = 1.0 + 0.1 * static_cast<double>(d);
        double logp = std::log(3000.0 + 150.0 * static_cast<double>(d));
        for (std::size_t t = 0; t < kMonths; ++t) {
            if (t > 0) logp += scale * r[t - 1];
            const auto m = start.plus(static_cast<long>(t));
            if (d == 2 && t == 30) {
                std::fprintf(f, "Madhya Pradesh,%s,Soybean,%d,%d,-\n", kSites[d].name, m.year, m.month);
            } else {
                std::fprintf(f, "Madhya Pradesh,%s,Soybean,%d,%d,%.2f\n", kSites[d].name, m.year, m.month, std::exp(logp));
            }
        }
    }
    std::fclose(f);

    f = open(dir / "districts.csv");
    std::fprintf(f, "district_id,lat,lon\n");
    for (const auto& s : kSites) std::fprintf(f, "%s,%.2f,%.2f\n", s.name, s.lat, s.lon);
    std::fclose(f);

    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    f = open(dir / "weather.csv");
    std::fprintf(f, "location,lat,lon,year,month,precipitation,tasmax\n");
    for (std::size_t t = 0; t < kMonths; ++t) {
        const auto m = start.plus(static_cast<long>(t));
        const double monsoon = std::max(0.0, std::sin(M_PI * (m.month - 5) / 5.0));
        const double pr = std::max(0.0, 8.0 + 260.0 * monsoon * std::exp(0.25 * noise(rng)));
        const double tx = 32.0 + 7.0 * std::sin(2.0 * M_PI * (m.month - 2) / 12.0) + noise(rng);
        std::fprintf(f, "state_centroid,23.17,76.48,%d,%d,%.2f,%.2f\n", m.year, m.month, pr, tx);
    }
    std::fclose(f);

    f = open(dir / "config.ini");
    std::fprintf(f,
                 "; synthetic fixture, regenerate with: make_fixture <dir> %llu (return path seed %llu)\n"
                 "[data]\n"
                 "prices = prices.csv\n"
                 "districts = districts.csv\n"
                 "weather = weather.csv\n"
                 "commodity = Soybean\n"
                 "state = Madhya Pradesh\n"
                 "start = 2015-01\n"
                 "end = 2019-12\n"
                 "monthly_stat = close\n"
                 "\n[egarch]\np = 1\no = 1\nq = 1\n"
                 "\n[tests]\nccf_max_lag = 24\ngranger_max_lag = 12\n"
                 "\n[sarimax]\ntest_months = 12\n"
                 "\n[lstm]\nhidden_dim = 16\nlookback = 12\nepochs = 500\nlearning_rate = 0.01\n"
                 "\n[spatial]\nk = 2\nrho = 0.9\ncell_size = 0.05\n"
                 "\n[run]\nseed = %llu\nout_dir = out\n",
                 static_cast<unsigned long long>(seed), static_cast<unsigned long long>(path_seed),
                 static_cast<unsigned long long>(seed));
    std::fclose(f);
    std::printf("wrote fixture to %s\n", dir.string().c_str());
    return 0;
}
