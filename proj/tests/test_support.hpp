#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "climvol/series.hpp"

namespace testing_support {

// Small seeded generator for property tests (splitmix64 + Box-Muller), kept
// separate from the library's RNG use so oracles do not share code with it.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    int integer(int lo, int hi) { return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1)); }
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }
    std::vector<double> normals(std::size_t n, double sd = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = sd * normal();
        return v;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline climvol::MonthlySeries series(std::vector<double> v, climvol::YearMonth start = {2000, 1}) {
    return climvol::MonthlySeries(start, std::move(v));
}

inline climvol::MonthlySeries white_noise(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    Gen g(seed);
    return series(g.normals(n, sd));
}

inline climvol::MonthlySeries random_walk(std::size_t n, std::uint64_t seed) {
    Gen g(seed);
    std::vector<double> v(n);
    double x = 0.0;
    for (auto& e : v) e = (x += g.normal());
    return series(std::move(v));
}

}  // namespace testing_support
