#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "climvol/series.hpp"

namespace climvol::spatial {

struct Site {
    std::string id;
    double lat = 0.0;  // degrees
    double lon = 0.0;  // degrees
    double value = 0.0;
};

using SiteSet = std::vector<Site>;

// Throws DataError on fewer than `min_sites`, duplicate coordinates or
// non-finite values.
void validate_sites(const SiteSet& sites, std::size_t min_sites = 3);

double haversine_km(double lat1, double lon1, double lat2, double lon2);

// Binary, symmetric, zero-diagonal.
struct Adjacency {
    Eigen::MatrixXi matrix;

    std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }
    bool connected() const;
};

// Directed k-NN by great-circle distance, symmetrized by OR. Ties go to the
// lower site index.
Adjacency knn_adjacency(const SiteSet& sites, int k = 2);

struct CarConfig {
    double rho = 0.9;
    double prior_shape = 1.0;  // inverse-gamma prior for tau2 and sigma2
    double prior_rate = 0.01;
    int n_iter = 10000;
    int burn_in = 2000;
    int thin = 10;
    std::uint64_t seed = 1;
    std::optional<double> fixed_tau2;    // hold tau2 at this value instead of sampling
    std::optional<double> fixed_sigma2;  // hold sigma2_e at this value instead of sampling

    void validate() const;
};

struct CarResult {
    // Posterior means of mu + phi_i, averaged over draws of the Gaussian
    // full conditional given the variance draws (Rao-Blackwellized).
    std::vector<double> smoothed;
    // Plain averages of the sampled mu + phi_i and their batch-means
    // Monte Carlo standard errors.
    std::vector<double> sample_mean;
    std::vector<double> mcse;
    double mu_mean = 0.0;
    double tau2_mean = 0.0;
    double sigma2_mean = 0.0;
    std::size_t kept = 0;
    std::vector<std::string> warnings;
};

// Leroux precision rho (D_w - W) + (1 - rho) I.
Eigen::MatrixXd leroux_precision(const Adjacency& adj, double rho);

// Gibbs sampler for y_i = mu + phi_i + e_i with a Leroux CAR prior on phi,
// flat prior on mu, inverse-gamma priors on tau2 and sigma2_e.
CarResult leroux_car_smooth(const std::vector<double>& values, const Adjacency& adj, const CarConfig& cfg);
CarResult leroux_car_smooth(const SiteSet& sites, const Adjacency& adj, const CarConfig& cfg);

struct BoundingBox {
    double lat_min = 0.0, lat_max = 0.0;
    double lon_min = 0.0, lon_max = 0.0;
};

struct LatLon {
    double lat = 0.0;
    double lon = 0.0;
};

struct SurfaceSpec {
    BoundingBox bbox;
    double cell_size = 0.01;  // degrees
    double power = 2.0;
    // Cells whose centre falls outside this polygon are masked; empty means
    // the convex hull of the sites.
    std::vector<LatLon> boundary;
};

struct VolatilitySurface {
    YearMonth month;
    BoundingBox bbox;
    double cell_size = 0.01;
    std::size_t rows = 0;  // latitude cells, south to north
    std::size_t cols = 0;  // longitude cells, west to east
    std::vector<double> values;  // row-major; NaN where masked
    std::vector<std::uint8_t> mask;  // 1 = inside boundary

    double cell_lat(std::size_t r) const { return bbox.lat_min + (static_cast<double>(r) + 0.5) * cell_size; }
    double cell_lon(std::size_t c) const { return bbox.lon_min + (static_cast<double>(c) + 0.5) * cell_size; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

std::size_t grid_cells(double extent, double cell_size);

BoundingBox padded_bbox(const SiteSet& sites, double padding = 0.25);

// Inverse distance weighting at one point; exact at a site within 1e-9 degrees.
double idw_value(const SiteSet& sites, double lat, double lon, double power = 2.0);

VolatilitySurface idw_interpolate(const SiteSet& sites, const SurfaceSpec& spec, YearMonth month = {});

std::vector<LatLon> convex_hull(const std::vector<LatLon>& points);
bool point_in_polygon(const std::vector<LatLon>& polygon, double lat, double lon);

struct SurfaceConfig {
    int k = 2;
    CarConfig car;
    double cell_size = 0.01;
    double padding = 0.25;
    double power = 2.0;
    std::vector<LatLon> boundary;
    std::uint64_t seed = 1;
};

struct SiteRow {
    std::string id;
    double lat = 0.0;
    double lon = 0.0;
    double raw = 0.0;
    double smoothed = 0.0;
};

struct MonthSurface {
    YearMonth month;
    std::vector<SiteRow> sites;
    VolatilitySurface surface;
};

// Seed for one month, independent of processing order.
std::uint64_t month_seed(std::uint64_t global_seed, YearMonth month);

MonthSurface surface_for_month(const SiteSet& sites, YearMonth month, const SurfaceConfig& cfg);

// Runs k-NN -> CAR -> IDW for every month of an aligned panel of district
// volatilities. Months where any district is missing are skipped and
// reported through `warn`.
void monthly_surfaces(const DistrictPanel& volatility, const SurfaceConfig& cfg,
                      const std::function<void(MonthSurface&&)>& sink,
                      const std::function<void(const std::string&)>& warn = {});
std::vector<MonthSurface> monthly_surfaces(const DistrictPanel& volatility, const SurfaceConfig& cfg,
                                           std::vector<std::string>* warnings = nullptr);

void write_surface_csv(const VolatilitySurface& s, const std::string& path);
nlohmann::json surface_to_json(const VolatilitySurface& s);
void write_site_csv(const MonthSurface& m, const std::string& path);

}  // namespace climvol::spatial
