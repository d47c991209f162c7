#include "climvol/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "climvol/errors.hpp"

namespace climvol::spatial {

namespace {

constexpr double kEarthRadiusKm = 6371.0088;
constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kCoincident = 1e-9;  // degrees

double draw_inverse_gamma(std::mt19937_64& rng, double shape, double rate) {
    std::gamma_distribution<double> g(shape, 1.0 / rate);
    return 1.0 / g(rng);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Conditional mean of mu + phi given the variances, from the joint
// Gaussian full conditional of (mu, phi).
Eigen::VectorXd conditional_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& q, double tau2, double sigma2) {
    const auto n = y.size();
    Eigen::MatrixXd prec = Eigen::MatrixXd::Zero(n + 1, n + 1);
    prec(0, 0) = static_cast<double>(n) / sigma2;
    prec.block(0, 1, 1, n).setConstant(1.0 / sigma2);
    prec.block(1, 0, n, 1).setConstant(1.0 / sigma2);
    prec.block(1, 1, n, n) = q / tau2;
    prec.block(1, 1, n, n).diagonal().array() += 1.0 / sigma2;
    Eigen::VectorXd rhs(n + 1);
    rhs(0) = y.sum() / sigma2;
    rhs.tail(n) = y / sigma2;
    const Eigen::VectorXd theta = prec.ldlt().solve(rhs);
    return theta.tail(n).array() + theta(0);
}

}  // namespace

void validate_sites(const SiteSet& sites, std::size_t min_sites) {
    if (sites.size() < min_sites) {
        throw DataError("spatial: need at least " + std::to_string(min_sites) + " sites, got " + std::to_string(sites.size()));
    }
    std::set<std::pair<double, double>> seen;
    for (const auto& s : sites) {
        if (!std::isfinite(s.lat) || !std::isfinite(s.lon) || !std::isfinite(s.value)) {
            throw DataError("spatial: non-finite coordinate or value at site '" + s.id + "'");
        }
        if (!seen.emplace(s.lat, s.lon).second) throw DataError("spatial: duplicate coordinates at site '" + s.id + "'");
    }
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
    const double dlat = (lat2 - lat1) * kDeg;
    const double dlon = (lon2 - lon1) * kDeg;
    const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * kDeg) * std::cos(lat2 * kDeg) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

bool Adjacency::connected() const {
    const auto n = matrix.rows();
    if (n == 0) return true;
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::vector<Eigen::Index> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
        const auto i = stack.back();
        stack.pop_back();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (matrix(i, j) && !seen[static_cast<std::size_t>(j)]) {
                seen[static_cast<std::size_t>(j)] = true;
                stack.push_back(j);
            }
        }
    }
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

Adjacency knn_adjacency(const SiteSet& sites, int k) {
    if (k < 1) throw DataError("knn_adjacency: k must be >= 1");
    validate_sites(sites, 1);
    const auto n = sites.size();
    if (n <= static_cast<std::size_t>(k)) throw DataError("knn_adjacency: need more sites than k");
    Adjacency adj;
    adj.matrix = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t i = 0; i < n; ++i) {
        dist.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) dist.emplace_back(haversine_km(sites[i].lat, sites[i].lon, sites[j].lat, sites[j].lon), j);
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        for (int m = 0; m < k; ++m) {
            const auto j = static_cast<Eigen::Index>(dist[static_cast<std::size_t>(m)].second);
            adj.matrix(static_cast<Eigen::Index>(i), j) = 1;
            adj.matrix(j, static_cast<Eigen::Index>(i)) = 1;
        }
    }
    return adj;
}

void CarConfig::validate() const {
    if (!(rho >= 0.0 && rho < 1.0)) throw DataError("CarConfig: rho must be in [0,1)");
    if (!(prior_shape > 0.0 && prior_rate > 0.0)) throw DataError("CarConfig: inverse-gamma prior must be positive");
    if (burn_in < 0 || n_iter <= burn_in) throw DataError("CarConfig: need n_iter > burn_in >= 0");
    if (thin < 1) throw DataError("CarConfig: thin must be >= 1");
    if (fixed_tau2 && !(*fixed_tau2 > 0.0)) throw DataError("CarConfig: fixed tau2 must be positive");
    if (fixed_sigma2 && !(*fixed_sigma2 > 0.0)) throw DataError("CarConfig: fixed sigma2 must be positive");
}

Eigen::MatrixXd leroux_precision(const Adjacency& adj, double rho) {
    const Eigen::MatrixXd w = adj.matrix.cast<double>();
    Eigen::MatrixXd q = -rho * w;
    q.diagonal() = rho * w.rowwise().sum().array() + (1.0 - rho);
    return q;
}

CarResult leroux_car_smooth(const std::vector<double>& values, const Adjacency& adj, const CarConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<Eigen::Index>(values.size());
    if (n < 2) throw DataError("leroux_car_smooth: need at least 2 sites");
    if (adj.matrix.rows() != n || adj.matrix.cols() != n) throw DataError("leroux_car_smooth: adjacency does not match sites");
    if (adj.matrix != adj.matrix.transpose() || adj.matrix.diagonal().any()) {
        throw DataError("leroux_car_smooth: adjacency must be symmetric with zero diagonal");
    }
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(values.data(), n);
    if (!y.allFinite()) throw DataError("leroux_car_smooth: non-finite observation");

    CarResult res;
    if (!adj.connected() && cfg.rho > 0.95) {
        res.warnings.push_back("adjacency graph is disconnected and rho is close to 1; CAR prior is nearly improper per component");
    }
    const Eigen::MatrixXd q = leroux_precision(adj, cfg.rho);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double ybar = y.mean();
    const double yvar = std::max((y.array() - ybar).square().sum() / static_cast<double>(n), 1e-12);
    double mu = ybar;
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
    double tau2 = cfg.fixed_tau2.value_or(yvar / 2.0);
    double sigma2 = cfg.fixed_sigma2.value_or(yvar / 2.0);
    const double shape_post = cfg.prior_shape + 0.5 * static_cast<double>(n);

    Eigen::VectorXd rb_sum = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::VectorXd> draws;
    double mu_sum = 0.0, tau2_sum = 0.0, sigma2_sum = 0.0;
    Eigen::VectorXd z(n);
    for (int it = 0; it < cfg.n_iter; ++it) {
        Eigen::MatrixXd a = q / tau2;
        a.diagonal().array() += 1.0 / sigma2;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) throw NumericalError("leroux_car_smooth: conditional precision not PD");
        const Eigen::VectorXd mean_phi = llt.solve((y.array() - mu).matrix() / sigma2);
        for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
        phi = mean_phi + llt.matrixU().solve(z);

        mu = (y - phi).mean() + std::sqrt(sigma2 / static_cast<double>(n)) * normal(rng);

        if (!cfg.fixed_tau2) tau2 = draw_inverse_gamma(rng, shape_post, cfg.prior_rate + 0.5 * phi.dot(q * phi));
        if (!cfg.fixed_sigma2) {
            const double rss = (y.array() - mu - phi.array()).square().sum();
            sigma2 = draw_inverse_gamma(rng, shape_post, cfg.prior_rate + 0.5 * rss);
        }
        if (!std::isfinite(mu) || !phi.allFinite() || !std::isfinite(tau2) || !std::isfinite(sigma2)) {
            throw NumericalError("leroux_car_smooth: sampler produced a non-finite draw");
        }
        if (it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0) {
            draws.push_back(phi.array() + mu);
            rb_sum += conditional_fit(y, q, tau2, sigma2);
            mu_sum += mu;
            tau2_sum += tau2;
            sigma2_sum += sigma2;
        }
    }

    const double kept = static_cast<double>(draws.size());
    res.kept = draws.size();
    res.mu_mean = mu_sum / kept;
    res.tau2_mean = tau2_sum / kept;
    res.sigma2_mean = sigma2_sum / kept;
    Eigen::VectorXd plain = Eigen::VectorXd::Zero(n);
    for (const auto& d : draws) plain += d;
    plain /= kept;
    const Eigen::VectorXd rb = rb_sum / kept;
    res.smoothed.assign(rb.data(), rb.data() + n);
    res.sample_mean.assign(plain.data(), plain.data() + n);

    // Batch means standard error.
    const std::size_t batches = std::max<std::size_t>(2, std::min<std::size_t>(20, draws.size() / 2));
    const std::size_t per = draws.size() / batches;
    res.mcse.assign(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> bm(batches, 0.0);
        for (std::size_t b = 0; b < batches; ++b) {
            for (std::size_t k = 0; k < per; ++k) bm[b] += draws[b * per + k](i);
            bm[b] /= static_cast<double>(per);
        }
        const double m = std::accumulate(bm.begin(), bm.end(), 0.0) / static_cast<double>(batches);
        double v = 0.0;
        for (double x : bm) v += (x - m) * (x - m);
        v /= static_cast<double>(batches - 1);
        res.mcse[static_cast<std::size_t>(i)] = std::sqrt(v / static_cast<double>(batches));
    }
    return res;
}

CarResult leroux_car_smooth(const SiteSet& sites, const Adjacency& adj, const CarConfig& cfg) {
    std::vector<double> v;
    v.reserve(sites.size());
    for (const auto& s : sites) v.push_back(s.value);
    return leroux_car_smooth(v, adj, cfg);
}

std::size_t grid_cells(double extent, double cell_size) {
    if (!(cell_size > 0.0)) throw DataError("grid: cell size must be positive");
    if (!(extent > 0.0)) throw DataError("grid: bounding box must have positive extent");
    return static_cast<std::size_t>(std::ceil(extent / cell_size - 1e-9));
}

BoundingBox padded_bbox(const SiteSet& sites, double padding) {
    if (sites.empty()) throw DataError("padded_bbox: no sites");
    BoundingBox b{sites[0].lat, sites[0].lat, sites[0].lon, sites[0].lon};
    for (const auto& s : sites) {
        b.lat_min = std::min(b.lat_min, s.lat);
        b.lat_max = std::max(b.lat_max, s.lat);
        b.lon_min = std::min(b.lon_min, s.lon);
        b.lon_max = std::max(b.lon_max, s.lon);
    }
    b.lat_min -= padding;
    b.lat_max += padding;
    b.lon_min -= padding;
    b.lon_max += padding;
    return b;
}

double idw_value(const SiteSet& sites, double lat, double lon, double power) {
    if (sites.empty()) throw DataError("idw: empty site set");
    double num = 0.0;
    double den = 0.0;
    double lo = sites[0].value;
    double hi = sites[0].value;
    for (const auto& s : sites) {
        if (std::hypot(s.lat - lat, s.lon - lon) < kCoincident) return s.value;
        const double w = std::pow(haversine_km(lat, lon, s.lat, s.lon), -power);
        num += w * s.value;
        den += w;
        lo = std::min(lo, s.value);
        hi = std::max(hi, s.value);
    }
    return std::clamp(num / den, lo, hi);
}

std::vector<LatLon> convex_hull(const std::vector<LatLon>& points) {
    std::vector<LatLon> pts = points;
    std::sort(pts.begin(), pts.end(), [](const LatLon& a, const LatLon& b) {
        return a.lon < b.lon || (a.lon == b.lon && a.lat < b.lat);
    });
    pts.erase(std::unique(pts.begin(), pts.end(), [](const LatLon& a, const LatLon& b) {
                  return a.lon == b.lon && a.lat == b.lat;
              }),
              pts.end());
    if (pts.size() < 3) return pts;
    auto cross = [](const LatLon& o, const LatLon& a, const LatLon& b) {
        return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
    };
    std::vector<LatLon> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

bool point_in_polygon(const std::vector<LatLon>& poly, double lat, double lon) {
    if (poly.size() < 3) return false;
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        // on-edge points count as inside
        const double cr = (b.lon - a.lon) * (lat - a.lat) - (b.lat - a.lat) * (lon - a.lon);
        if (std::abs(cr) < 1e-12 && lon >= std::min(a.lon, b.lon) && lon <= std::max(a.lon, b.lon) &&
            lat >= std::min(a.lat, b.lat) && lat <= std::max(a.lat, b.lat)) {
            return true;
        }
        if ((a.lat > lat) != (b.lat > lat) && lon < (b.lon - a.lon) * (lat - a.lat) / (b.lat - a.lat) + a.lon) {
            inside = !inside;
        }
    }
    return inside;
}

VolatilitySurface idw_interpolate(const SiteSet& sites, const SurfaceSpec& spec, YearMonth month) {
    if (sites.empty()) throw DataError("idw_interpolate: empty site set");
    VolatilitySurface s;
    s.month = month;
    s.bbox = spec.bbox;
    s.cell_size = spec.cell_size;
    s.rows = grid_cells(spec.bbox.lat_max - spec.bbox.lat_min, spec.cell_size);
    s.cols = grid_cells(spec.bbox.lon_max - spec.bbox.lon_min, spec.cell_size);

    std::vector<LatLon> boundary = spec.boundary;
    if (boundary.empty()) {
        std::vector<LatLon> pts;
        for (const auto& site : sites) pts.push_back({site.lat, site.lon});
        boundary = convex_hull(pts);
    }

    const std::size_t m = sites.size();
    std::vector<double> slat(m), scos(m), slon(m);
    double lo = sites[0].value;
    double hi = sites[0].value;
    for (std::size_t i = 0; i < m; ++i) {
        slat[i] = sites[i].lat * kDeg;
        slon[i] = sites[i].lon * kDeg;
        scos[i] = std::cos(slat[i]);
        lo = std::min(lo, sites[i].value);
        hi = std::max(hi, sites[i].value);
    }
    s.values.assign(s.rows * s.cols, std::numeric_limits<double>::quiet_NaN());
    s.mask.assign(s.rows * s.cols, 0);
    for (std::size_t r = 0; r < s.rows; ++r) {
        const double lat = s.cell_lat(r);
        const double plat = lat * kDeg;
        const double pcos = std::cos(plat);
        for (std::size_t c = 0; c < s.cols; ++c) {
            const double lon = s.cell_lon(c);
            if (!point_in_polygon(boundary, lat, lon)) continue;
            s.mask[r * s.cols + c] = 1;
            double num = 0.0;
            double den = 0.0;
            double exact = std::numeric_limits<double>::quiet_NaN();
            for (std::size_t i = 0; i < m; ++i) {
                if (std::hypot(sites[i].lat - lat, sites[i].lon - lon) < kCoincident) {
                    exact = sites[i].value;
                    break;
                }
                const double sdlat = std::sin((slat[i] - plat) / 2);
                const double sdlon = std::sin((slon[i] - lon * kDeg) / 2);
                const double a = sdlat * sdlat + pcos * scos[i] * sdlon * sdlon;
                const double d = 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
                const double w = spec.power == 2.0 ? 1.0 / (d * d) : std::pow(d, -spec.power);
                num += w * sites[i].value;
                den += w;
            }
            s.values[r * s.cols + c] = std::isnan(exact) ? std::clamp(num / den, lo, hi) : exact;
        }
    }
    return s;
}

std::uint64_t month_seed(std::uint64_t global_seed, YearMonth month) {
    return splitmix64(global_seed ^ splitmix64(static_cast<std::uint64_t>(month.ordinal())));
}

MonthSurface surface_for_month(const SiteSet& sites, YearMonth month, const SurfaceConfig& cfg) {
    validate_sites(sites, 3);
    const auto adj = knn_adjacency(sites, cfg.k);
    CarConfig car = cfg.car;
    car.seed = month_seed(cfg.seed, month);
    const auto smooth = leroux_car_smooth(sites, adj, car);

    MonthSurface out;
    out.month = month;
    SiteSet smoothed = sites;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        smoothed[i].value = smooth.smoothed[i];
        out.sites.push_back({sites[i].id, sites[i].lat, sites[i].lon, sites[i].value, smooth.smoothed[i]});
    }
    SurfaceSpec spec;
    spec.bbox = padded_bbox(sites, cfg.padding);
    spec.cell_size = cfg.cell_size;
    spec.power = cfg.power;
    spec.boundary = cfg.boundary;
    out.surface = idw_interpolate(smoothed, spec, month);
    return out;
}

void monthly_surfaces(const DistrictPanel& volatility, const SurfaceConfig& cfg,
                      const std::function<void(MonthSurface&&)>& sink,
                      const std::function<void(const std::string&)>& warn) {
    if (volatility.districts.size() < 3) throw DataError("monthly_surfaces: need at least 3 districts");
    if (!volatility.aligned()) throw DataError("monthly_surfaces: district series are not aligned");
    const auto& first = volatility.districts.begin()->second.series;
    for (std::size_t t = 0; t < first.size(); ++t) {
        const YearMonth month = first.month_at(t);
        SiteSet sites;
        std::string missing;
        for (const auto& [id, d] : volatility.districts) {
            const double v = d.series[t];
            if (is_missing(v)) {
                missing += (missing.empty() ? "" : ",") + id;
                continue;
            }
            sites.push_back({id, d.lat, d.lon, v});
        }
        if (!missing.empty()) {
            if (warn) warn("surfaces: skipping " + month.str() + ", missing districts: " + missing);
            continue;
        }
        sink(surface_for_month(sites, month, cfg));
    }
}

std::vector<MonthSurface> monthly_surfaces(const DistrictPanel& volatility, const SurfaceConfig& cfg,
                                           std::vector<std::string>* warnings) {
    std::vector<MonthSurface> out;
    monthly_surfaces(
        volatility, cfg, [&](MonthSurface&& m) { out.push_back(std::move(m)); },
        [&](const std::string& w) {
            if (warnings) warnings->push_back(w);
        });
    return out;
}

void write_surface_csv(const VolatilitySurface& s, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot write " + path);
    std::fputs("lat,lon,value\n", f);
    for (std::size_t r = 0; r < s.rows; ++r) {
        for (std::size_t c = 0; c < s.cols; ++c) {
            if (!s.mask[r * s.cols + c]) continue;
            std::fprintf(f, "%.5f,%.5f,%.10g\n", s.cell_lat(r), s.cell_lon(c), s.at(r, c));
        }
    }
    std::fclose(f);
}

nlohmann::json surface_to_json(const VolatilitySurface& s) {
    nlohmann::json grid = nlohmann::json::array();
    for (std::size_t r = 0; r < s.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < s.cols; ++c) {
            row.push_back(s.mask[r * s.cols + c] ? nlohmann::json(s.at(r, c)) : nlohmann::json(nullptr));
        }
        grid.push_back(std::move(row));
    }
    return {{"month", s.month.str()},
            {"bbox", {{"lat_min", s.bbox.lat_min}, {"lat_max", s.bbox.lat_max}, {"lon_min", s.bbox.lon_min}, {"lon_max", s.bbox.lon_max}}},
            {"cell_size", s.cell_size},
            {"rows", s.rows},
            {"cols", s.cols},
            {"values", std::move(grid)}};
}

void write_site_csv(const MonthSurface& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "district_id,lat,lon,raw,smoothed\n";
    char buf[256];
    for (const auto& s : m.sites) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.10g,%.10g", s.lat, s.lon, s.raw, s.smoothed);
        out << s.id << ',' << buf << '\n';
    }
}

}  // namespace climvol::spatial
