#include "climvol/sarimax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <tuple>

#include <Eigen/Dense>

#include "climvol/errors.hpp"
#include "climvol/optimize.hpp"
#include "climvol/stats_tests.hpp"

namespace climvol::sarimax {

namespace {

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    }
    return out;
}

// Full polynomial (constant term first) for 1 + sign * sum c_i L^(i*stride).
std::vector<double> lag_poly(const std::vector<double>& c, int stride, double sign) {
    std::vector<double> out(c.size() * static_cast<std::size_t>(stride) + 1, 0.0);
    out[0] = 1.0;
    for (std::size_t i = 0; i < c.size(); ++i) out[(i + 1) * static_cast<std::size_t>(stride)] = sign * c[i];
    return out;
}

struct Prepared {
    std::vector<double> w;       // differenced y
    Eigen::MatrixXd design;      // [1, differenced exog]
    std::size_t offset = 0;      // index in y of w[0]
};

void check_exog(const MonthlySeries& y, const std::vector<MonthlySeries>& exog) {
    for (const auto& x : exog) {
        if (x.start != y.start || x.size() != y.size()) {
            throw DataError("sarimax: exogenous series '" + x.label + "' is not aligned with y");
        }
        if (x.has_missing()) throw DataError("sarimax: exogenous series contains gaps");
    }
}

std::vector<double> apply_poly(const std::vector<double>& c, const std::vector<double>& x) {
    const std::size_t k = c.size() - 1;
    std::vector<double> out(x.size() - k);
    for (std::size_t t = k; t < x.size(); ++t) {
        double v = 0.0;
        for (std::size_t j = 0; j <= k; ++j) v += c[j] * x[t - j];
        out[t - k] = v;
    }
    return out;
}

Prepared prepare(const std::vector<double>& y, const std::vector<std::vector<double>>& exog, const SarimaxOrder& order) {
    const auto c = differencing_polynomial(order.d, order.D, order.s);
    Prepared pr;
    pr.offset = c.size() - 1;
    pr.w = apply_poly(c, y);
    pr.design.resize(static_cast<Eigen::Index>(pr.w.size()), static_cast<Eigen::Index>(exog.size() + 1));
    pr.design.col(0).setOnes();
    for (std::size_t j = 0; j < exog.size(); ++j) {
        const auto dx = apply_poly(c, exog[j]);
        for (std::size_t t = 0; t < dx.size(); ++t) pr.design(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j + 1)) = dx[t];
    }
    return pr;
}

std::vector<double> regression_residuals(const Prepared& pr, const SarimaxParams& prm) {
    std::vector<double> u(pr.w.size());
    for (std::size_t t = 0; t < u.size(); ++t) {
        double v = pr.w[t] - prm.intercept;
        for (std::size_t j = 0; j < prm.beta_exog.size(); ++j) {
            v -= prm.beta_exog[j] * pr.design(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j + 1));
        }
        u[t] = v;
    }
    return u;
}

// One-step errors of the ARMA on u; zero within the conditioning window.
std::vector<double> css_errors(const std::vector<double>& u, const std::vector<double>& a, const std::vector<double>& m,
                               std::size_t cond) {
    std::vector<double> e(u.size(), 0.0);
    for (std::size_t t = cond; t < u.size(); ++t) {
        double v = u[t];
        for (std::size_t i = 0; i < a.size(); ++i) v -= a[i] * u[t - i - 1];
        for (std::size_t j = 0; j < m.size() && j < t; ++j) v -= m[j] * e[t - j - 1];
        e[t] = v;
    }
    return e;
}

SarimaxParams unpack(const SarimaxOrder& o, const Eigen::VectorXd& x, SarimaxParams base) {
    Eigen::Index k = 0;
    auto take = [&](int count, std::vector<double>& dst) {
        dst.resize(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) dst[static_cast<std::size_t>(i)] = x(k++);
    };
    take(o.p, base.phi);
    take(o.P, base.Phi);
    take(o.q, base.theta);
    take(o.Q, base.Theta);
    return base;
}

bool admissible(const SarimaxParams& prm, double margin) {
    auto neg = [](const std::vector<double>& v) {
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = -v[i];
        return out;
    };
    return roots_outside_unit_circle(prm.phi, margin) && roots_outside_unit_circle(prm.Phi, margin) &&
           roots_outside_unit_circle(neg(prm.theta), margin) && roots_outside_unit_circle(neg(prm.Theta), margin);
}

std::vector<std::vector<double>> raw_exog(const std::vector<MonthlySeries>& exog) {
    std::vector<std::vector<double>> out;
    out.reserve(exog.size());
    for (const auto& x : exog) out.push_back(x.values);
    return out;
}

// Fills residuals, fitted values, sigma2, loglik and AIC for fixed ARMA and
// regression coefficients.
void finalize(SarimaxFit& fit, const Prepared& pr, bool estimate_sigma2, std::size_t window) {
    const auto& o = fit.order;
    const auto u = regression_residuals(pr, fit.params);
    const auto a = expand_ar(fit.params.phi, fit.params.Phi, o.s);
    const auto m = expand_ma(fit.params.theta, fit.params.Theta, o.s);
    const auto cond = static_cast<std::size_t>(o.ar_span());
    const auto e = css_errors(u, a, m, cond);
    const std::size_t used = e.size() - window;
    double css = 0.0;
    for (std::size_t t = window; t < e.size(); ++t) css += e[t] * e[t];
    if (estimate_sigma2) fit.params.sigma2 = css / static_cast<double>(used);

    double wscale = 0.0;
    for (double v : pr.w) wscale += v * v;
    wscale /= static_cast<double>(pr.w.size());
    if (!(fit.params.sigma2 > std::numeric_limits<double>::min()) || fit.params.sigma2 <= 1e-14 * wscale) {
        throw DataError("sarimax: degenerate innovation variance (series is perfectly fitted or constant)");
    }
    const double n = static_cast<double>(used);
    fit.loglik = -0.5 * n * (std::log(2.0 * std::numbers::pi * fit.params.sigma2) + 1.0);
    fit.n_params = o.arma_count() + static_cast<int>(fit.params.beta_exog.size()) + 2;
    fit.aic = 2.0 * fit.n_params - 2.0 * fit.loglik;
    fit.conditioned_on = pr.offset + window;

    const std::size_t first = pr.offset + cond;
    std::vector<double> res(e.begin() + static_cast<long>(cond), e.end());
    std::vector<double> fitted(res.size());
    for (std::size_t i = 0; i < res.size(); ++i) fitted[i] = fit.y[first + i] - res[i];
    fit.residuals = MonthlySeries(fit.y.month_at(first), std::move(res), fit.y.label + " residual");
    fit.fitted = MonthlySeries(fit.y.month_at(first), std::move(fitted), fit.y.label + " fitted");
}

}  // namespace

void SarimaxOrder::validate() const {
    if (p < 0 || d < 0 || q < 0 || P < 0 || D < 0 || Q < 0) throw DataError("SarimaxOrder: orders must be >= 0");
    if (seasonal() && s < 2) throw DataError("SarimaxOrder: seasonal period must be >= 2");
    if (s < 1) throw DataError("SarimaxOrder: seasonal period must be >= 1");
}

std::string SarimaxOrder::str() const {
    std::ostringstream os;
    os << '(' << p << ',' << d << ',' << q << ")(" << P << ',' << D << ',' << Q << ')' << s;
    return os.str();
}

std::vector<double> differencing_polynomial(int d, int D, int s) {
    std::vector<double> c{1.0};
    for (int i = 0; i < d; ++i) c = poly_mul(c, {1.0, -1.0});
    std::vector<double> seas(static_cast<std::size_t>(s) + 1, 0.0);
    seas[0] = 1.0;
    seas.back() = -1.0;
    for (int i = 0; i < D; ++i) c = poly_mul(c, seas);
    return c;
}

MonthlySeries seasonal_difference(const MonthlySeries& x, int d, int D, int s) {
    if (d < 0 || D < 0 || (D > 0 && s < 1)) throw DataError("seasonal_difference: invalid orders");
    const std::size_t span = static_cast<std::size_t>(d + D * s);
    if (x.size() <= span) throw DataError("seasonal_difference: series too short for requested differencing");
    std::vector<double> v = x.values;
    for (int i = 0; i < d; ++i) {
        for (std::size_t t = v.size() - 1; t > 0; --t) v[t] -= v[t - 1];
        v.erase(v.begin());
    }
    const auto ss = static_cast<std::size_t>(s);
    for (int i = 0; i < D; ++i) {
        for (std::size_t t = v.size() - 1; t >= ss; --t) v[t] -= v[t - ss];
        v.erase(v.begin(), v.begin() + static_cast<long>(ss));
    }
    return MonthlySeries(x.month_at(span), std::move(v), x.label);
}

std::vector<double> expand_ar(const std::vector<double>& phi, const std::vector<double>& Phi, int s) {
    const auto full = poly_mul(lag_poly(phi, 1, -1.0), lag_poly(Phi, s, -1.0));
    std::vector<double> a(full.size() - 1);
    for (std::size_t i = 1; i < full.size(); ++i) a[i - 1] = -full[i];
    while (!a.empty() && a.back() == 0.0) a.pop_back();
    return a;
}

std::vector<double> expand_ma(const std::vector<double>& theta, const std::vector<double>& Theta, int s) {
    const auto full = poly_mul(lag_poly(theta, 1, 1.0), lag_poly(Theta, s, 1.0));
    std::vector<double> m(full.begin() + 1, full.end());
    while (!m.empty() && m.back() == 0.0) m.pop_back();
    return m;
}

bool roots_outside_unit_circle(const std::vector<double>& c, double margin) {
    std::size_t k = c.size();
    while (k > 0 && c[k - 1] == 0.0) --k;
    if (k == 0) return true;
    if (k == 1) return std::abs(c[0]) < 1.0 - margin;
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) comp(0, static_cast<Eigen::Index>(i)) = c[i];
    for (std::size_t i = 1; i < k; ++i) comp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
    if (es.info() != Eigen::Success) return false;
    return es.eigenvalues().cwiseAbs().maxCoeff() < 1.0 - margin;
}

SarimaxFit sarimax_fit(const MonthlySeries& y, const std::vector<MonthlySeries>& exog, const SarimaxOrder& order,
                       std::size_t condition_on) {
    order.validate();
    if (y.has_missing()) throw DataError("sarimax_fit: y contains gaps");
    check_exog(y, exog);
    const std::size_t span = static_cast<std::size_t>(order.differencing_span());
    const std::size_t lag_span = static_cast<std::size_t>(order.p + order.q + order.s * (order.P + order.Q));
    if (y.size() <= span || y.size() - span <= 10 + lag_span) {
        throw DataError("sarimax_fit: series too short for order " + order.str());
    }
    const std::size_t own = span + static_cast<std::size_t>(order.ar_span());
    if (condition_on == 0) condition_on = own;
    if (condition_on < own) throw DataError("sarimax_fit: conditioning window shorter than the order's own lags");
    if (condition_on + 10 > y.size()) throw DataError("sarimax_fit: fewer than 10 observations after conditioning");
    const std::size_t window = condition_on - span;  // in differenced coordinates

    const Prepared pr = prepare(y.values, raw_exog(exog), order);
    const auto reg = stats::ols(pr.design, Eigen::Map<const Eigen::VectorXd>(pr.w.data(), static_cast<Eigen::Index>(pr.w.size())));

    SarimaxFit fit;
    fit.order = order;
    fit.y = y;
    fit.exog = exog;
    fit.params.intercept = reg.coef(0);
    for (Eigen::Index j = 1; j < reg.coef.size(); ++j) fit.params.beta_exog.push_back(reg.coef(j));

    const int k = order.arma_count();
    if (k > 0) {
        const auto u = regression_residuals(pr, fit.params);
        const auto cond = static_cast<std::size_t>(order.ar_span());
        double uscale = 0.0;
        for (double v : u) uscale += v * v;
        uscale = std::max(uscale, std::numeric_limits<double>::min());
        auto css = [&](const Eigen::VectorXd& x) {
            const auto prm = unpack(order, x, fit.params);
            if (!admissible(prm, 1e-4)) return std::numeric_limits<double>::infinity();
            const auto e = css_errors(u, expand_ar(prm.phi, prm.Phi, order.s), expand_ma(prm.theta, prm.Theta, order.s), cond);
            double ss = 0.0;
            for (std::size_t t = window; t < e.size(); ++t) ss += e[t] * e[t];
            return ss / uscale;
        };
        const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(k);
        const Eigen::VectorXd step = Eigen::VectorXd::Constant(k, 0.1);
        optimize::NelderMeadOptions nm;
        nm.max_iterations = 300 * k;
        nm.f_tolerance = 1e-12;
        nm.x_tolerance = 1e-8;
        const auto warm = optimize::nelder_mead(css, x0, step, nm);
        optimize::BfgsOptions bo;
        bo.gradient_tolerance = 1e-8;
        auto refined = optimize::bfgs(css, warm.x, bo);
        if (!(refined.value <= warm.value)) refined = warm;
        if (!std::isfinite(refined.value) || (!warm.converged && !refined.converged)) {
            throw NumericalError("sarimax_fit: optimizer did not converge for order " + order.str());
        }
        fit.params = unpack(order, refined.x, fit.params);
        if (!admissible(fit.params, 0.0)) {
            throw NumericalError("sarimax_fit: non-stationary or non-invertible estimate for order " + order.str());
        }
    }
    finalize(fit, pr, true, window);
    return fit;
}

SarimaxFit sarimax_from_params(const MonthlySeries& y, const std::vector<MonthlySeries>& exog,
                               const SarimaxOrder& order, const SarimaxParams& params) {
    order.validate();
    check_exog(y, exog);
    if (params.phi.size() != static_cast<std::size_t>(order.p) || params.Phi.size() != static_cast<std::size_t>(order.P) ||
        params.theta.size() != static_cast<std::size_t>(order.q) || params.Theta.size() != static_cast<std::size_t>(order.Q) ||
        params.beta_exog.size() != exog.size()) {
        throw DataError("sarimax_from_params: coefficient counts do not match order/exog");
    }
    if (y.size() <= static_cast<std::size_t>(order.differencing_span() + order.ar_span())) {
        throw DataError("sarimax_from_params: history too short");
    }
    SarimaxFit fit;
    fit.order = order;
    fit.params = params;
    fit.y = y;
    fit.exog = exog;
    finalize(fit, prepare(y.values, raw_exog(exog), order), params.sigma2 <= 0.0,
             static_cast<std::size_t>(order.ar_span()));
    return fit;
}

GridSearchResult aic_grid_search(const MonthlySeries& y, const std::vector<MonthlySeries>& exog, const OrderGrid& grid) {
    if (grid.p.empty() || grid.d.empty() || grid.q.empty() || grid.P.empty() || grid.D.empty() || grid.Q.empty()) {
        throw DataError("aic_grid_search: empty order grid");
    }
    // Every candidate's likelihood is conditioned on the same leading months so
    // AICs are computed over the same observations.
    int common = 0;
    for (int d : grid.d)
        for (int D : grid.D)
            for (int p : grid.p)
                for (int P : grid.P) common = std::max(common, d + D * grid.s + p + P * grid.s);
    GridSearchResult out;
    std::optional<SarimaxFit> best;
    auto key = [](const SarimaxFit& f) {
        const auto& o = f.order;
        return std::make_tuple(f.aic, f.n_params, o.p, o.d, o.q, o.P, o.D, o.Q);
    };
    for (int p : grid.p)
        for (int d : grid.d)
            for (int q : grid.q)
                for (int P : grid.P)
                    for (int D : grid.D)
                        for (int Q : grid.Q) {
                            SarimaxOrder o{p, d, q, P, D, Q, grid.s};
                            ++out.candidates;
                            try {
                                auto f = sarimax_fit(y, exog, o, static_cast<std::size_t>(common));
                                ++out.converged;
                                if (!best || key(f) < key(*best)) best = std::move(f);
                            } catch (const DataError&) {
                            } catch (const NumericalError&) {
                            }
                        }
    if (!best) throw NumericalError("aic_grid_search: no candidate order converged");
    out.best = std::move(*best);
    return out;
}

MonthlySeries sarimax_forecast(const SarimaxFit& fit, std::size_t horizon,
                               const std::vector<std::vector<double>>& future_exog) {
    if (future_exog.size() != fit.exog.size()) throw DataError("sarimax_forecast: future exog column count mismatch");
    for (const auto& col : future_exog) {
        if (col.size() != horizon) throw DataError("sarimax_forecast: missing future exog values");
    }
    const auto& o = fit.order;
    const std::size_t n = fit.y.size();
    std::vector<double> y = fit.y.values;
    auto exog = raw_exog(fit.exog);
    for (std::size_t j = 0; j < exog.size(); ++j) exog[j].insert(exog[j].end(), future_exog[j].begin(), future_exog[j].end());

    // Residuals over the history with the fitted parameters.
    const Prepared hist = prepare(y, raw_exog(fit.exog), o);
    std::vector<double> u = regression_residuals(hist, fit.params);
    const auto a = expand_ar(fit.params.phi, fit.params.Phi, o.s);
    const auto m = expand_ma(fit.params.theta, fit.params.Theta, o.s);
    std::vector<double> e = css_errors(u, a, m, static_cast<std::size_t>(o.ar_span()));

    const auto c = differencing_polynomial(o.d, o.D, o.s);
    const std::size_t off = c.size() - 1;
    std::vector<double> out;
    out.reserve(horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
        const std::size_t t = n + h;  // index into y
        const std::size_t tu = t - off;
        double uhat = 0.0;
        for (std::size_t i = 0; i < a.size() && i < tu; ++i) uhat += a[i] * u[tu - i - 1];
        for (std::size_t j = 0; j < m.size() && j < tu; ++j) uhat += m[j] * e[tu - j - 1];
        double what = fit.params.intercept + uhat;
        for (std::size_t j = 0; j < exog.size(); ++j) {
            double dx = 0.0;
            for (std::size_t k = 0; k < c.size(); ++k) dx += c[k] * exog[j][t - k];
            what += fit.params.beta_exog[j] * dx;
        }
        double yhat = what;
        for (std::size_t k = 1; k < c.size(); ++k) yhat -= c[k] * y[t - k];
        u.push_back(uhat);
        e.push_back(0.0);
        y.push_back(yhat);
        out.push_back(yhat);
    }
    return MonthlySeries(fit.y.month_at(n), std::move(out), fit.y.label + " forecast");
}

MonthlySeries sarimax_rolling_forecast(const SarimaxFit& fit, const MonthlySeries& y_full,
                                       const std::vector<MonthlySeries>& exog_full) {
    if (y_full.start != fit.y.start || y_full.size() < fit.y.size()) {
        throw DataError("sarimax_rolling_forecast: full series must extend the fit history");
    }
    if (y_full.has_missing()) throw DataError("sarimax_rolling_forecast: series contains gaps");
    if (exog_full.size() != fit.exog.size()) throw DataError("sarimax_rolling_forecast: exog column count mismatch");
    check_exog(y_full, exog_full);
    const auto& o = fit.order;
    const Prepared pr = prepare(y_full.values, raw_exog(exog_full), o);
    const auto u = regression_residuals(pr, fit.params);
    const auto e = css_errors(u, expand_ar(fit.params.phi, fit.params.Phi, o.s),
                              expand_ma(fit.params.theta, fit.params.Theta, o.s), static_cast<std::size_t>(o.ar_span()));
    const std::size_t n = fit.y.size();
    std::vector<double> out;
    for (std::size_t t = n; t < y_full.size(); ++t) out.push_back(y_full[t] - e[t - pr.offset]);
    return MonthlySeries(y_full.month_at(n), std::move(out), y_full.label + " one-step forecast");
}

nlohmann::json to_json(const SarimaxFit& fit) {
    const auto& o = fit.order;
    const auto& p = fit.params;
    return {{"order", {{"p", o.p}, {"d", o.d}, {"q", o.q}, {"P", o.P}, {"D", o.D}, {"Q", o.Q}, {"s", o.s}}},
            {"params",
             {{"phi", p.phi},
              {"Phi", p.Phi},
              {"theta", p.theta},
              {"Theta", p.Theta},
              {"beta_exog", p.beta_exog},
              {"intercept", p.intercept},
              {"sigma2", p.sigma2}}},
            {"aic", fit.aic},
            {"loglik", fit.loglik},
            {"n_params", fit.n_params},
            {"n_obs", fit.y.size()}};
}

}  // namespace climvol::sarimax
