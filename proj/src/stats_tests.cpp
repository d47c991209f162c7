#include "climvol/stats_tests.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/fisher_f.hpp>

#include "climvol/errors.hpp"

namespace climvol::stats {

CcfResult ccf(const MonthlySeries& x, const MonthlySeries& y, int max_lag) {
    if (x.size() != y.size()) throw DataError("ccf: series lengths differ");
    const auto n = static_cast<int>(x.size());
    if (max_lag < 0 || max_lag >= n - 2) throw DataError("ccf: max_lag must be in [0, T-2)");
    if (x.has_missing() || y.has_missing()) throw DataError("ccf: series contain gaps");
    const double xbar = mean(x.values);
    const double ybar = mean(y.values);

    CcfResult out;
    for (int k = 0; k <= max_lag; ++k) {
        double sxy = 0.0;
        double sxx = 0.0;
        double syy = 0.0;
        for (int t = k; t < n; ++t) {
            const double dx = x[static_cast<std::size_t>(t)] - xbar;
            const double dy = y[static_cast<std::size_t>(t - k)] - ybar;
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        if (!(sxx > 0.0) || !(syy > 0.0)) {
            throw DataError("ccf: zero variance in window at lag " + std::to_string(k));
        }
        const double v = sxy / std::sqrt(sxx * syy);
        out.lags.push_back(k);
        out.values.push_back(std::clamp(v, -1.0, 1.0));
    }
    return out;
}

KpssResult kpss_test(const MonthlySeries& x) {
    const std::size_t n = x.size();
    if (n < 20) throw DataError("kpss_test: need at least 20 observations");
    if (x.has_missing()) throw DataError("kpss_test: series contains gaps");
    const double m = mean(x.values);
    std::vector<double> e(n);
    for (std::size_t t = 0; t < n; ++t) e[t] = x[t] - m;

    const double dn = static_cast<double>(n);
    const int bw = static_cast<int>(std::floor(4.0 * std::pow(dn / 100.0, 0.25)));
    double lrv = 0.0;
    for (std::size_t t = 0; t < n; ++t) lrv += e[t] * e[t];
    lrv /= dn;
    for (int j = 1; j <= bw; ++j) {
        double gamma = 0.0;
        for (std::size_t t = static_cast<std::size_t>(j); t < n; ++t) gamma += e[t] * e[t - static_cast<std::size_t>(j)];
        lrv += 2.0 * (1.0 - static_cast<double>(j) / (bw + 1.0)) * gamma / dn;
    }
    if (!(lrv > 0.0)) throw DataError("kpss_test: zero long-run variance (constant series)");

    double partial = 0.0;
    double eta = 0.0;
    for (double v : e) {
        partial += v;
        eta += partial * partial;
    }
    KpssResult r;
    r.statistic = eta / (dn * dn * lrv);
    r.bandwidth = bw;
    r.critical_values = {{"10%", 0.347}, {"5%", 0.463}, {"1%", 0.739}};
    r.stationary_at_5pct = r.statistic < 0.463;
    return r;
}

MonthlySeries difference(const MonthlySeries& x, int order) {
    if (order < 0) throw DataError("difference: negative order");
    if (static_cast<std::size_t>(order) >= x.size()) throw DataError("difference: order must be below series length");
    std::vector<double> v = x.values;
    for (int d = 0; d < order; ++d) {
        for (std::size_t t = v.size() - 1; t > 0; --t) v[t] -= v[t - 1];
        v.erase(v.begin());
    }
    return MonthlySeries(x.month_at(static_cast<std::size_t>(order)), std::move(v),
                         order == 0 ? x.label : x.label + " diff" + std::to_string(order));
}

std::vector<double> difference_heads(const MonthlySeries& x, int order) {
    std::vector<double> heads;
    MonthlySeries cur = x;
    for (int d = 0; d < order; ++d) {
        heads.push_back(cur[0]);
        cur = difference(cur, 1);
    }
    return heads;
}

MonthlySeries undifference(const MonthlySeries& diffed, const std::vector<double>& initial) {
    std::vector<double> v = diffed.values;
    for (auto it = initial.rbegin(); it != initial.rend(); ++it) {
        std::vector<double> up(v.size() + 1);
        up[0] = *it;
        for (std::size_t t = 0; t < v.size(); ++t) up[t + 1] = up[t] + v[t];
        v = std::move(up);
    }
    return MonthlySeries(diffed.start.plus(-static_cast<long>(initial.size())), std::move(v), diffed.label);
}

OlsResult ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& target) {
    if (design.rows() != target.rows()) throw DataError("ols: row mismatch");
    if (design.rows() < design.cols()) throw DataError("ols: fewer observations than regressors");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.cols()) throw SingularMatrixError("ols: regression matrix is singular");
    OlsResult out;
    out.coef = qr.solve(target);
    out.residuals = target - design * out.coef;
    out.ssr = out.residuals.squaredNorm();
    return out;
}

double f_survival(double f, int df_num, int df_den) {
    if (!(f > 0.0)) return 1.0;
    if (std::isinf(f)) return 0.0;
    boost::math::fisher_f dist(df_num, df_den);
    return std::clamp(boost::math::cdf(boost::math::complement(dist, f)), 0.0, 1.0);
}

GrangerResult granger_causality(const MonthlySeries& x, const MonthlySeries& y, int lag) {
    if (x.size() != y.size()) throw DataError("granger_causality: series lengths differ");
    if (lag < 1) throw DataError("granger_causality: lag must be >= 1");
    if (x.has_missing() || y.has_missing()) throw DataError("granger_causality: series contain gaps");
    const int n = static_cast<int>(x.size());
    const int n_eff = n - lag;
    const int dof = n_eff - 2 * lag - 1;
    if (dof <= 0) throw DataError("granger_causality: insufficient observations for lag " + std::to_string(lag));

    Eigen::MatrixXd restricted(n_eff, lag + 1);
    Eigen::MatrixXd added(n_eff, lag);
    Eigen::VectorXd target(n_eff);
    for (int i = 0; i < n_eff; ++i) {
        const int t = i + lag;
        target(i) = x[static_cast<std::size_t>(t)];
        restricted(i, 0) = 1.0;
        for (int j = 1; j <= lag; ++j) {
            restricted(i, j) = x[static_cast<std::size_t>(t - j)];
            added(i, j - 1) = y[static_cast<std::size_t>(t - j)];
        }
    }

    // Frisch-Waugh-Lovell: the SSR reduction from adding the y lags is the
    // squared projection of the restricted residual on the y lags purged of
    // the restricted regressors. This keeps SSR_u <= SSR_r exactly.
    const auto base = ols(restricted, target);
    Eigen::MatrixXd purged(n_eff, lag);
    for (int j = 0; j < lag; ++j) purged.col(j) = ols(restricted, added.col(j)).residuals;
    const double scale = added.cwiseAbs().maxCoeff();
    if (!(purged.cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1e-300))) {
        throw SingularMatrixError("granger_causality: lagged y is collinear with the restricted regressors");
    }
    const auto extra = ols(purged, base.residuals);
    const double reduction = std::min((base.residuals - extra.residuals).squaredNorm(), base.ssr);

    GrangerResult r;
    r.lag = lag;
    r.df_num = lag;
    r.df_den = dof;
    r.restricted_ssr = base.ssr;
    r.unrestricted_ssr = base.ssr - reduction;
    if (!(r.unrestricted_ssr > 0.0)) throw NumericalError("granger_causality: perfect fit in unrestricted model");
    r.f_statistic = (reduction / lag) / (r.unrestricted_ssr / dof);
    r.p_value = f_survival(r.f_statistic, r.df_num, r.df_den);
    return r;
}

nlohmann::json to_json(const CcfResult& r) { return {{"lags", r.lags}, {"values", r.values}}; }

nlohmann::json to_json(const KpssResult& r) {
    return {{"statistic", r.statistic},
            {"critical_values", r.critical_values},
            {"bandwidth", r.bandwidth},
            {"stationary_at_5pct", r.stationary_at_5pct}};
}

nlohmann::json to_json(const GrangerResult& r) {
    return {{"lag", r.lag},
            {"f_statistic", r.f_statistic},
            {"p_value", r.p_value},
            {"restricted_ssr", r.restricted_ssr},
            {"unrestricted_ssr", r.unrestricted_ssr},
            {"df", {r.df_num, r.df_den}},
            {"significant_at_5pct", r.significant_at_5pct()}};
}

}  // namespace climvol::stats
