#include "climvol/egarch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include "climvol/errors.hpp"
#include "climvol/optimize.hpp"

namespace climvol::egarch {

namespace {

const double kAbsNormalMean = std::sqrt(2.0 / std::numbers::pi);
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr int kMaxOrder = 12;
constexpr double kBetaBound = 0.999;

// Parameter block views into a flat vector laid out as mu, omega, alpha, gamma, beta.
struct Layout {
    int p, o, q;
    explicit Layout(const EgarchSpec& s) : p(s.p), o(s.o), q(s.q) {}
    int alpha() const { return 2; }
    int gamma() const { return 2 + p; }
    int beta() const { return 2 + p + o; }
};

// Runs the log-variance recursion, writing ln sigma^2 into `logvar` and the
// standardized shocks into `z`. Returns the Gaussian log-likelihood, or NaN
// if the recursion leaves the finite range.
double run_recursion(const std::vector<double>& r, const Layout& lay, const double* theta, double init_logvar,
                     std::vector<double>& logvar, std::vector<double>& z) {
    const std::size_t n = r.size();
    logvar.resize(n);
    z.resize(n);
    const double mu = theta[0];
    const double omega = theta[1];
    double ll = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double lv = omega;
        for (int i = 1; i <= lay.p; ++i) {
            // pre-sample standardized shocks are 0
            const double abs_z = t >= static_cast<std::size_t>(i) ? std::abs(z[t - i]) : 0.0;
            lv += theta[lay.alpha() + i - 1] * (abs_z - kAbsNormalMean);
        }
        for (int j = 1; j <= lay.o; ++j) {
            if (t >= static_cast<std::size_t>(j)) lv += theta[lay.gamma() + j - 1] * z[t - j];
        }
        for (int k = 1; k <= lay.q; ++k) {
            const double past = t >= static_cast<std::size_t>(k) ? logvar[t - k] : init_logvar;
            lv += theta[lay.beta() + k - 1] * past;
        }
        if (!std::isfinite(lv) || std::abs(lv) > 700.0) return std::numeric_limits<double>::quiet_NaN();
        logvar[t] = lv;
        const double eps = r[t] - mu;
        const double var = std::exp(lv);
        z[t] = eps / std::sqrt(var);
        ll += -0.5 * (kLog2Pi + lv + eps * eps / var);
    }
    return ll;
}

// Top Lyapunov exponent of d(ln sigma_t^2)/d(ln sigma_{t-1..t-m}^2) along a
// filtered path. Negative means the filter forgets its start (invertible);
// otherwise a tiny sigma feeds a huge |z| that drives ln sigma^2 further down
// and the likelihood spikes.
double filter_lyapunov(const Layout& lay, const double* theta, const std::vector<double>& z) {
    const int m = std::max({lay.p, lay.o, lay.q});
    const std::size_t n = z.size();
    if (n <= static_cast<std::size_t>(m)) return -std::numeric_limits<double>::infinity();
    std::vector<double> v(static_cast<std::size_t>(m), 1.0 / std::sqrt(static_cast<double>(m)));
    std::vector<double> next(v.size());
    double sum = 0.0;
    for (std::size_t t = static_cast<std::size_t>(m); t < n; ++t) {
        double head = 0.0;
        for (int i = 1; i <= m; ++i) {
            const double zi = z[t - static_cast<std::size_t>(i)];
            double d = 0.0;
            if (i <= lay.q) d += theta[lay.beta() + i - 1];
            if (i <= lay.p) d -= 0.5 * theta[lay.alpha() + i - 1] * std::abs(zi);
            if (i <= lay.o) d -= 0.5 * theta[lay.gamma() + i - 1] * zi;
            head += d * v[static_cast<std::size_t>(i - 1)];
        }
        next[0] = head;
        for (int i = 1; i < m; ++i) next[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i - 1)];
        double norm = 0.0;
        for (double x : next) norm += x * x;
        norm = std::sqrt(norm);
        if (!(norm > 1e-300)) return -std::numeric_limits<double>::infinity();
        sum += std::log(norm);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = next[i] / norm;
    }
    return sum / static_cast<double>(n - static_cast<std::size_t>(m));
}

double log_sample_variance(const std::vector<double>& r) {
    const double v = sample_variance(r);
    if (!(v > 0.0)) throw DataError("egarch: returns have zero variance");
    return std::log(v);
}

}  // namespace

void EgarchSpec::validate() const {
    if (p < 1 || q < 1 || o < 0 || p > kMaxOrder || o > kMaxOrder || q > kMaxOrder) {
        throw DataError("EgarchSpec: require 1 <= p,q <= 12 and 0 <= o <= 12");
    }
}

int EgarchSpec::max_lag() const { return std::max({p, o, q}); }

std::vector<double> EgarchParams::to_vector() const {
    std::vector<double> v{mu, omega};
    v.insert(v.end(), alpha.begin(), alpha.end());
    v.insert(v.end(), gamma.begin(), gamma.end());
    v.insert(v.end(), beta.begin(), beta.end());
    return v;
}

EgarchParams EgarchParams::from_vector(const EgarchSpec& spec, const std::vector<double>& v) {
    if (v.size() != spec.num_params()) throw DataError("EgarchParams: parameter vector has wrong length");
    EgarchParams prm;
    prm.mu = v[0];
    prm.omega = v[1];
    auto it = v.begin() + 2;
    prm.alpha.assign(it, it + spec.p);
    it += spec.p;
    prm.gamma.assign(it, it + spec.o);
    it += spec.o;
    prm.beta.assign(it, it + spec.q);
    return prm;
}

std::vector<std::string> EgarchParams::names() const {
    std::vector<std::string> out{"mu", "omega"};
    for (std::size_t i = 0; i < alpha.size(); ++i) out.push_back("alpha" + std::to_string(i + 1));
    for (std::size_t i = 0; i < gamma.size(); ++i) out.push_back("gamma" + std::to_string(i + 1));
    for (std::size_t i = 0; i < beta.size(); ++i) out.push_back("beta" + std::to_string(i + 1));
    return out;
}

double EgarchParams::beta_abs_sum() const {
    double s = 0.0;
    for (double b : beta) s += std::abs(b);
    return s;
}

void EgarchParams::validate(const EgarchSpec& spec) const {
    spec.validate();
    if (alpha.size() != static_cast<std::size_t>(spec.p) || gamma.size() != static_cast<std::size_t>(spec.o) ||
        beta.size() != static_cast<std::size_t>(spec.q)) {
        throw DataError("EgarchParams: coefficient counts do not match spec");
    }
    const auto v = to_vector();
    if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
        throw DataError("EgarchParams: non-finite parameter");
    }
    if (!(beta_abs_sum() < 1.0)) throw DataError("EgarchParams: sum |beta| must be < 1");
}

double gaussian_loglik(const std::vector<double>& residuals, const std::vector<double>& cond_vol) {
    if (residuals.size() != cond_vol.size()) throw DataError("gaussian_loglik: length mismatch");
    double ll = 0.0;
    for (std::size_t t = 0; t < residuals.size(); ++t) {
        const double var = cond_vol[t] * cond_vol[t];
        ll += -0.5 * (kLog2Pi + std::log(var) + residuals[t] * residuals[t] / var);
    }
    return ll;
}

FilterResult egarch_filter(const MonthlySeries& returns, const EgarchSpec& spec, const EgarchParams& params,
                           std::optional<double> presample_log_var) {
    params.validate(spec);
    if (returns.size() <= static_cast<std::size_t>(spec.max_lag())) {
        throw DataError("egarch_filter: returns must be longer than the largest lag");
    }
    if (returns.has_missing()) throw DataError("egarch_filter: returns contain gaps");
    const double init = presample_log_var ? *presample_log_var : log_sample_variance(returns.values);
    const auto theta = params.to_vector();
    std::vector<double> logvar;
    std::vector<double> z;
    const double ll = run_recursion(returns.values, Layout(spec), theta.data(), init, logvar, z);
    if (!std::isfinite(ll)) throw NumericalError("egarch_filter: log-variance recursion is not finite");

    FilterResult out;
    out.cond_vol = MonthlySeries(returns.start, std::vector<double>(returns.size()), returns.label + " cond vol");
    out.residuals = MonthlySeries(returns.start, std::vector<double>(returns.size()), returns.label + " residual");
    for (std::size_t t = 0; t < returns.size(); ++t) {
        out.cond_vol.values[t] = std::exp(0.5 * logvar[t]);
        out.residuals.values[t] = returns[t] - params.mu;
    }
    out.log_likelihood = ll;
    return out;
}

EgarchFit egarch_fit(const MonthlySeries& returns, const EgarchSpec& spec) {
    spec.validate();
    const std::size_t n = returns.size();
    const std::size_t k = spec.num_params();
    if (n < 30 || n <= 5 * (1 + static_cast<std::size_t>(spec.p + spec.o + spec.q))) {
        throw DataError("egarch_fit: need at least 30 returns and more than 5*(1+p+o+q)");
    }
    if (returns.has_missing()) throw DataError("egarch_fit: returns contain gaps");

    const auto& r = returns.values;
    const double init = log_sample_variance(r);
    const double scale = std::sqrt(std::exp(init));
    const Layout lay(spec);

    // Optimize over (mu / scale, omega, alpha, gamma, beta) so all coordinates are O(1).
    std::vector<double> logvar;
    std::vector<double> z;
    std::vector<double> theta(k);
    auto negll = [&](const Eigen::VectorXd& x) {
        for (std::size_t i = 0; i < k; ++i) theta[i] = x(static_cast<Eigen::Index>(i));
        theta[0] *= scale;
        double bsum = 0.0;
        for (int j = 0; j < spec.q; ++j) bsum += std::abs(theta[lay.beta() + j]);
        const double ll = run_recursion(r, lay, theta.data(), init, logvar, z);
        if (!std::isfinite(ll)) return std::numeric_limits<double>::infinity();
        if (filter_lyapunov(lay, theta.data(), z) >= 0.0) return std::numeric_limits<double>::infinity();
        double pen = 0.0;
        // Continuous so numerical gradients stay usable when the optimum sits on the bound.
        if (bsum > kBetaBound) pen = 1e8 * (bsum - kBetaBound) * (bsum - kBetaBound);
        return -ll + pen;
    };

    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    x0(0) = mean(r) / scale;
    x0(lay.alpha()) = 0.1;
    x0(lay.beta()) = 0.9;
    x0(1) = init * (1.0 - 0.9);
    Eigen::VectorXd step = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(k), 0.05);
    step(0) = 0.1;
    step(1) = 0.1 * std::max(std::abs(x0(1)), 0.5);

    // Nelder-Mead warm start then BFGS. A simplex pressed against the
    // invertibility boundary can exhaust its budget; retry from tighter
    // simplices and keep the first start that converges.
    auto search = [&](double shrink) {
        optimize::NelderMeadOptions nm_opts;
        nm_opts.max_iterations = 400 * static_cast<int>(k);
        nm_opts.f_tolerance = 1e-9;
        nm_opts.x_tolerance = 1e-7;
        const auto warm = optimize::nelder_mead(negll, x0, step * shrink, nm_opts);
        optimize::BfgsOptions bf_opts;
        bf_opts.max_iterations = 500;
        bf_opts.gradient_tolerance = 1e-5;
        auto refined = optimize::bfgs(negll, warm.x, bf_opts);
        if (!(refined.value <= warm.value)) refined = warm;
        refined.converged = refined.converged || warm.converged;
        refined.iterations += warm.iterations;
        return refined;
    };
    std::optional<optimize::Result> chosen;
    bool any_finite = false;
    for (double shrink : {1.0, 0.25, 0.05}) {
        auto cand = search(shrink);
        any_finite = any_finite || std::isfinite(cand.value);
        if (cand.converged && std::isfinite(cand.value)) {
            chosen = cand;
            break;
        }
    }
    if (!any_finite) throw NumericalError("egarch_fit: no finite likelihood found");
    if (!chosen) throw NumericalError("egarch_fit: optimizer did not converge within budget");
    const auto& refined = *chosen;

    std::vector<double> best(k);
    for (std::size_t i = 0; i < k; ++i) best[i] = refined.x(static_cast<Eigen::Index>(i));
    best[0] *= scale;

    EgarchFit fit;
    fit.spec = spec;
    fit.params = EgarchParams::from_vector(spec, best);
    fit.converged = true;
    fit.iterations = refined.iterations;
    if (!(fit.params.beta_abs_sum() < 1.0)) throw NumericalError("egarch_fit: estimate violates sum |beta| < 1");

    const auto filtered = egarch_filter(returns, spec, fit.params, init);
    fit.log_likelihood = filtered.log_likelihood;
    fit.cond_vol = filtered.cond_vol;
    fit.residuals = filtered.residuals;

    // Observed information in scaled coordinates, mapped back for mu.
    auto plain_negll = [&](const Eigen::VectorXd& x) {
        for (std::size_t i = 0; i < k; ++i) theta[i] = x(static_cast<Eigen::Index>(i));
        theta[0] *= scale;
        const double ll = run_recursion(r, lay, theta.data(), init, logvar, z);
        return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
    };
    const Eigen::MatrixXd hess = optimize::numeric_hessian(plain_negll, refined.x, 1.0);
    if (auto cov = optimize::spd_inverse(hess)) {
        std::vector<double> se(k);
        for (std::size_t i = 0; i < k; ++i) se[i] = std::sqrt((*cov)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
        se[0] *= scale;
        fit.std_errs = std::move(se);
    }
    return fit;
}

MonthlySeries egarch_simulate(const EgarchSpec& spec, const EgarchParams& params, std::size_t periods,
                              std::uint64_t seed, YearMonth start) {
    params.validate(spec);
    if (periods == 0) throw DataError("egarch_simulate: need at least one period");
    double bsum = 0.0;
    for (double b : params.beta) bsum += b;
    const double init = params.omega / (1.0 - bsum);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> logvar(periods);
    std::vector<double> z(periods);
    std::vector<double> r(periods);
    for (std::size_t t = 0; t < periods; ++t) {
        double lv = params.omega;
        for (int i = 1; i <= spec.p; ++i) {
            if (t >= static_cast<std::size_t>(i)) lv += params.alpha[i - 1] * (std::abs(z[t - i]) - kAbsNormalMean);
        }
        for (int j = 1; j <= spec.o; ++j) {
            if (t >= static_cast<std::size_t>(j)) lv += params.gamma[j - 1] * z[t - j];
        }
        for (int k = 1; k <= spec.q; ++k) {
            lv += params.beta[k - 1] * (t >= static_cast<std::size_t>(k) ? logvar[t - k] : init);
        }
        if (!std::isfinite(lv) || std::abs(lv) > 700.0) throw NumericalError("egarch_simulate: recursion diverged");
        logvar[t] = lv;
        z[t] = normal(rng);
        r[t] = params.mu + std::exp(0.5 * lv) * z[t];
    }
    return MonthlySeries(start, std::move(r), "simulated egarch");
}

nlohmann::json to_json(const EgarchFit& fit) {
    nlohmann::json j;
    j["spec"] = {{"p", fit.spec.p}, {"o", fit.spec.o}, {"q", fit.spec.q}};
    const auto names = fit.params.names();
    const auto values = fit.params.to_vector();
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < names.size(); ++i) {
        nlohmann::json p{{"name", names[i]}, {"estimate", values[i]}};
        p["std_err"] = fit.std_errs ? nlohmann::json((*fit.std_errs)[i]) : nlohmann::json(nullptr);
        params.push_back(std::move(p));
    }
    j["params"] = std::move(params);
    j["std_errs_available"] = fit.std_errs.has_value();
    j["log_likelihood"] = fit.log_likelihood;
    j["n_obs"] = fit.cond_vol.size();
    return j;
}

}  // namespace climvol::egarch
