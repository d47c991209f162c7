#include "climvol/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace climvol::optimize {

namespace {

double safe_eval(const Objective& f, const Eigen::VectorXd& x, int& evals) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

double gradient_step(double xi) { return 1e-5 * std::max(std::abs(xi), 0.1); }

}  // namespace

Result nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& step,
                   const NelderMeadOptions& opts) {
    const auto n = x0.size();
    const double dn = static_cast<double>(n);
    const double alpha = 1.0;
    const double gamma = 1.0 + 2.0 / dn;
    const double rho = 0.75 - 1.0 / (2.0 * dn);
    const double sigma = 1.0 - 1.0 / dn;

    Result res;
    std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> vals(static_cast<std::size_t>(n + 1));
    for (Eigen::Index i = 0; i < n; ++i) pts[static_cast<std::size_t>(i + 1)](i) += step(i);
    for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = safe_eval(f, pts[i], res.evaluations);

    std::vector<std::size_t> order(pts.size());
    for (; res.iterations < opts.max_iterations; ++res.iterations) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[order.size() - 2];

        double diameter = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            diameter = std::max(diameter, (pts[i] - pts[best]).lpNorm<Eigen::Infinity>());
        }
        if (std::isfinite(vals[worst]) && std::abs(vals[worst] - vals[best]) <= opts.f_tolerance &&
            diameter <= opts.x_tolerance * std::max(1.0, pts[best].lpNorm<Eigen::Infinity>())) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i != worst) centroid += pts[i];
        }
        centroid /= dn;

        const Eigen::VectorXd xr = centroid + alpha * (centroid - pts[worst]);
        const double fr = safe_eval(f, xr, res.evaluations);
        if (fr < vals[best]) {
            const Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
            const double fe = safe_eval(f, xe, res.evaluations);
            if (fe < fr) {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        // contraction, outside or inside
        const bool outside = fr < vals[worst];
        const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + rho * (xr - centroid))
                                           : Eigen::VectorXd(centroid + rho * (pts[worst] - centroid));
        const double fc = safe_eval(f, xc, res.evaluations);
        if (fc < (outside ? fr : vals[worst])) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i == best) continue;
            pts[i] = pts[best] + sigma * (pts[i] - pts[best]);
            vals[i] = safe_eval(f, pts[i], res.evaluations);
        }
    }
    const auto it = std::min_element(vals.begin(), vals.end());
    res.x = pts[static_cast<std::size_t>(it - vals.begin())];
    res.value = *it;
    return res;
}

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double* fx_out) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = gradient_step(x(i));
        xp(i) = x(i) + h;
        const double fp = f(xp);
        xp(i) = x(i) - h;
        const double fm = f(xp);
        xp(i) = x(i);
        g(i) = (fp - fm) / (2.0 * h);
    }
    if (fx_out) *fx_out = f(x);
    return g;
}

Result bfgs(const Objective& f, const Eigen::VectorXd& x0, const BfgsOptions& opts) {
    const auto n = x0.size();
    Result res;
    res.x = x0;
    res.value = safe_eval(f, x0, res.evaluations);
    if (!std::isfinite(res.value)) return res;

    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g = numeric_gradient(f, res.x);
    res.evaluations += static_cast<int>(2 * n);

    auto grad_small = [&](const Eigen::VectorXd& grad, const Eigen::VectorXd& x) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(grad(i)) * std::max(std::abs(x(i)), 1.0) > opts.gradient_tolerance) return false;
        }
        return true;
    };

    for (; res.iterations < opts.max_iterations; ++res.iterations) {
        if (!g.allFinite()) break;
        if (grad_small(g, res.x)) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd dir = -hinv * g;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            hinv.setIdentity();
            dir = -g;
            slope = -g.squaredNorm();
        }
        double t = 1.0;
        Eigen::VectorXd xn;
        double fn = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int k = 0; k < 60; ++k) {
            xn = res.x + t * dir;
            fn = safe_eval(f, xn, res.evaluations);
            if (fn <= res.value + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // Line search stalled: at numerical precision of the gradient.
            res.converged = grad_small(g * 1e-2, res.x);
            break;
        }
        const Eigen::VectorXd gn = numeric_gradient(f, xn);
        res.evaluations += static_cast<int>(2 * n);
        const Eigen::VectorXd s = xn - res.x;
        const Eigen::VectorXd y = gn - g;
        const double sy = s.dot(y);
        const double decrease = res.value - fn;
        res.x = xn;
        g = gn;
        const double prev = res.value;
        res.value = fn;
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double r = 1.0 / sy;
            const Eigen::MatrixXd i_n = Eigen::MatrixXd::Identity(n, n);
            hinv = (i_n - r * s * y.transpose()) * hinv * (i_n - r * y * s.transpose()) + r * s * s.transpose();
        }
        if (decrease <= opts.f_tolerance * std::max(1.0, std::abs(prev))) {
            res.converged = true;
            ++res.iterations;
            break;
        }
    }
    return res;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, double min_scale) {
    const auto n = x.size();
    Eigen::MatrixXd h(n, n);
    Eigen::VectorXd step(n);
    for (Eigen::Index i = 0; i < n; ++i) step(i) = 1e-4 * std::max(std::abs(x(i)), min_scale);
    const double f0 = f(x);
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        xp(i) = x(i) + step(i);
        const double fp = f(xp);
        xp(i) = x(i) - step(i);
        const double fm = f(xp);
        xp(i) = x(i);
        h(i, i) = (fp - 2.0 * f0 + fm) / (step(i) * step(i));
        for (Eigen::Index j = 0; j < i; ++j) {
            auto eval = [&](double si, double sj) {
                xp(i) = x(i) + si * step(i);
                xp(j) = x(j) + sj * step(j);
                const double v = f(xp);
                xp(i) = x(i);
                xp(j) = x(j);
                return v;
            };
            const double v = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * step(i) * step(j));
            h(i, j) = v;
            h(j, i) = v;
        }
    }
    return h;
}

std::optional<Eigen::MatrixXd> spd_inverse(const Eigen::MatrixXd& m) {
    if (!m.allFinite()) return std::nullopt;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) return std::nullopt;
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    if (!inv.allFinite() || (inv.diagonal().array() <= 0.0).any()) return std::nullopt;
    return inv;
}

}  // namespace climvol::optimize
