#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "climvol/egarch.hpp"
#include "climvol/errors.hpp"
#include "climvol/optimize.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace climvol;
using namespace climvol::egarch;
using testing_support::Gen;
using testing_support::series;

namespace {

EgarchParams make(double mu, double omega, std::vector<double> a, std::vector<double> g, std::vector<double> b) {
    EgarchParams p;
    p.mu = mu;
    p.omega = omega;
    p.alpha = std::move(a);
    p.gamma = std::move(g);
    p.beta = std::move(b);
    return p;
}

// Straight transcription of the (1,1,1) recursion with zero pre-sample shocks.
std::vector<double> oracle_logvar_111(const std::vector<double>& r, double mu, double omega, double alpha,
                                      double gamma, double beta, double h0) {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    std::vector<double> h;
    double z_prev = 0.0;
    double h_prev = h0;
    for (double x : r) {
        const double ht = omega + alpha * (std::abs(z_prev) - c) + gamma * z_prev + beta * h_prev;
        h.push_back(ht);
        z_prev = (x - mu) / std::exp(ht / 2);
        h_prev = ht;
    }
    return h;
}

}  // namespace

TEST(EgarchSpec, Validation) {
    EXPECT_NO_THROW((EgarchSpec{3, 3, 1}.validate()));
    EXPECT_THROW((EgarchSpec{0, 1, 1}.validate()), DataError);
    EXPECT_THROW((EgarchSpec{1, -1, 1}.validate()), DataError);
    EXPECT_THROW((EgarchSpec{1, 0, 13}.validate()), DataError);
    EXPECT_EQ((EgarchSpec{3, 1, 2}.num_params()), 8u);
}

TEST(EgarchParams, PublishedEstimatesAreAdmissible) {
    const auto soy = make(0.00877, -0.41060, {0.10250, 0.15469, -0.37506}, {0.01845, 0.52901, -0.24236}, {0.92453});
    EXPECT_NO_THROW(soy.validate(EgarchSpec{3, 3, 1}));
    const auto brinjal = make(0.03656, -0.22599, {0.64441, -1.06278, 0.15620}, {-0.06083}, {0.29258, 0.62815});
    EXPECT_NO_THROW(brinjal.validate(EgarchSpec{3, 1, 2}));
    EXPECT_THROW(make(0, 0, {0.1}, {}, {0.6, 0.5}).validate(EgarchSpec{1, 0, 2}), DataError);
    EXPECT_THROW(make(0, 0, {0.1, 0.2}, {}, {0.5}).validate(EgarchSpec{1, 0, 1}), DataError);
}

TEST(EgarchParams, VectorOrderAndNames) {
    const auto p = make(1, 2, {3, 4}, {5}, {0.6});
    EXPECT_EQ(p.to_vector(), (std::vector<double>{1, 2, 3, 4, 5, 0.6}));
    EXPECT_EQ(p.names(), (std::vector<std::string>{"mu", "omega", "alpha1", "alpha2", "gamma1", "beta1"}));
    const auto back = EgarchParams::from_vector(EgarchSpec{2, 1, 1}, p.to_vector());
    EXPECT_EQ(back.to_vector(), p.to_vector());
}

TEST(EgarchFilter, ConstantVarianceWhenDynamicsOff) {
    const auto r = testing_support::white_noise(50, 1);
    const auto f = egarch_filter(r, EgarchSpec{1, 1, 1}, make(0, -1, {0}, {0}, {0}));
    for (double s : f.cond_vol.values) EXPECT_NEAR(s, std::exp(-0.5), 1e-15);
}

TEST(EgarchFilter, ThreeStepHandRecursion) {
    const auto r = series({0.1, 0.1, 0.1});
    const auto f = egarch_filter(r, EgarchSpec{1, 1, 1}, make(0, 0, {0.2}, {0}, {0.5}), 0.0);
    const auto h = oracle_logvar_111(r.values, 0, 0, 0.2, 0, 0.5, 0.0);
    ASSERT_EQ(f.cond_vol.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(std::log(f.cond_vol[t] * f.cond_vol[t]), h[t], 1e-14);
    // first step by hand: -0.2 sqrt(2/pi)
    EXPECT_NEAR(h[0], -0.2 * std::sqrt(2.0 / std::numbers::pi), 1e-15);
}

TEST(EgarchFilter, MatchesOracleOnRandomInputs) {
    Gen g(21);
    for (int rep = 0; rep < 30; ++rep) {
        const auto r = testing_support::white_noise(80, g.next(), 0.05);
        const double mu = g.uniform(-0.01, 0.01), om = g.uniform(-1, 0), a = g.uniform(-0.3, 0.5);
        const double ga = g.uniform(-0.3, 0.3), b = g.uniform(-0.95, 0.95), h0 = g.uniform(-8, -4);
        const auto f = egarch_filter(r, EgarchSpec{1, 1, 1}, make(mu, om, {a}, {ga}, {b}), h0);
        const auto h = oracle_logvar_111(r.values, mu, om, a, ga, b, h0);
        for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(std::log(f.cond_vol[t] * f.cond_vol[t]), h[t], 1e-10);
    }
}

TEST(EgarchFilter, DefaultPresampleIsLogSampleVariance) {
    const auto r = testing_support::white_noise(40, 4, 0.1);
    double m = 0, v = 0;
    for (double x : r.values) m += x / 40;
    for (double x : r.values) v += (x - m) * (x - m) / 39;
    const auto a = egarch_filter(r, EgarchSpec{1, 0, 1}, make(0, -0.5, {0.1}, {}, {0.8}));
    const auto b = egarch_filter(r, EgarchSpec{1, 0, 1}, make(0, -0.5, {0.1}, {}, {0.8}), std::log(v));
    EXPECT_EQ(a.cond_vol.values, b.cond_vol.values);
}

TEST(EgarchFilter, LoglikConsistency) {
    Gen g(5);
    for (int rep = 0; rep < 25; ++rep) {
        const auto r = testing_support::white_noise(120, g.next(), 0.08);
        const EgarchSpec spec{2, 1, 2};
        const auto p = make(g.uniform(-0.02, 0.02), g.uniform(-1, 0), {g.uniform(0, 0.3), g.uniform(-0.2, 0.2)},
                            {g.uniform(-0.2, 0.2)}, {g.uniform(0, 0.5), g.uniform(0, 0.4)});
        const auto f = egarch_filter(r, spec, p);
        EXPECT_NEAR(oracles::gaussian_loglik(f.residuals.values, f.cond_vol.values), f.log_likelihood, 1e-8);
        for (double s : f.cond_vol.values) EXPECT_GT(s, 0.0);
        EXPECT_EQ(f.cond_vol.size(), r.size());
    }
}

TEST(EgarchFilter, SymmetricWithoutLeverage) {
    Gen g(9);
    const double mu = 0.003;
    std::vector<double> r(100), flipped(100);
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = mu + 0.05 * g.normal();
        flipped[i] = 2 * mu - r[i];
    }
    const auto p = make(mu, -0.4, {0.3}, {0.0}, {0.85});
    const auto a = egarch_filter(series(r), EgarchSpec{1, 1, 1}, p, -5.0);
    const auto b = egarch_filter(series(flipped), EgarchSpec{1, 1, 1}, p, -5.0);
    for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(a.cond_vol[t], b.cond_vol[t], 1e-14);
}

TEST(EgarchFilter, ExplosiveParametersThrow) {
    const auto r = series(std::vector<double>(50, 5.0));
    EXPECT_THROW(egarch_filter(r, EgarchSpec{1, 0, 1}, make(0, 200, {0.1}, {}, {0.9}), 600.0), NumericalError);
}

TEST(EgarchSimulate, DeterministicPerSeed) {
    const auto p = make(0, -0.2, {0.15}, {-0.05}, {0.9});
    const auto a = egarch_simulate(EgarchSpec{1, 1, 1}, p, 200, 77);
    const auto b = egarch_simulate(EgarchSpec{1, 1, 1}, p, 200, 77);
    const auto c = egarch_simulate(EgarchSpec{1, 1, 1}, p, 200, 78);
    EXPECT_EQ(a.values, b.values);
    EXPECT_NE(a.values, c.values);
    EXPECT_THROW(egarch_simulate(EgarchSpec{1, 1, 1}, p, 0, 1), DataError);
}

TEST(EgarchSimulate, ConstantVarianceMonteCarlo) {
    const auto r = egarch_simulate(EgarchSpec{1, 0, 1}, make(0, -1, {0}, {}, {0}), 100000, 2024);
    double m = 0, v = 0;
    for (double x : r.values) m += x;
    m /= static_cast<double>(r.size());
    for (double x : r.values) v += (x - m) * (x - m);
    v /= static_cast<double>(r.size() - 1);
    EXPECT_NEAR(std::sqrt(v) / std::exp(-0.5), 1.0, 0.01);
}

TEST(EgarchFit, RejectsShortSeries) {
    const auto r = testing_support::white_noise(29, 3, 0.05);
    EXPECT_THROW(egarch_fit(r, EgarchSpec{1, 1, 1}), DataError);
    // 5 * (1 + 3 + 3 + 1) = 40
    EXPECT_THROW(egarch_fit(testing_support::white_noise(40, 3, 0.05), EgarchSpec{3, 3, 1}), DataError);
}

TEST(EgarchFit, RecoversPlantedParameters) {
    const auto truth = make(0, -0.2, {0.15}, {-0.05}, {0.9});
    const auto r = egarch_simulate(EgarchSpec{1, 1, 1}, truth, 5000, 101);
    const auto fit = egarch_fit(r, EgarchSpec{1, 1, 1});
    ASSERT_TRUE(fit.std_errs.has_value());
    const auto est = fit.params.to_vector();
    const auto tv = truth.to_vector();
    for (std::size_t i = 0; i < est.size(); ++i) EXPECT_LT(std::abs(est[i] - tv[i]), 3 * (*fit.std_errs)[i]) << i;
    EXPECT_NEAR(oracles::gaussian_loglik(fit.residuals.values, fit.cond_vol.values), fit.log_likelihood, 1e-8);
    EXPECT_LE(fit.params.beta_abs_sum(), 0.999 + 1e-12);
}

// Short samples used to send the search toward strongly negative alpha, where
// the filter stops forgetting its start and the likelihood spikes.
TEST(EgarchFit, ShortSamplesFitWithInvertibleFilter) {
    Gen g(59);
    for (int rep = 0; rep < 40; ++rep) {
        const auto truth = make(0, g.uniform(-1.0, -0.2), {g.uniform(0.1, 0.5)}, {g.uniform(-0.2, 0.2)}, {0.9});
        const auto r = egarch_simulate(EgarchSpec{1, 1, 1}, truth, 59, g.next());
        const auto fit = egarch_fit(r, EgarchSpec{1, 1, 1});
        // mean log |d h_t / d h_{t-1}| along the fitted path
        double lyap = 0.0;
        const auto& e = fit.residuals.values;
        const auto& s = fit.cond_vol.values;
        for (std::size_t t = 1; t < e.size(); ++t) {
            const double z = e[t - 1] / s[t - 1];
            lyap += std::log(std::abs(fit.params.beta[0] - 0.5 * (fit.params.alpha[0] * std::abs(z) + fit.params.gamma[0] * z)));
        }
        EXPECT_LT(lyap / static_cast<double>(e.size() - 1), 0.0) << rep;
    }
}

TEST(EgarchFit, DeterministicAndLocationInvariant) {
    const auto r = egarch_simulate(EgarchSpec{1, 1, 1}, make(0.001, -0.5, {0.2}, {-0.1}, {0.9}), 1500, 7);
    const auto a = egarch_fit(r, EgarchSpec{1, 1, 1});
    const auto b = egarch_fit(r, EgarchSpec{1, 1, 1});
    EXPECT_EQ(a.params.to_vector(), b.params.to_vector());

    std::vector<double> shifted = r.values;
    for (auto& x : shifted) x += 0.01;
    const auto c = egarch_fit(series(shifted, r.start), EgarchSpec{1, 1, 1});
    EXPECT_NEAR(c.params.mu, a.params.mu + 0.01, 1e-3);
    const auto pa = a.params.to_vector();
    const auto pc = c.params.to_vector();
    for (std::size_t i = 1; i < pa.size(); ++i) EXPECT_NEAR(pc[i], pa[i], 1e-3) << i;
}

TEST(EgarchFit, JsonUsesFixedOrder) {
    const auto r = egarch_simulate(EgarchSpec{1, 1, 1}, make(0, -0.2, {0.15}, {-0.05}, {0.9}), 400, 3);
    const auto j = to_json(egarch_fit(r, EgarchSpec{1, 1, 1}));
    ASSERT_EQ(j["params"].size(), 5u);
    EXPECT_EQ(j["params"][0]["name"], "mu");
    EXPECT_EQ(j["params"][1]["name"], "omega");
    EXPECT_EQ(j["params"][2]["name"], "alpha1");
    EXPECT_EQ(j["params"][3]["name"], "gamma1");
    EXPECT_EQ(j["params"][4]["name"], "beta1");
}

TEST(Optimize, NelderMeadAndBfgsOnRosenbrock) {
    const optimize::Objective rosen = [](const Eigen::VectorXd& x) {
        return 100 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1 - x(0), 2);
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    const auto nm = optimize::nelder_mead(rosen, x0, Eigen::VectorXd::Constant(2, 0.5));
    EXPECT_NEAR(nm.x(0), 1.0, 1e-3);
    const auto bf = optimize::bfgs(rosen, nm.x);
    EXPECT_NEAR(bf.x(0), 1.0, 1e-5);
    EXPECT_NEAR(bf.x(1), 1.0, 1e-5);
}

TEST(Optimize, NumericHessianOfQuadratic) {
    Eigen::Matrix2d a;
    a << 3, 1, 1, 2;
    const optimize::Objective f = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(a * x); };
    Eigen::VectorXd x(2);
    x << 0.3, -0.7;
    const auto h = optimize::numeric_hessian(f, x);
    EXPECT_LT((h - a).cwiseAbs().maxCoeff(), 1e-5);
    const auto inv = optimize::spd_inverse(h);
    ASSERT_TRUE(inv.has_value());
    EXPECT_LT((*inv * a - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-5);
    Eigen::Matrix2d indef;
    indef << 1, 0, 0, -1;
    EXPECT_FALSE(optimize::spd_inverse(indef).has_value());
}
