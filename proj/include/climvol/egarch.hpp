#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "climvol/series.hpp"

namespace climvol::egarch {

// Lag orders: p |standardized shock| terms, o signed (leverage) terms,
// q log-variance terms.
struct EgarchSpec {
    int p = 1;
    int o = 0;
    int q = 1;

    void validate() const;
    int max_lag() const;
    std::size_t num_params() const { return static_cast<std::size_t>(2 + p + o + q); }
};

struct EgarchParams {
    double mu = 0.0;
    double omega = 0.0;
    std::vector<double> alpha;
    std::vector<double> gamma;
    std::vector<double> beta;

    // Serialization order: mu, omega, alpha_1..p, gamma_1..o, beta_1..q.
    std::vector<double> to_vector() const;
    static EgarchParams from_vector(const EgarchSpec& spec, const std::vector<double>& v);
    std::vector<std::string> names() const;
    double beta_abs_sum() const;

    void validate(const EgarchSpec& spec) const;
};

struct FilterResult {
    MonthlySeries cond_vol;   // sigma_t
    MonthlySeries residuals;  // epsilon_t = r_t - mu
    double log_likelihood = 0.0;
};

struct EgarchFit {
    EgarchSpec spec;
    EgarchParams params;
    std::optional<std::vector<double>> std_errs;  // nullopt when the Hessian is not PD
    double log_likelihood = 0.0;
    MonthlySeries cond_vol;
    MonthlySeries residuals;
    bool converged = false;
    int iterations = 0;
};

// Log-variance recursion. Pre-sample log variances are set to the log of the
// sample variance of `returns` (or `presample_log_var` when given);
// pre-sample standardized shocks are 0, so each alpha_i adds
// -alpha_i sqrt(2/pi) until real shocks are available.
FilterResult egarch_filter(const MonthlySeries& returns, const EgarchSpec& spec, const EgarchParams& params,
                           std::optional<double> presample_log_var = std::nullopt);

// Gaussian log-likelihood of residuals given conditional volatilities.
double gaussian_loglik(const std::vector<double>& residuals, const std::vector<double>& cond_vol);

// Maximum likelihood: Nelder-Mead warm start, BFGS refinement, observed
// information standard errors. The search is restricted to parameters whose
// log-variance filter is invertible along the data (negative top Lyapunov
// exponent of the recursion), which excludes likelihood spikes at small T.
// Throws NumericalError if no start converges.
EgarchFit egarch_fit(const MonthlySeries& returns, const EgarchSpec& spec);

// r_t = mu + sigma_t z_t with z_t ~ N(0,1); pre-sample log variance is the
// unconditional mean omega / (1 - sum(beta)) and pre-sample shock terms sit
// at their expectation (zero contribution).
MonthlySeries egarch_simulate(const EgarchSpec& spec, const EgarchParams& params, std::size_t periods,
                              std::uint64_t seed, YearMonth start = {2000, 1});

nlohmann::json to_json(const EgarchFit& fit);

}  // namespace climvol::egarch
