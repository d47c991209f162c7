#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "climvol/series.hpp"

namespace climvol::sarimax {

struct SarimaxOrder {
    int p = 0, d = 0, q = 0;
    int P = 0, D = 0, Q = 0;
    int s = 12;

    bool seasonal() const { return P != 0 || D != 0 || Q != 0; }
    int arma_count() const { return p + q + P + Q; }
    int differencing_span() const { return d + D * s; }
    int ar_span() const { return p + P * s; }
    void validate() const;
    std::string str() const;  // "(p,d,q)(P,D,Q)s"
};

struct SarimaxParams {
    std::vector<double> phi;    // non-seasonal AR
    std::vector<double> Phi;    // seasonal AR
    std::vector<double> theta;  // non-seasonal MA
    std::vector<double> Theta;  // seasonal MA
    std::vector<double> beta_exog;
    double intercept = 0.0;
    double sigma2 = 0.0;
};

// A fitted model keeps the history it was estimated on so it can forecast.
struct SarimaxFit {
    SarimaxOrder order;
    SarimaxParams params;
    double aic = 0.0;
    double loglik = 0.0;
    int n_params = 0;  // ARMA + exog + intercept + sigma2
    std::size_t conditioned_on = 0;  // leading months the likelihood conditions on
    MonthlySeries residuals;  // one-step errors after the conditioning window
    MonthlySeries fitted;     // one-step predictions on the original scale
    MonthlySeries y;
    std::vector<MonthlySeries> exog;
};

// Applies (1 - L)^d then (1 - L^s)^D.
MonthlySeries seasonal_difference(const MonthlySeries& x, int d, int D, int s);

// Coefficients c_0 = 1, c_1.. of the expanded (1 - L)^d (1 - L^s)^D.
std::vector<double> differencing_polynomial(int d, int D, int s);

// Lag coefficients a_1.. with AR operator 1 - sum a_i L^i = phi(L) Phi(L^s).
std::vector<double> expand_ar(const std::vector<double>& phi, const std::vector<double>& Phi, int s);
// Lag coefficients m_1.. with MA operator 1 + sum m_j L^j = theta(L) Theta(L^s).
std::vector<double> expand_ma(const std::vector<double>& theta, const std::vector<double>& Theta, int s);

// True when all roots of 1 - sum c_i z^i lie outside the unit circle.
bool roots_outside_unit_circle(const std::vector<double>& c, double margin = 0.0);

// Two-stage estimation: OLS of the differenced series on differenced exog
// plus intercept, then conditional-sum-of-squares seasonal ARMA on the
// regression residuals. The likelihood conditions on the first
// `condition_on` observations of y (0: the order's own differencing plus AR
// span), so fits with different orders can share one sample.
SarimaxFit sarimax_fit(const MonthlySeries& y, const std::vector<MonthlySeries>& exog, const SarimaxOrder& order,
                       std::size_t condition_on = 0);

// Builds a model from known parameters (for forecasting with fixed
// coefficients); residuals and fitted values are computed from `y`.
SarimaxFit sarimax_from_params(const MonthlySeries& y, const std::vector<MonthlySeries>& exog,
                               const SarimaxOrder& order, const SarimaxParams& params);

struct OrderGrid {
    std::vector<int> p{0, 1, 2}, d{0, 1}, q{0, 1, 2};
    std::vector<int> P{0, 1}, D{0, 1}, Q{0, 1};
    int s = 12;
};

struct GridSearchResult {
    SarimaxFit best;
    int candidates = 0;
    int converged = 0;
};

// Every candidate conditions on the largest differencing plus AR span in the
// grid, so AICs are compared over the same months.
GridSearchResult aic_grid_search(const MonthlySeries& y, const std::vector<MonthlySeries>& exog,
                                 const OrderGrid& grid = {});

// Iterated multi-step forecasts after the end of the fit's history.
MonthlySeries sarimax_forecast(const SarimaxFit& fit, std::size_t horizon,
                               const std::vector<std::vector<double>>& future_exog);

// One-step-ahead predictions for every month of `y_full` after the fit's
// history, using realized values for all lags. `y_full`/`exog_full` must
// start where the fit's history starts.
MonthlySeries sarimax_rolling_forecast(const SarimaxFit& fit, const MonthlySeries& y_full,
                                       const std::vector<MonthlySeries>& exog_full);

nlohmann::json to_json(const SarimaxFit& fit);

}  // namespace climvol::sarimax
