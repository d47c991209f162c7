#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace climvol::optimize {

// Objective to minimize. May return +inf for infeasible points.
using Objective = std::function<double(const Eigen::VectorXd&)>;

struct Result {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

struct NelderMeadOptions {
    int max_iterations = 2000;
    double f_tolerance = 1e-10;  // spread of simplex values
    double x_tolerance = 1e-8;   // simplex diameter
};

// Downhill simplex with adaptive coefficients (Gao & Han). `step` gives the
// initial edge length along each coordinate.
Result nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& step,
                   const NelderMeadOptions& opts = {});

struct BfgsOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;  // max |g_i| * max(|x_i|, 1)
    double f_tolerance = 1e-12;        // relative decrease
};

// Quasi-Newton minimization with central-difference gradients and a
// backtracking Armijo line search.
Result bfgs(const Objective& f, const Eigen::VectorXd& x0, const BfgsOptions& opts = {});

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double* fx_out = nullptr);

// Central-difference Hessian; step_i = 1e-4 * max(|x_i|, min_scale).
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, double min_scale = 1.0);

// Inverse of a symmetric positive-definite matrix, or nullopt if it is not PD.
std::optional<Eigen::MatrixXd> spd_inverse(const Eigen::MatrixXd& m);

}  // namespace climvol::optimize
