// levmar.hpp: Levenberg-Marquardt for small dense least-squares problems.

#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace qpsim::fit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using ResidualFn = std::function<VectorXd(const VectorXd&)>;
using JacobianFn = std::function<MatrixXd(const VectorXd&)>;

struct LMOptions {
    int max_iterations{200};
    double gradient_tol{1e-10}; // on max |J^T r| relative to (1 + cost)
    double step_tol{1e-13};     // on |dx| relative to |x|
    double fd_step{1e-7};       // relative step for the finite-difference Jacobian
};

struct LMResult {
    VectorXd x;
    VectorXd residual;
    MatrixXd jacobian;
    MatrixXd covariance; // s^2 (J^T J)^-1, s^2 = cost / (m - n)
    double cost{0.0};    // sum of squared residuals
    int iterations{0};
    bool converged{false};
    std::string stop_reason;
};

/// Central-difference Jacobian.
MatrixXd numeric_jacobian(const ResidualFn& f, const VectorXd& x, double rel_step = 1e-7);

/// Minimizes |f(x)|^2. Uses `jac` when given, else central differences.
/// Throws ConvergenceError when max_iterations is reached first.
LMResult levenberg_marquardt(const ResidualFn& f, VectorXd x0, const JacobianFn& jac = {},
                             const LMOptions& opts = {});

} // namespace qpsim::fit
