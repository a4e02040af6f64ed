#include "qpsim/levmar.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qpsim/errors.hpp"

namespace qpsim::fit {

MatrixXd numeric_jacobian(const ResidualFn& f, const VectorXd& x, double rel_step) {
    const VectorXd r0 = f(x);
    MatrixXd j(r0.size(), x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double h = rel_step * std::max(std::abs(x(k)), 1e-8);
        VectorXd xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        j.col(k) = (f(xp) - f(xm)) / (xp(k) - xm(k));
    }
    return j;
}

LMResult levenberg_marquardt(const ResidualFn& f, VectorXd x, const JacobianFn& jac, const LMOptions& opts) {
    auto jacobian = [&](const VectorXd& p) { return jac ? jac(p) : numeric_jacobian(f, p, opts.fd_step); };

    VectorXd r = f(x);
    if (!r.allFinite()) throw ConvergenceError("residual is not finite at the starting point");
    double cost = r.squaredNorm();
    MatrixXd J = jacobian(x);
    VectorXd diag = (J.transpose() * J).diagonal().cwiseMax(1e-300);
    double lambda = 1e-3;
    double nu = 2.0;

    LMResult res;
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        const MatrixXd JtJ = J.transpose() * J;
        const VectorXd g = J.transpose() * r;
        diag = diag.cwiseMax(JtJ.diagonal());
        if (g.cwiseAbs().maxCoeff() <= opts.gradient_tol * (1.0 + cost)) {
            res.converged = true;
            res.stop_reason = "gradient tolerance";
            break;
        }
        MatrixXd A = JtJ;
        A.diagonal() += lambda * diag;
        const VectorXd dx = A.ldlt().solve(-g);
        if (!dx.allFinite()) throw ConvergenceError("singular normal equations");
        if (dx.norm() <= opts.step_tol * (x.norm() + opts.step_tol)) {
            res.converged = true;
            res.stop_reason = "step tolerance";
            break;
        }
        const VectorXd xn = x + dx;
        const VectorXd rn = f(xn);
        const double cn = rn.allFinite() ? rn.squaredNorm() : INFINITY;
        const double predicted = -(dx.dot(g) * 2.0 + dx.dot(JtJ * dx));
        const double rho = predicted > 0.0 ? (cost - cn) / predicted : -1.0;
        if (rho > 0.0 && cn <= cost) {
            x = xn;
            r = rn;
            cost = cn;
            J = jacobian(x);
            lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
            nu = 2.0;
        } else {
            lambda *= nu;
            nu *= 2.0;
            if (lambda > 1e300) {
                res.converged = true;
                res.stop_reason = "no further decrease";
                break;
            }
        }
    }
    if (!res.converged) {
        std::ostringstream os;
        os << "no convergence after " << opts.max_iterations << " iterations (cost " << cost << ")";
        throw ConvergenceError(os.str());
    }
    res.x = x;
    res.residual = r;
    res.jacobian = J;
    res.cost = cost;
    res.iterations = it;
    const auto m = r.size();
    const auto n = x.size();
    const double s2 = m > n ? cost / static_cast<double>(m - n) : 0.0;
    const MatrixXd JtJ = J.transpose() * J;
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(JtJ);
    res.covariance = s2 * cod.pseudoInverse();
    return res;
}

} // namespace qpsim::fit
