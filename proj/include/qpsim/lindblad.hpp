// lindblad.hpp: three-level ladder master equation under a pulsed drive,
// two-level steady state and reflection, input-output observables, and
// quantum-regression two-time correlations.
//
// Time is in ns and rates in rad/ns inside the engine. device::Rates (rad/us)
// is converted once, in LindbladModel's constructor.

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qpsim/device_model.hpp"
#include "qpsim/pulse.hpp"

namespace qpsim::engine {

using cplx = std::complex<double>;
using Matrix3 = Eigen::Matrix3cd;
using Vector9 = Eigen::Matrix<cplx, 9, 1>;
using Matrix9 = Eigen::Matrix<cplx, 9, 9>;

// Level labels for the ladder basis {|0>, |1>, |2>}.
inline Matrix3 basis_op(int j, int k) {
    Matrix3 m = Matrix3::Zero();
    m(j, k) = 1.0;
    return m;
}

Matrix3 ground_state();
Matrix3 excited_state();

struct DensityCheck {
    double hermiticity;  // max |rho - rho^dagger|
    double trace_error;  // |tr rho - 1|
    double min_eigenvalue;

    bool ok(double herm_tol = 1e-10, double trace_tol = 1e-8, double pos_tol = 1e-8) const {
        return hermiticity <= herm_tol && trace_error <= trace_tol && min_eigenvalue >= -pos_tol;
    }
};

DensityCheck check_density(const Matrix3& rho);

/// Engine parameters in rad/ns.
struct EngineRates {
    double gamma1;
    double gamma_phi;
    double anharmonicity;
    double lambda;
};

/// Lindblad generator L_t(X) = -i[H(t), X] + sum_n C_n X C_n^+ - {C_n^+ C_n, X}/2.
///
/// Collapse set:
///   C1 = sqrt(Gamma1) s01,  C3 = sqrt(2 Gamma1) s12   (total Gamma1)
///   C2 = sqrt(2 gamma) s11, C4 = sqrt(2 gamma) s22
/// The dephasing amplitude makes the 0-1 coherence decay at Gamma1/2 + gamma.
class LindbladModel {
public:
    LindbladModel(const EngineRates& rates, Drive drive);
    LindbladModel(const device::QubitParams& q, const device::Rates& r, Drive drive);

    Matrix3 hamiltonian(double t) const;
    Matrix3 apply(double t, const Matrix3& x) const;
    Matrix9 superoperator(double t) const;

    /// dt = min(sigma/50, 0.02 / max(Gamma1, Omega0, |delta|, |alpha|)).
    double default_step() const;

    const Drive& drive() const { return drive_; }
    const EngineRates& rates() const { return rates_; }

private:
    EngineRates rates_;
    Drive drive_;
    std::vector<Matrix3> collapse_;
    Matrix3 decay_term_; // sum C^+ C / 2
};

struct EvolveOptions {
    bool convergence_check{true};
    double tolerance{1e-6}; // max |rho_h - rho_{h/2}| over the output grid
    double max_step_ns{0.0}; // 0 -> model.default_step()
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Matrix3> rho;
    double step_ns{0.0};
    double convergence_error{0.0}; // from the step-halving check, 0 when skipped
};

/// RK4 stepping of X from t0 to t1. Steps never straddle a drive breakpoint;
/// each sub-interval uses ceil(length / max_step) equal steps.
void propagate(const LindbladModel& model, Matrix3& x, double t0, double t1, double max_step);

/// Throws IntegrationError if the step-halving check exceeds the tolerance,
/// DomainError on an invalid initial state or non-increasing grid.
Trajectory evolve(const LindbladModel& model, const Matrix3& rho0, std::span<const double> grid,
                  const EvolveOptions& opts = {});

Trajectory evolve(const device::QubitParams& q, const device::Rates& r, const Pulse& p,
                  const Matrix3& rho0, std::span<const double> grid, const EvolveOptions& opts = {});

/// Uniform grid [t0, t1] with spacing dt (t1 included when it lands on the lattice).
std::vector<double> uniform_grid(double t0, double t1, double dt);

struct EmissionRecord {
    std::vector<double> times;       // ns
    std::vector<cplx> amp;           // <a> = sqrt(Gamma1) rho_10, sqrt(photons/ns)
    std::vector<double> power;       // <a^+ a> = Gamma1 rho_11, photons/ns
    std::vector<double> pop0, pop1, pop2;
    double drive_end_ns{0.0};
};

EmissionRecord emission_observables(const Trajectory& traj, const EngineRates& rates,
                                    double drive_end_ns);
EmissionRecord emission_observables(const Trajectory& traj, const device::Rates& r,
                                    double drive_end_ns);

/// Phase of <a> at the time of its largest magnitude.
double reference_phase(const EmissionRecord& ref);
void rotate_phase(EmissionRecord& rec, double phase);

/// Two-level steady-state <sigma^->. Rates and drive in the same angular units.
cplx steady_state_sigma_minus(const device::Rates& r, double omega, double delta);

/// Reflection in the emission line, r_e = 1 - (Gamma1e/Gamma2)(1 - i d/G2)/(1 + (d/G2)^2 + W^2/(G1 G2)).
cplx reflection(const device::Rates& r, double omega, double delta);

/// Time of maximal rho_11 with the populations there. Used as the
/// "prepared state" point of a pi pulse.
struct PreparationPoint {
    double time_ns;
    double p1;
    double p2;
};
PreparationPoint preparation_point(const EmissionRecord& rec);

// ---------------------------------------------------------------------------
// Two-time correlations

/// t_k = t0 + k*dt for k < n_t, tau_j = j*tau_stride*dt for j < n_tau.
struct TwoTimeSpec {
    double t0{0.0};
    double dt{0.25};
    std::size_t n_t{0};
    std::size_t tau_stride{1};
    std::size_t n_tau{0};

    void validate() const;
    double t(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
    double tau(std::size_t j) const { return static_cast<double>(j * tau_stride) * dt; }
};

struct TwoTimeGrid {
    TwoTimeSpec spec;
    Eigen::MatrixXcd g1; // n_t x n_tau, G1(t, tau) = Gamma1 <s10(t) s01(t+tau)>
    Eigen::MatrixXd g2;  // n_t x n_tau, G2(t, tau) = Gamma1^2 <s10(t) s10(t+tau) s01(t+tau) s01(t)>
    std::vector<double> power; // <a^+ a>(t) on the t grid
    double convergence_error{0.0};
};

/// Quantum regression: per-interval superoperator propagators on the common
/// lattice, rho(t) from rho0 at spec.t0, then X1 = rho(t) s10 and
/// X2 = s01 rho(t) s10 propagated under the same generator.
TwoTimeGrid two_time_correlations(const LindbladModel& model, const Matrix3& rho0,
                                  const TwoTimeSpec& spec, const EvolveOptions& opts = {});

/// Integral over t (trapezoid rule on the t grid) at each tau.
std::vector<cplx> integrate_g1(const TwoTimeGrid& grid);
std::vector<double> integrate_g2(const TwoTimeGrid& grid);

} // namespace qpsim::engine
