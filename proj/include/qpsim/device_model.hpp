// device_model.hpp: transmon spectrum, flux sensitivity, 1/f flux-noise
// dephasing, and the photon-generation efficiency budget.

#pragma once

#include <numbers>

namespace qpsim::device {

/// Transmon with a symmetric dc-SQUID. Energies are E/h in GHz, flux in Phi0.
struct QubitParams {
    double ej_max_ghz{16.8};
    double ec_ghz{0.415};
    double flux{0.0};
    double lambda_12{std::numbers::sqrt2};

    /// E_J(flux) = E_J^max |cos(pi flux)|.
    double ej_ghz() const;
};

/// Minimum E_J/E_C for which the asymptotic transmon expressions are used.
inline constexpr double kTransmonRegimeMin = 10.0;

struct FluxNoiseModel {
    double a_phi_sqrt{1.5e-6}; // sqrt(A_Phi) in Phi0
    double zeta{3.5};

    void validate() const;
};

/// Decoherence budget. All rates are angular, rad/us.
struct Rates {
    double gamma1_e{0.0};
    double gamma1_c{0.0};
    double gamma1_n{0.0};
    double gamma_phi{0.0};

    double gamma1() const { return gamma1_e + gamma1_c + gamma1_n; }
    double gamma2() const { return 0.5 * gamma1() + gamma_phi; }
    /// Emission efficiency Gamma1e / Gamma1.
    double eta() const;
    /// Weak-drive reflection-circle radius Gamma1e / (2 Gamma2); a lower bound on eta.
    double eta_prime() const;

    void validate() const;

    /// Rates with Gamma1c = Gamma1n = 0 and gamma chosen so that the totals
    /// reproduce the given cyclic Gamma1/2pi and Gamma2/2pi (MHz).
    static Rates from_cyclic_mhz(double gamma1_mhz, double gamma2_mhz);
};

struct TransitionFrequencies {
    double omega01_ghz;
    double omega12_ghz;
    double anharmonicity_ghz;
};

/// Leading-order transmon asymptotics: omega01 = sqrt(8 E_J E_C) - E_C,
/// alpha = -E_C. Throws RegimeError if E_J(flux)/E_C < 10.
TransitionFrequencies transition_frequencies(const QubitParams& q);

/// d(omega01/2pi)/d(flux) in GHz per Phi0, from the closed form. Negative for
/// flux in (0, 0.5), zero at the sweet spot.
double flux_sensitivity(const QubitParams& q);

/// Pure dephasing from 1/f flux noise:
///   gamma = zeta * sqrt(A_Phi) * |dE01/dPhi| / hbar.
/// dE01/dPhi arrives as a cyclic gradient in GHz/Phi0, so E/hbar = 2*pi*f and
/// the GHz -> rad/us factor is 2*pi*1e3. Result in rad/us.
double pure_dephasing_1f(const FluxNoiseModel& noise, double de01_dphi_ghz);

/// gamma_eqv = (1 - eta') Gamma2, same units as gamma2.
double gamma_eqv(double eta_prime, double gamma2);

struct BudgetInput {
    double alpha_p{0.01};     // state-preparation error
    double alpha_c2{0.01};    // Gamma1c / Gamma1e
    double beta{0.0};         // stray control/emission coupling
    double dt_min_ns{2.0};    // minimal pulse time
    double omega{0.0};        // carrier, rad/s
    double gamma1_e{5.0};     // rad/us
    double gamma1_n{0.0};     // rad/us

    void validate() const;
};

struct BudgetReport {
    double drive_time_ns;
    double rabi_rate;          // Omega, rad/s
    double drive_power_W;
    double pulse_energy_J;
    double leakage;            // alpha_l
    double coupling_efficiency; // eta
    double total_efficiency;   // (1 - alpha_c^2)(1 - alpha_p)
};

/// Throws ConstraintError when alpha_p < Gamma1e * dt_min.
BudgetReport efficiency_budget(const BudgetInput& b);

} // namespace qpsim::device
