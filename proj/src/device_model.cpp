#include "qpsim/device_model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"

namespace qpsim::device {

namespace {

void check_regime(const QubitParams& q) {
    if (!(q.ej_max_ghz > 0.0) || !(q.ec_ghz > 0.0)) {
        throw RegimeError("E_J^max and E_C must be positive");
    }
    const double ratio = q.ej_ghz() / q.ec_ghz;
    if (!(ratio >= kTransmonRegimeMin)) {
        std::ostringstream os;
        os << "E_J/E_C = " << ratio << " at flux " << q.flux
           << " is outside the transmon regime (need >= " << kTransmonRegimeMin << ")";
        throw RegimeError(os.str());
    }
}

} // namespace

double QubitParams::ej_ghz() const {
    return ej_max_ghz * std::abs(std::cos(units::pi * flux));
}

void FluxNoiseModel::validate() const {
    if (!(a_phi_sqrt >= 0.0)) throw DomainError("flux noise amplitude must be >= 0");
    if (!(zeta > 0.0)) throw DomainError("zeta must be > 0");
}

double Rates::eta() const {
    const double g1 = gamma1();
    if (!(g1 > 0.0)) throw DomainError("eta undefined for Gamma1 <= 0");
    return gamma1_e / g1;
}

double Rates::eta_prime() const {
    const double g2 = gamma2();
    if (!(g2 > 0.0)) throw DomainError("eta' undefined for Gamma2 <= 0");
    return gamma1_e / (2.0 * g2);
}

void Rates::validate() const {
    if (!(gamma1_e >= 0.0 && gamma1_c >= 0.0 && gamma1_n >= 0.0 && gamma_phi >= 0.0)) {
        throw DomainError("rates must be non-negative");
    }
}

Rates Rates::from_cyclic_mhz(double gamma1_mhz, double gamma2_mhz) {
    Rates r;
    r.gamma1_e = units::mhz_to_rad_per_us(gamma1_mhz);
    r.gamma_phi = units::mhz_to_rad_per_us(gamma2_mhz - 0.5 * gamma1_mhz);
    if (r.gamma_phi < 0.0) throw DomainError("Gamma2 < Gamma1/2 implies negative pure dephasing");
    return r;
}

TransitionFrequencies transition_frequencies(const QubitParams& q) {
    check_regime(q);
    const double ej = q.ej_ghz();
    const double ec = q.ec_ghz;
    const double w01 = std::sqrt(8.0 * ej * ec) - ec;
    const double alpha = -ec;
    return {w01, w01 + alpha, alpha};
}

double flux_sensitivity(const QubitParams& q) {
    check_regime(q);
    // omega01 = sqrt(8 EJmax EC |cos(pi f)|) - EC
    const double c = std::cos(units::pi * q.flux);
    const double s = std::sin(units::pi * q.flux);
    const double d_abs_cos = (c >= 0.0 ? -1.0 : 1.0) * units::pi * s;
    return std::sqrt(8.0 * q.ej_max_ghz * q.ec_ghz) * d_abs_cos / (2.0 * std::sqrt(std::abs(c)));
}

double pure_dephasing_1f(const FluxNoiseModel& noise, double de01_dphi_ghz) {
    // GHz/Phi0 * Phi0 -> GHz (cyclic) -> rad/us: * 2pi * 1e3
    return noise.zeta * noise.a_phi_sqrt * units::two_pi * 1e3 * std::abs(de01_dphi_ghz);
}

double gamma_eqv(double eta_prime, double gamma2) {
    if (!(eta_prime > 0.0 && eta_prime <= 1.0)) {
        throw DomainError("gamma_eqv requires 0 < eta' <= 1");
    }
    if (!(gamma2 > 0.0)) throw DomainError("gamma_eqv requires Gamma2 > 0");
    return (1.0 - eta_prime) * gamma2;
}

void BudgetInput::validate() const {
    if (!(alpha_p > 0.0 && alpha_p < 1.0)) throw DomainError("alpha_p must be in (0,1)");
    if (!(alpha_c2 >= 0.0)) throw DomainError("alpha_c^2 must be >= 0");
    if (!(beta >= 0.0)) throw DomainError("beta must be >= 0");
    if (!(dt_min_ns > 0.0)) throw DomainError("dt_min must be > 0");
    if (!(gamma1_e > 0.0)) throw DomainError("Gamma1e must be > 0");
    if (!(gamma1_n >= 0.0)) throw DomainError("Gamma1n must be >= 0");
    if (!(omega > 0.0)) throw DomainError("carrier frequency must be > 0");
}

BudgetReport efficiency_budget(const BudgetInput& b) {
    b.validate();
    const double g1e = units::rad_per_us_to_per_s(b.gamma1_e); // 1/s
    const double dt_min = b.dt_min_ns * 1e-9;
    // alpha_p >= Gamma1e * dt_min; relative slack for the boundary case
    const double floor = g1e * dt_min;
    if (b.alpha_p < floor * (1.0 - 64.0 * std::numeric_limits<double>::epsilon())) {
        std::ostringstream os;
        os << "alpha_p = " << b.alpha_p << " < Gamma1e*dt_min = " << floor;
        throw ConstraintError(os.str());
    }
    BudgetReport r{};
    const double dt = b.alpha_p / g1e;
    r.drive_time_ns = dt * 1e9;
    r.rabi_rate = units::pi / dt;
    r.coupling_efficiency = 1.0 / (1.0 + b.alpha_c2 + b.gamma1_n / b.gamma1_e);
    r.total_efficiency = (1.0 - b.alpha_c2) * (1.0 - b.alpha_p);
    if (b.alpha_c2 > 0.0) {
        r.drive_power_W = units::hbar * b.omega * r.rabi_rate * r.rabi_rate / (b.alpha_c2 * g1e);
        r.leakage = units::pi * units::pi * b.beta / (b.alpha_p * b.alpha_p * b.alpha_c2);
    } else {
        // no coupling to the control line: no finite power reaches the qubit
        r.drive_power_W = std::numeric_limits<double>::infinity();
        r.leakage = b.beta > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    r.pulse_energy_J = r.drive_power_W * dt;
    return r;
}

} // namespace qpsim::device
