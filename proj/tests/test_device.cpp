#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "qpsim/device_model.hpp"
#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"
#include "qpsim/workflows.hpp"

using namespace qpsim;

TEST_CASE("unit conversions round-trip") {
    CHECK(units::mhz_to_rad_per_us(1.0) == doctest::Approx(2.0 * std::numbers::pi));
    CHECK(units::rad_per_us_to_mhz(units::mhz_to_rad_per_us(7.02)) == doctest::Approx(7.02));
    CHECK(units::mhz_to_rad_per_ns(1000.0) == doctest::Approx(units::ghz_to_rad_per_ns(1.0)));
    CHECK(units::dbm_to_watt(30.0) == doctest::Approx(1.0));
    CHECK(units::dbm_to_watt(-146.0) == doctest::Approx(2.5119e-18).epsilon(1e-4));
    for (double p : {-146.0, -120.0, 0.0, 13.0}) CHECK(units::watt_to_dbm(units::dbm_to_watt(p)) == doctest::Approx(p));
}

TEST_CASE("photon flux at the weakest reflection power") {
    // -146 dBm at 7.062 GHz is about half a photon per microsecond
    const double flux = flow::photons_per_us(units::dbm_to_watt(-146.0), 7.062);
    CHECK(flux == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("asymptotic spectrum agrees with charge-basis diagonalization") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ratio(20.0, 120.0), ec(0.15, 0.6);
    for (int i = 0; i < 40; ++i) {
        device::QubitParams q;
        q.ec_ghz = ec(rng);
        q.ej_max_ghz = ratio(rng) * q.ec_ghz;
        const auto f = device::transition_frequencies(q);
        const auto o = oracle::charge_basis(q.ej_max_ghz, q.ec_ghz, 30);
        CHECK(std::abs(f.omega01_ghz - o.e01) / o.e01 < 0.01);
        CHECK(f.omega12_ghz < f.omega01_ghz);
        CHECK(f.anharmonicity_ghz == doctest::Approx(-q.ec_ghz));
    }
}

TEST_CASE("charge-basis oracle converges in the cutoff") {
    const auto a = oracle::charge_basis(16.8, 0.415, 20);
    const auto b = oracle::charge_basis(16.8, 0.415, 40);
    CHECK(a.e01 == doctest::Approx(b.e01).epsilon(1e-12));
}

TEST_CASE("default device parameters") {
    device::QubitParams q;
    const auto f = device::transition_frequencies(q);
    CHECK(f.omega01_ghz == doctest::Approx(std::sqrt(8.0 * 16.8 * 0.415) - 0.415));
    CHECK(f.anharmonicity_ghz * 1e3 == doctest::Approx(-415.0));
}

TEST_CASE("regime check") {
    device::QubitParams q;
    q.ej_max_ghz = 9.0 * q.ec_ghz;
    CHECK_THROWS_AS(device::transition_frequencies(q), RegimeError);
    q.ej_max_ghz = 16.8;
    q.flux = 0.49; // E_J collapses near half a flux quantum
    CHECK_THROWS_AS(device::transition_frequencies(q), RegimeError);
    CHECK_THROWS_AS(device::flux_sensitivity(q), RegimeError);
}

TEST_CASE("flux sensitivity matches finite differences") {
    device::QubitParams q;
    CHECK(device::flux_sensitivity(q) == doctest::Approx(0.0));
    for (double f : {0.05, 0.12, 0.2, 0.3, -0.2}) {
        q.flux = f;
        const double h = 1e-6;
        device::QubitParams a = q, b = q;
        a.flux = f + h;
        b.flux = f - h;
        const double fd = (device::transition_frequencies(a).omega01_ghz - device::transition_frequencies(b).omega01_ghz) / (2 * h);
        CHECK(device::flux_sensitivity(q) == doctest::Approx(fd).epsilon(1e-6));
        // against the charge-basis spectrum
        const double fo = (oracle::charge_basis(a.ej_ghz(), q.ec_ghz).e01 - oracle::charge_basis(b.ej_ghz(), q.ec_ghz).e01) / (2 * h);
        CHECK(device::flux_sensitivity(q) == doctest::Approx(fo).epsilon(0.02));
        if (f > 0) CHECK(device::flux_sensitivity(q) < 0.0);
    }
}

TEST_CASE("1/f dephasing") {
    device::FluxNoiseModel n;
    CHECK(device::pure_dephasing_1f(n, 0.0) == 0.0);
    // zeta sqrt(A) |dE/dPhi| / hbar with dE = h * 1 GHz per Phi0
    const double expect = 3.5 * 1.5e-6 * (units::planck * 1e9) / units::hbar * 1e-6;
    CHECK(device::pure_dephasing_1f(n, 1.0) == doctest::Approx(expect).epsilon(1e-8));
    CHECK(device::pure_dephasing_1f(n, -2.0) == doctest::Approx(2 * expect));
    n.zeta = -1;
    CHECK_THROWS_AS(n.validate(), DomainError);
}

TEST_CASE("rates and efficiencies") {
    const auto r = device::Rates::from_cyclic_mhz(7.02, 3.54);
    CHECK(units::rad_per_us_to_mhz(r.gamma1()) == doctest::Approx(7.02));
    CHECK(units::rad_per_us_to_mhz(r.gamma2()) == doctest::Approx(3.54));
    CHECK(r.eta() == doctest::Approx(1.0));
    CHECK(r.eta_prime() == doctest::Approx(7.02 / 7.08));
    CHECK(device::gamma_eqv(r.eta_prime(), r.gamma2()) == doctest::Approx(r.gamma_phi).epsilon(1e-9));
    CHECK_THROWS_AS(device::Rates::from_cyclic_mhz(7.0, 3.0), DomainError);
    device::Rates bad;
    bad.gamma1_e = -1.0;
    CHECK_THROWS(bad.validate());
    CHECK_THROWS_AS(device::gamma_eqv(1.2, 1.0), DomainError);

    device::Rates mixed;
    mixed.gamma1_e = 10.0;
    mixed.gamma1_c = 1.0;
    mixed.gamma1_n = 1.0;
    mixed.gamma_phi = 0.5;
    // gamma_eqv = (G1c + G1n)/2 + gamma
    CHECK(device::gamma_eqv(mixed.eta_prime(), mixed.gamma2()) == doctest::Approx(1.0 + 0.5));
}

TEST_CASE("efficiency budget reproduces the closed forms") {
    device::BudgetInput b;
    b.omega = 2.0 * std::numbers::pi * 7e9;
    b.gamma1_e = 1.0 / 0.2; // (0.2 us)^-1 in rad/us
    const auto r = device::efficiency_budget(b);
    const double g1e = 5e6;
    const double w_closed = units::hbar * b.omega * std::numbers::pi * std::numbers::pi * g1e / (0.01 * 0.01 * 0.01);
    CHECK(std::abs(r.drive_power_W - w_closed) / w_closed < 1e-12);
    CHECK(std::abs(r.pulse_energy_J - w_closed * 2e-9) / (w_closed * 2e-9) < 1e-12);
    CHECK(std::abs(r.total_efficiency - 0.99 * 0.99) < 1e-12);
    CHECK(r.coupling_efficiency == doctest::Approx(1.0 / 1.01));
    CHECK(r.drive_time_ns == doctest::Approx(2.0));
    CHECK(r.drive_power_W == doctest::Approx(2.0e-10).epsilon(0.2));
    CHECK(r.pulse_energy_J == doctest::Approx(4.0e-19).epsilon(0.2));

    b.beta = 1e-9;
    CHECK(device::efficiency_budget(b).leakage ==
          doctest::Approx(std::numbers::pi * std::numbers::pi * 1e-9 / (1e-4 * 1e-2)));

    device::BudgetInput tight = b;
    tight.alpha_p = 0.005; // below Gamma1e * dt_min = 0.01
    CHECK_THROWS_AS(device::efficiency_budget(tight), ConstraintError);
}
