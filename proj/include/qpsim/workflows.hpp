// workflows.hpp: multi-module pipelines shared by the CLI and the
// acceptance suite (Rabi sweeps, reflection sweeps, engine correlations,
// synthetic estimator runs, flux scans).

#pragma once

#include <complex>
#include <functional>
#include <cstdint>
#include <vector>

#include "qpsim/config.hpp"
#include "qpsim/correlator.hpp"
#include "qpsim/csv.hpp"
#include "qpsim/detection_chain.hpp"
#include "qpsim/fitters.hpp"
#include "qpsim/lindblad.hpp"

namespace qpsim::flow {

using cplx = std::complex<double>;

/// Runs f(i) for i < n over `workers` threads, interleaved.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& f);

std::vector<double> linspace(double a, double b, std::size_t n);

/// Least-squares scale y ~ c m; returns (c, R^2).
std::pair<double, double> scale_fit(const std::vector<double>& model, const std::vector<double>& y);

// --- Rabi dynamics -----------------------------------------------------------

struct RabiSweep {
    std::vector<double> thetas;
    std::vector<engine::EmissionRecord> records; // phase-rotated, filtered if bandwidth > 0
    double bandwidth_mhz{0.0};
    double phase{0.0};      // rotation applied so Re<a> peaks at theta = pi/2
    double t_m_amp{0.0};    // peak time of |<a>| at theta = pi/2, after the drive
    double t_m_power{0.0};  // peak time of <a^+ a> at theta = pi, after the drive
    std::vector<cplx> amp_at_tm;
    std::vector<double> power_at_tm;
    std::vector<double> amp_max;   // max over t of |<a>|
    std::vector<double> power_max; // max over t of <a^+ a>
    double max_convergence_error{0.0};
    double min_eigenvalue{0.0};
    double max_trace_error{0.0};
};

/// Emission for one Rabi angle on [0, t_end] with output spacing dt.
engine::EmissionRecord rabi_trace(const config::RunConfig& c, double theta, double t_end_ns, double dt_ns,
                                  double bandwidth_mhz, engine::Trajectory* traj = nullptr);

RabiSweep rabi_sweep(const config::RunConfig& c, const std::vector<double>& thetas, double bandwidth_mhz,
                     double t_end_ns = 200.0, double dt_ns = 0.25);

// --- Reflection ----------------------------------------------------------------

/// Omega^2 per watt for a drive entering through the emission line,
/// Omega^2 = 4 Gamma1e * W / (hbar omega), in (rad/us)^2 / W.
double omega2_per_watt(const device::Rates& r, double carrier_ghz);
/// Photon flux for a power, photons per microsecond.
double photons_per_us(double watt, double carrier_ghz);
/// Same Omega^2 = 4 Gamma1e * flux law, anchored on a stated photon flux at
/// one power instead of the hbar omega conversion.
double omega2_per_watt_from_flux(const device::Rates& r, double photons_per_us_at, double watt_at);

std::vector<double> sweep_powers_dbm(); // -146 ... -116 dBm in 2 dB steps
std::vector<double> detuning_grid(const device::Rates& r, double span_gamma2, std::size_t n);

// --- Engine correlations -------------------------------------------------------

struct EngineCorrelation {
    engine::TwoTimeGrid grid;     // filtered when bandwidth > 0
    std::vector<double> tau_ns;
    std::vector<cplx> g1;         // integrated over t
    std::vector<double> g2;
    std::size_t period_index{0};  // tau index of the first side peak
    double g1_center{0.0}, g1_side{0.0};
    double g2_center{0.0}, g2_side{0.0};
    double g2_ratio{0.0};         // center / side, point heights
};

/// Two pulses one period apart, t grid over the first emission window.
EngineCorrelation engine_correlation(const config::RunConfig& c, double theta, double bandwidth_mhz,
                                     double dt_ns = 0.5, double window_ns = 200.0);

// --- Synthetic estimator runs --------------------------------------------------

/// Records [first, first + count) of another source.
class SubrangeSource final : public chain::RecordSource {
public:
    SubrangeSource(chain::RecordSource& inner, std::size_t first, std::size_t count);
    std::size_t n_records() const override { return count_; }
    std::size_t record_len() const override { return inner_.record_len(); }
    const chain::ChainConfig& config() const override { return inner_.config(); }
    void fetch(std::size_t first, std::size_t count, chain::RecordBlock& out) override;

private:
    chain::RecordSource& inner_;
    std::size_t first_, count_;
};

struct RatioStats {
    double mean{0.0};
    double sem{0.0};       // standard error over groups
    std::vector<double> groups;
    std::uint64_t records{0};
};

/// Center ratio over `groups` disjoint record groups of one synthetic run.
RatioStats synthetic_ratio(const chain::ChainConfig& cfg, const chain::SourceSpec& src, const engine::PulseTrain& train,
                           std::size_t n_records, std::size_t groups, std::uint64_t seed,
                           const corr::CorrelatorOptions& opts, const corr::NormalizeOptions& norm);

/// Noise-free expectation of the estimator for a deterministic source: one
/// record of the mean field through the same filter, estimator and
/// normalization. The noise terms average to zero after background
/// subtraction, so this is the large-n limit.
corr::CorrEstimate mean_field_expectation(const chain::ChainConfig& cfg, const chain::SourceSpec& src,
                                          const engine::PulseTrain& train, const corr::CorrelatorOptions& opts,
                                          const corr::NormalizeOptions& norm);

// --- Flux scan -------------------------------------------------------------------

/// Columns: flux, omega01_ghz, omega12_ghz, anharmonicity_ghz, de01_dphi_ghz,
/// gamma_phi_mhz, eta_prime_limit, gamma_eqv_limit_mhz.
io::Table flux_scan(const config::RunConfig& c, double flux_min, double flux_max, std::size_t n);

} // namespace qpsim::flow
