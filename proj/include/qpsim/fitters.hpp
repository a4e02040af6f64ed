// fitters.hpp: reflection sweeps, saturation curves and decay envelopes.
//
// Rates are rad/us as in device::Rates; reports add cyclic MHz copies.

#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpsim/device_model.hpp"
#include "qpsim/lindblad.hpp"
#include "qpsim/levmar.hpp"

namespace qpsim::fit {

struct FitParam {
    std::string name;
    double value{0.0};
    double sigma{0.0};
    std::string unit;
};

struct FitReport {
    std::string model;    // short identifier
    std::string equation; // model formula as fitted
    std::vector<FitParam> params;
    std::vector<FitParam> derived;
    double residual_norm{0.0};
    int iterations{0};
    bool converged{false};
    std::size_t n_points{0};
    std::vector<std::string> notes;

    const FitParam& get(const std::string& name) const; // params, then derived
    bool has(const std::string& name) const;
    std::string to_keyvalue() const;
    std::string to_json() const;
};

struct ReflectionSweep {
    std::vector<double> powers_dbm;  // strictly increasing
    std::vector<double> detunings;   // rad/us
    Eigen::MatrixXcd r;              // powers x detunings

    void validate() const;
};

/// Eq. of the reflection coefficient with Omega^2 = s * W, written with
/// q = s * W_ref / Gamma1 so only ratios enter: saturation = q (W / W_ref) / Gamma2.
std::complex<double> reflection_model(double gamma2, double gamma1e, double q, double phi, double delta, double w_rel);

/// Synthetic sweep from device::reflection with Omega^2 = omega2_per_watt * W,
/// plus circular complex Gaussian noise of the given rms (0: noiseless).
ReflectionSweep generate_sweep(const device::Rates& r, const std::vector<double>& powers_dbm,
                               const std::vector<double>& detunings, double omega2_per_watt,
                               double noise_rms = 0.0, std::uint64_t seed = 0);

struct ReflectionFitOptions {
    /// Omega^2 per watt at the device, (rad/us)^2 / W. When given, Gamma1 and
    /// Gamma1c+Gamma1n are reported; the sweep alone fixes only Gamma2, Gamma1e
    /// and q.
    std::optional<double> omega2_per_watt;
    bool fit_phase{true};
    std::optional<Eigen::VectorXd> start; // [gamma2, gamma1e, q, phi]
    LMOptions lm{};
};

/// Joint fit over all powers with shared rates; residuals uniformly weighted.
/// Reports eta' = Gamma1e / (2 Gamma2) clamped to <= 1 plus its raw value.
FitReport fit_reflection(const ReflectionSweep& sweep, const ReflectionFitOptions& opts = {});

struct McResult {
    double mean{0.0};
    double spread{0.0}; // standard deviation of eta' (raw) over trials
    std::vector<double> samples;
};

/// Multiplies the sweep by (1 + a) exp(i phi) with a ~ N(0, amp_jitter),
/// phi ~ N(0, phase_jitter_rad) per trial and refits.
McResult normalization_mc(const ReflectionSweep& sweep, double amp_jitter, double phase_jitter_rad, int n_trials,
                          std::uint64_t seed = 1, const ReflectionFitOptions& opts = {});

/// y = A / (1 + k W). Needs >= 4 points.
FitReport fit_saturation(const std::vector<double>& powers_w, const std::vector<double>& values);

enum class DecayKind { amplitude, power };
std::string to_string(DecayKind k);
DecayKind parse_decay_kind(const std::string& s);

/// y = C exp(-rate (t - t_start)) on [t_start, t_end]. Rate in 1/ns; derived
/// entries give rad/us and cyclic MHz. WindowError when the window has < 10
/// points or spans < 2 decay constants.
FitReport fit_decay(const std::vector<double>& times_ns, const std::vector<double>& values, double t_start,
                    double t_end);

/// amplitude: |<a>|; power: <a^+ a>. The window must start after the drive.
FitReport fit_decay(const engine::EmissionRecord& rec, DecayKind kind, double t_start, double t_end);

} // namespace qpsim::fit
