// pulse.hpp: truncated-Gaussian drive envelopes and pulse trains.

#pragma once

#include <functional>
#include <vector>

namespace qpsim::engine {

/// Omega(t) = omega0 * exp(-(t - center)^2 / (2 sigma^2)) for |t - center| <= truncation*sigma.
struct Pulse {
    double sigma_ns{2.0};
    double omega0{0.0};      // rad/ns
    double truncation{3.0};  // half-window in units of sigma
    double detuning{0.0};    // omega01 - omega_d, rad/ns
    double center_ns{0.0};

    void validate() const;
    double envelope(double t_ns) const;
    double window_start() const { return center_ns - truncation * sigma_ns; }
    double window_end() const { return center_ns + truncation * sigma_ns; }
    double fwhm_ns() const;
};

/// Integral of Omega(t) over the truncated window (composite Simpson, 4096 panels).
double rabi_angle(const Pulse& p);

/// Peak amplitude giving the requested Rabi angle for the pulse's shape
/// (sigma, truncation). Bisection on rabi_angle.
double omega0_for_theta(const Pulse& shape, double theta);

/// Copy of `shape` with omega0 set for the requested Rabi angle.
Pulse pulse_for_theta(const Pulse& shape, double theta);

struct PulseTrain {
    Pulse pulse;           // first pulse; subsequent ones shifted by k*period
    int count{16};
    double period_ns{512.0};

    void validate() const;
    double envelope(double t_ns) const;
    Pulse pulse_at(int k) const;
    double end_ns() const { return pulse_at(count - 1).window_end(); }
    /// True when period >= 10/Gamma1 (gamma1 in rad/ns).
    bool resets_between_pulses(double gamma1_per_ns) const;
};

/// Drive as seen by the Lindblad engine: real envelope (drive phase defines
/// the real axis), constant detuning, and the times where the envelope is
/// discontinuous so the integrator can place step boundaries there.
struct Drive {
    std::function<double(double)> envelope;
    double detuning{0.0};
    double peak{0.0};
    double shortest_feature_ns{0.0}; // sigma for pulses, 0 for constant drive
    std::vector<double> breakpoints;
    double active_until_ns{0.0};     // envelope identically zero afterwards

    static Drive from_pulse(const Pulse& p);
    static Drive from_train(const PulseTrain& t);
    static Drive constant(double omega, double detuning);
    static Drive none();
};

} // namespace qpsim::engine
