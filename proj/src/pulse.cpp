#include "qpsim/pulse.hpp"

#include <cmath>
#include <limits>

#include "qpsim/errors.hpp"

namespace qpsim::engine {

void Pulse::validate() const {
    if (!(sigma_ns > 0.0)) throw DomainError("pulse sigma must be > 0");
    if (!(truncation >= 2.0)) throw DomainError("pulse truncation must be >= 2 sigma");
    if (!std::isfinite(omega0) || !std::isfinite(detuning)) throw DomainError("pulse parameters must be finite");
}

double Pulse::envelope(double t) const {
    const double u = t - center_ns;
    if (std::abs(u) > truncation * sigma_ns) return 0.0;
    return omega0 * std::exp(-u * u / (2.0 * sigma_ns * sigma_ns));
}

double Pulse::fwhm_ns() const { return 2.0 * sigma_ns * std::sqrt(2.0 * std::log(2.0)); }

double rabi_angle(const Pulse& p) {
    p.validate();
    constexpr int panels = 4096; // even
    const double a = p.window_start();
    const double b = p.window_end();
    const double h = (b - a) / panels;
    auto f = [&](double t) {
        const double u = t - p.center_ns;
        return p.omega0 * std::exp(-u * u / (2.0 * p.sigma_ns * p.sigma_ns));
    };
    double s = f(a) + f(b);
    for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

double omega0_for_theta(const Pulse& shape, double theta) {
    if (!(theta >= 0.0) || !std::isfinite(theta)) throw DomainError("theta must be finite and >= 0");
    Pulse p = shape;
    auto angle = [&](double w) {
        p.omega0 = w;
        return rabi_angle(p);
    };
    double lo = 0.0;
    double hi = 1.0 / shape.sigma_ns;
    while (angle(hi) < theta) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (angle(mid) < theta ? lo : hi) = mid;
    }
    // theta is linear in omega0; take the endpoint closest in angle
    return std::abs(angle(lo) - theta) <= std::abs(angle(hi) - theta) ? lo : hi;
}

Pulse pulse_for_theta(const Pulse& shape, double theta) {
    Pulse p = shape;
    p.omega0 = omega0_for_theta(shape, theta);
    return p;
}

void PulseTrain::validate() const {
    pulse.validate();
    if (count < 1) throw DomainError("pulse train needs at least one pulse");
    if (!(period_ns > 2.0 * pulse.truncation * pulse.sigma_ns)) {
        throw DomainError("pulse-train period shorter than the pulse window");
    }
}

Pulse PulseTrain::pulse_at(int k) const {
    Pulse p = pulse;
    p.center_ns += k * period_ns;
    return p;
}

double PulseTrain::envelope(double t) const {
    const double rel = t - pulse.center_ns;
    const int k = static_cast<int>(std::floor(rel / period_ns + 0.5));
    if (k < 0 || k >= count) return 0.0;
    return pulse_at(k).envelope(t);
}

bool PulseTrain::resets_between_pulses(double gamma1_per_ns) const {
    return period_ns * gamma1_per_ns >= 10.0;
}

Drive Drive::from_pulse(const Pulse& p) {
    p.validate();
    Drive d;
    d.envelope = [p](double t) { return p.envelope(t); };
    d.detuning = p.detuning;
    d.peak = std::abs(p.omega0);
    d.shortest_feature_ns = p.sigma_ns;
    d.breakpoints = {p.window_start(), p.window_end()};
    d.active_until_ns = p.window_end();
    return d;
}

Drive Drive::from_train(const PulseTrain& t) {
    t.validate();
    Drive d;
    d.envelope = [t](double x) { return t.envelope(x); };
    d.detuning = t.pulse.detuning;
    d.peak = std::abs(t.pulse.omega0);
    d.shortest_feature_ns = t.pulse.sigma_ns;
    for (int k = 0; k < t.count; ++k) {
        const Pulse p = t.pulse_at(k);
        d.breakpoints.push_back(p.window_start());
        d.breakpoints.push_back(p.window_end());
    }
    d.active_until_ns = t.end_ns();
    return d;
}

Drive Drive::constant(double omega, double detuning) {
    Drive d;
    d.envelope = [omega](double) { return omega; };
    d.detuning = detuning;
    d.peak = std::abs(omega);
    d.active_until_ns = std::numeric_limits<double>::infinity();
    return d;
}

Drive Drive::none() {
    Drive d = constant(0.0, 0.0);
    d.active_until_ns = -std::numeric_limits<double>::infinity();
    return d;
}

} // namespace qpsim::engine
