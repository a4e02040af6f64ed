// detection_filter.hpp: finite detection bandwidth as a 4th-order Butterworth
// low-pass, applied to engine observables.

#pragma once

#include <complex>
#include <vector>

#include "qpsim/lindblad.hpp"

namespace qpsim::engine {

class ButterworthFilter {
public:
    static constexpr int kOrder = 4;

    /// Cutoff (-3 dB) in cyclic MHz.
    explicit ButterworthFilter(double bandwidth_mhz);

    double bandwidth_mhz() const { return bandwidth_mhz_; }
    double impulse(double t_ns) const; // h(t), 1/ns
    double step(double t_ns) const;    // integral of h from 0 to t
    /// Integral of h^2 over [a, b].
    double energy(double a_ns, double b_ns) const;
    /// 10-90 % rise time of the step response, by bisection on the closed form.
    double rise_time_ns() const;

    /// Zero-order-hold discretization: k[m] = s((m+1)dt) - s(m dt). Sums to 1
    /// up to the truncated tail (< tail_tol).
    std::vector<double> amplitude_kernel(double dt_ns, double tail_tol = 1e-14) const;
    /// Normalized intensity response |h|^2, integrated over each sample bin.
    std::vector<double> intensity_kernel(double dt_ns, double tail_tol = 1e-14) const;

private:
    double bandwidth_mhz_;
    std::complex<double> poles_[kOrder];    // rad/ns
    std::complex<double> residues_[kOrder];
    double h2_total_;
};

/// Causal convolution on a uniform grid; samples before the first are zero.
template <typename T>
std::vector<T> causal_filter(const std::vector<T>& x, const std::vector<double>& kernel);

/// Filters amp with h and power with |h|^2. The record must be on a uniform grid.
/// Populations are left untouched.
EmissionRecord apply_detection_filter(const EmissionRecord& rec, double bandwidth_mhz);

/// G1 filtered with h in both time arguments; G2 and power smoothed with |h|^2
/// in each argument (an approximation to the filtered fourth-order
/// correlator). Requires tau_stride == 1. The grid is assumed to start before
/// any emission so values before spec.t0 are zero.
TwoTimeGrid apply_detection_filter(const TwoTimeGrid& grid, double bandwidth_mhz);

} // namespace qpsim::engine
