// units.hpp: physical constants and the single conversion boundary between
// user-facing cyclic frequencies and the angular rates used internally.
//
// Storage conventions:
//   * decoherence rates (Rates)          rad/us
//   * engine time axis                   ns, rates inside the engine in rad/ns
//   * transmon energies (QubitParams)    GHz (E/h)
//   * user I/O                           cyclic MHz / GHz

#pragma once

#include <numbers>

namespace qpsim::units {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double hbar = 1.054571817e-34;  // J s
inline constexpr double planck = 6.62607015e-34; // J s
inline constexpr double k_boltzmann = 1.380649e-23; // J/K

// cyclic MHz -> rad/us  (2*pi * 1e6 rad/s = 2*pi rad/us)
constexpr double mhz_to_rad_per_us(double f_mhz) { return two_pi * f_mhz; }
constexpr double rad_per_us_to_mhz(double w) { return w / two_pi; }

// cyclic GHz -> rad/ns
constexpr double ghz_to_rad_per_ns(double f_ghz) { return two_pi * f_ghz; }
constexpr double rad_per_ns_to_ghz(double w) { return w / two_pi; }

// cyclic MHz -> rad/ns
constexpr double mhz_to_rad_per_ns(double f_mhz) { return two_pi * f_mhz * 1e-3; }

constexpr double rad_per_us_to_rad_per_ns(double w) { return w * 1e-3; }
constexpr double rad_per_ns_to_rad_per_us(double w) { return w * 1e3; }

constexpr double rad_per_us_to_per_s(double w) { return w * 1e6; }

// dBm -> W
double dbm_to_watt(double dbm);
double watt_to_dbm(double watt);

} // namespace qpsim::units
