#include "qpsim/units.hpp"

#include <cmath>

namespace qpsim::units {

double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double watt_to_dbm(double watt) { return 10.0 * std::log10(watt) + 30.0; }

} // namespace qpsim::units
