// fftw_lock.hpp: FFTW planner calls are not thread-safe; every plan
// creation and destruction in the library takes this lock.
#pragma once

#include <mutex>

namespace qpsim::detail {
std::mutex& fftw_planner_mutex();
}
