#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "qpsim/detection_filter.hpp"
#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"

using namespace qpsim;
using namespace qpsim::engine;

TEST_CASE("step response matches direct ODE integration") {
    for (double bw : {12.5, 20.0, 25.0, 48.0}) {
        ButterworthFilter f(bw);
        const double wc = units::mhz_to_rad_per_ns(bw);
        const double dt = 0.01;
        const auto y = oracle::butterworth_step(wc, dt, 20000);
        double err = 0;
        for (std::size_t i = 0; i < y.size(); i += 50) err = std::max(err, std::abs(f.step(dt * i) - y[i]));
        CHECK(err < 1e-8);

        // 10-90 % rise time from the sampled oracle response
        auto cross = [&](double level) {
            for (std::size_t i = 1; i < y.size(); ++i)
                if (y[i] >= level) return dt * (i - 1) + dt * (level - y[i - 1]) / (y[i] - y[i - 1]);
            return -1.0;
        };
        CHECK(f.rise_time_ns() == doctest::Approx(cross(0.9) - cross(0.1)).epsilon(1e-4));
    }
}

TEST_CASE("impulse response normalization and energy") {
    ButterworthFilter f(25.0);
    CHECK(f.impulse(-1.0) == 0.0);
    CHECK(f.step(0.0) == doctest::Approx(0.0));
    CHECK(f.step(2000.0) == doctest::Approx(1.0).epsilon(1e-12));
    // trapezoid integral of h^2
    const double dt = 0.005;
    double e = 0;
    for (int i = 0; i < 60000; ++i) e += 0.5 * dt * (std::pow(f.impulse(dt * i), 2) + std::pow(f.impulse(dt * (i + 1)), 2));
    CHECK(f.energy(0.0, 300.0) == doctest::Approx(e).epsilon(1e-6));
    CHECK(f.energy(0.0, 40.0) < f.energy(0.0, 300.0));
    CHECK_THROWS_AS(ButterworthFilter(-1.0), DomainError);
}

TEST_CASE("discrete kernels") {
    ButterworthFilter f(20.0);
    const auto k = f.amplitude_kernel(0.5);
    CHECK(std::accumulate(k.begin(), k.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(k[0] == doctest::Approx(f.step(0.5)));
    const auto ki = f.intensity_kernel(0.5);
    CHECK(std::accumulate(ki.begin(), ki.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : ki) CHECK(v >= 0.0);
}

TEST_CASE("causal convolution") {
    const std::vector<double> kern = {0.5, 0.3, 0.2};
    std::vector<double> x(8, 0.0);
    x[2] = 1.0;
    const auto y = causal_filter(x, kern);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == doctest::Approx(0.5));
    CHECK(y[3] == doctest::Approx(0.3));
    CHECK(y[4] == doctest::Approx(0.2));
    CHECK(y[5] == doctest::Approx(0.0));
    const std::vector<double> ones(10, 1.0);
    CHECK(causal_filter(ones, kern).back() == doctest::Approx(1.0));
}

TEST_CASE("emission record filtering") {
    EmissionRecord rec;
    const double dt = 0.5;
    for (int i = 0; i < 400; ++i) {
        const double t = dt * i;
        rec.times.push_back(t);
        rec.amp.push_back(std::polar(std::exp(-0.02 * t), 0.3));
        rec.power.push_back(std::exp(-0.04 * t));
        rec.pop0.push_back(0.0);
        rec.pop1.push_back(0.0);
        rec.pop2.push_back(0.0);
    }
    const auto out = apply_detection_filter(rec, 25.0);
    ButterworthFilter f(25.0);
    const auto ya = causal_filter(rec.amp, f.amplitude_kernel(dt));
    const auto yp = causal_filter(rec.power, f.intensity_kernel(dt));
    for (std::size_t i = 0; i < rec.times.size(); i += 17) {
        CHECK(std::abs(out.amp[i] - ya[i]) < 1e-12);
        CHECK(out.power[i] == doctest::Approx(yp[i]));
    }
    // filtering delays and lowers the peak
    CHECK(std::abs(out.amp[0]) < std::abs(rec.amp[0]));
    EmissionRecord uneven = rec;
    uneven.times[3] += 0.1;
    CHECK_THROWS_AS(apply_detection_filter(uneven, 25.0), DomainError);
}
