#include "qpsim/detection_filter.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include <fftw3.h>

#include "fftw_lock.hpp"
#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"

namespace qpsim::detail {
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace qpsim::detail

namespace qpsim::engine {

using cplx = std::complex<double>;

ButterworthFilter::ButterworthFilter(double bandwidth_mhz) : bandwidth_mhz_(bandwidth_mhz) {
    if (!(bandwidth_mhz > 0.0) || !std::isfinite(bandwidth_mhz)) {
        throw DomainError("detection bandwidth must be positive and finite");
    }
    const double wc = units::mhz_to_rad_per_ns(bandwidth_mhz);
    for (int k = 0; k < kOrder; ++k) {
        const double ang = units::pi * (2.0 * k + kOrder + 1) / (2.0 * kOrder);
        poles_[k] = wc * cplx(std::cos(ang), std::sin(ang));
    }
    // H(s) = wc^n / prod(s - p_k); h(t) = sum_k r_k exp(p_k t).
    for (int k = 0; k < kOrder; ++k) {
        cplx den = 1.0;
        for (int j = 0; j < kOrder; ++j) {
            if (j != k) den *= poles_[k] - poles_[j];
        }
        residues_[k] = std::pow(wc, kOrder) / den;
    }
    h2_total_ = 0.0;
    for (int j = 0; j < kOrder; ++j)
        for (int k = 0; k < kOrder; ++k) h2_total_ += (-residues_[j] * residues_[k] / (poles_[j] + poles_[k])).real();
}

double ButterworthFilter::impulse(double t) const {
    if (t < 0.0) return 0.0;
    cplx s = 0.0;
    for (int k = 0; k < kOrder; ++k) s += residues_[k] * std::exp(poles_[k] * t);
    return s.real();
}

double ButterworthFilter::step(double t) const {
    if (t <= 0.0) return 0.0;
    cplx s = 0.0;
    for (int k = 0; k < kOrder; ++k) s += residues_[k] / poles_[k] * (std::exp(poles_[k] * t) - 1.0);
    return s.real();
}

double ButterworthFilter::energy(double a, double b) const {
    a = std::max(a, 0.0);
    if (!(b > a)) return 0.0;
    cplx s = 0.0;
    for (int j = 0; j < kOrder; ++j) {
        for (int k = 0; k < kOrder; ++k) {
            const cplx p = poles_[j] + poles_[k];
            s += residues_[j] * residues_[k] * (std::exp(p * b) - std::exp(p * a)) / p;
        }
    }
    return s.real();
}

namespace {

double first_crossing(const ButterworthFilter& f, double level) {
    // Step response is monotone up to its first overshoot, well past 0.9.
    double lo = 0.0;
    double hi = 1.0 / f.bandwidth_mhz() * 1e3;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f.step(mid) < level ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

double ButterworthFilter::rise_time_ns() const {
    return first_crossing(*this, 0.9) - first_crossing(*this, 0.1);
}

std::vector<double> ButterworthFilter::amplitude_kernel(double dt, double tail_tol) const {
    if (!(dt > 0.0)) throw DomainError("kernel needs dt > 0");
    const double tau = 1.0 / units::mhz_to_rad_per_ns(bandwidth_mhz_);
    std::vector<double> k;
    for (std::size_t m = 0;; ++m) {
        const double a = static_cast<double>(m) * dt;
        k.push_back(step(a + dt) - step(a));
        // Envelope of |1 - s(t)| decays at the slowest pole rate.
        if (a > 4.0 * tau && std::abs(1.0 - step(a + dt)) < tail_tol && std::abs(impulse(a + dt)) * tau < tail_tol) break;
    }
    return k;
}

std::vector<double> ButterworthFilter::intensity_kernel(double dt, double tail_tol) const {
    if (!(dt > 0.0)) throw DomainError("kernel needs dt > 0");
    const double tau = 1.0 / units::mhz_to_rad_per_ns(bandwidth_mhz_);
    std::vector<double> k;
    double acc = 0.0;
    for (std::size_t m = 0;; ++m) {
        const double a = static_cast<double>(m) * dt;
        const double e = energy(a, a + dt) / h2_total_;
        k.push_back(e);
        acc += e;
        if (a > 4.0 * tau && std::abs(1.0 - acc) < tail_tol) break;
        if (m > 100000000) break;
    }
    return k;
}

template <typename T>
std::vector<T> causal_filter(const std::vector<T>& x, const std::vector<double>& kernel) {
    std::vector<T> y(x.size(), T{});
    for (std::size_t i = 0; i < x.size(); ++i) {
        T s{};
        const std::size_t mmax = std::min(kernel.size(), i + 1);
        for (std::size_t m = 0; m < mmax; ++m) s += kernel[m] * x[i - m];
        y[i] = s;
    }
    return y;
}

template std::vector<double> causal_filter(const std::vector<double>&, const std::vector<double>&);
template std::vector<cplx> causal_filter(const std::vector<cplx>&, const std::vector<double>&);

namespace {

double uniform_step(const std::vector<double>& t) {
    if (t.size() < 2) throw DomainError("filtering needs at least two samples");
    const double dt = t[1] - t[0];
    for (std::size_t i = 2; i < t.size(); ++i) {
        if (std::abs((t[i] - t[i - 1]) - dt) > 1e-9 * std::max(1.0, std::abs(t[i]))) {
            throw DomainError("filtering needs a uniform time grid");
        }
    }
    return dt;
}

// Causal convolution of every row along its second index, by zero-padded
// FFT. Only outputs b < cols are kept, so the kernel is cut at cols taps.
template <typename M>
M filter_rows(const M& in, const std::vector<double>& k) {
    const auto cols = static_cast<std::size_t>(in.cols());
    const std::size_t taps = std::min(k.size(), cols);
    std::size_t n = 1;
    while (n < cols + taps) n <<= 1;
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    auto* ker = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    fftw_plan fwd, bwd;
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fwd = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    for (std::size_t i = 0; i < n; ++i) {
        buf[i][0] = i < taps ? k[i] : 0.0;
        buf[i][1] = 0.0;
    }
    fftw_execute(fwd);
    for (std::size_t i = 0; i < n; ++i) {
        ker[i][0] = buf[i][0] / static_cast<double>(n);
        ker[i][1] = buf[i][1] / static_cast<double>(n);
    }
    M out(in.rows(), in.cols());
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            const cplx v = i < cols ? cplx(in(r, static_cast<Eigen::Index>(i))) : cplx{};
            buf[i][0] = v.real();
            buf[i][1] = v.imag();
        }
        fftw_execute(fwd);
        for (std::size_t i = 0; i < n; ++i) {
            const cplx v = cplx(buf[i][0], buf[i][1]) * cplx(ker[i][0], ker[i][1]);
            buf[i][0] = v.real();
            buf[i][1] = v.imag();
        }
        fftw_execute(bwd);
        for (std::size_t b = 0; b < cols; ++b) {
            if constexpr (std::is_same_v<typename M::Scalar, double>) {
                out(r, static_cast<Eigen::Index>(b)) = buf[b][0];
            } else {
                out(r, static_cast<Eigen::Index>(b)) = cplx(buf[b][0], buf[b][1]);
            }
        }
    }
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(bwd);
    }
    fftw_free(buf);
    fftw_free(ker);
    return out;
}

// Same along the first index.
template <typename M>
M filter_cols(const M& in, const std::vector<double>& k) {
    const M t = in.transpose();
    return filter_rows(t, k).transpose();
}

} // namespace

EmissionRecord apply_detection_filter(const EmissionRecord& rec, double bandwidth_mhz) {
    const ButterworthFilter f(bandwidth_mhz);
    const double dt = uniform_step(rec.times);
    EmissionRecord out = rec;
    out.amp = causal_filter(rec.amp, f.amplitude_kernel(dt));
    out.power = causal_filter(rec.power, f.intensity_kernel(dt));
    return out;
}

TwoTimeGrid apply_detection_filter(const TwoTimeGrid& grid, double bandwidth_mhz) {
    const auto& spec = grid.spec;
    if (spec.tau_stride != 1) throw DomainError("two-time filtering needs tau_stride == 1");
    const ButterworthFilter f(bandwidth_mhz);
    const auto ka = f.amplitude_kernel(spec.dt);
    const auto ki = f.intensity_kernel(spec.dt);

    const auto nt = static_cast<Eigen::Index>(spec.n_t);
    const auto ntau = static_cast<Eigen::Index>(spec.n_tau);
    const Eigen::Index nb = nt + ntau - 1;

    // Square layout F(a, b) = G(t_a, t_b) for a < n_t and any lattice b, using
    // G1(a, b) = conj G1(b, a) and G2(a, b) = G2(b, a) for b < a.
    Eigen::MatrixXcd f1 = Eigen::MatrixXcd::Zero(nt, nb);
    Eigen::MatrixXd f2 = Eigen::MatrixXd::Zero(nt, nb);
    for (Eigen::Index a = 0; a < nt; ++a) {
        for (Eigen::Index b = 0; b < nb; ++b) {
            if (b >= a) {
                if (b - a < ntau) {
                    f1(a, b) = grid.g1(a, b - a);
                    f2(a, b) = grid.g2(a, b - a);
                }
            } else if (a - b < ntau) {
                f1(a, b) = std::conj(grid.g1(b, a - b));
                f2(a, b) = grid.g2(b, a - b);
            }
        }
    }
    const Eigen::MatrixXcd h1 = filter_cols(filter_rows(f1, ka), ka);
    const Eigen::MatrixXd h2 = filter_cols(filter_rows(f2, ki), ki);

    TwoTimeGrid out = grid;
    for (Eigen::Index a = 0; a < nt; ++a) {
        for (Eigen::Index j = 0; j < ntau; ++j) {
            out.g1(a, j) = h1(a, a + j);
            out.g2(a, j) = h2(a, a + j);
        }
    }
    out.power = causal_filter(grid.power, ki);
    return out;
}

} // namespace qpsim::engine
