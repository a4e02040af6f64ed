#include "qpsim/correlator.hpp"

#include <fftw3.h>

#include "fftw_lock.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>

#include "qpsim/detection_filter.hpp"
#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"

namespace qpsim::corr {

std::string to_string(Kernel k) { return k == Kernel::direct ? "direct" : "fft"; }

Kernel parse_kernel(const std::string& s) {
    if (s == "direct") return Kernel::direct;
    if (s == "fft") return Kernel::fft;
    throw ConfigError("unknown correlator kernel '" + s + "' (direct, fft)");
}

namespace {

// Explicit products so every caller rounds identically.
inline cplx conj_mul(const sample& a, const sample& b) {
    const double ar = a.real(), ai = a.imag(), br = b.real(), bi = b.imag();
    return {ar * br + ai * bi, ar * bi - ai * br};
}

inline cplx mul(const cplx& x, const cplx& y) {
    return {x.real() * y.real() - x.imag() * y.imag(), x.real() * y.imag() + x.imag() * y.real()};
}

void check_lags(std::size_t n, std::size_t tau_max) {
    if (!(2 * tau_max < n)) {
        throw RangeError("tau_max = " + std::to_string(tau_max) + " must be below record_len / 2 = " +
                         std::to_string(n / 2.0));
    }
}

} // namespace

void record_gamma1_direct(const sample* a, const sample* b, std::size_t n, std::size_t tau_max, cplx* out) {
    check_lags(n, tau_max);
    std::vector<cplx> terms(n);
    const long T = static_cast<long>(tau_max);
    for (long tau = -T; tau <= T; ++tau) {
        const std::size_t t0 = tau < 0 ? static_cast<std::size_t>(-tau) : 0;
        const std::size_t t1 = tau < 0 ? n : n - static_cast<std::size_t>(tau);
        std::size_t k = 0;
        for (std::size_t t = t0; t < t1; ++t) terms[k++] = conj_mul(a[t], b[static_cast<std::size_t>(static_cast<long>(t) + tau)]);
        out[tau + T] = reduce::pairwise_sum(terms.data(), k);
    }
}

void record_gamma2_direct(const sample* a, const sample* b, std::size_t n, std::size_t tau_max, cplx* out) {
    check_lags(n, tau_max);
    std::vector<cplx> x(n), terms(n);
    for (std::size_t t = 0; t < n; ++t) x[t] = conj_mul(a[t], b[t]);
    const long T = static_cast<long>(tau_max);
    for (long tau = 0; tau <= T; ++tau) {
        const std::size_t m = n - static_cast<std::size_t>(tau);
        for (std::size_t t = 0; t < m; ++t) terms[t] = mul(x[t], x[t + static_cast<std::size_t>(tau)]);
        const cplx s = reduce::pairwise_sum(terms.data(), m);
        out[T + tau] = s;
        out[T - tau] = s;
    }
}

std::size_t good_fft_size(std::size_t n) {
    for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
        std::size_t r = m;
        for (std::size_t p : {2, 3, 5, 7})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}

namespace {
std::mutex& planner_mutex() { return detail::fftw_planner_mutex(); }
} // namespace

struct FftWorkspace::Impl {
    fftw_complex* fa{nullptr};
    fftw_complex* fb{nullptr};
    fftw_complex* fx{nullptr};
    fftw_plan fwd{nullptr};
    fftw_plan bwd{nullptr};
};

FftWorkspace::FftWorkspace(std::size_t n, std::size_t tau_max)
    : n_(n), tau_max_(tau_max), m_(good_fft_size(n + tau_max)), impl_(std::make_unique<Impl>()) {
    check_lags(n, tau_max);
    const auto bytes = sizeof(fftw_complex) * m_;
    impl_->fa = static_cast<fftw_complex*>(fftw_malloc(bytes));
    impl_->fb = static_cast<fftw_complex*>(fftw_malloc(bytes));
    impl_->fx = static_cast<fftw_complex*>(fftw_malloc(bytes));
    if (!impl_->fa || !impl_->fb || !impl_->fx) throw std::bad_alloc();
    std::lock_guard lock(planner_mutex());
    const int m = static_cast<int>(m_);
    impl_->fwd = fftw_plan_dft_1d(m, impl_->fa, impl_->fa, FFTW_FORWARD, FFTW_ESTIMATE);
    impl_->bwd = fftw_plan_dft_1d(m, impl_->fa, impl_->fa, FFTW_BACKWARD, FFTW_ESTIMATE);
}

FftWorkspace::~FftWorkspace() {
    std::lock_guard lock(planner_mutex());
    if (impl_->fwd) fftw_destroy_plan(impl_->fwd);
    if (impl_->bwd) fftw_destroy_plan(impl_->bwd);
    fftw_free(impl_->fa);
    fftw_free(impl_->fb);
    fftw_free(impl_->fx);
}

void FftWorkspace::run(const sample* a, const sample* b, cplx* g1, cplx* g2) {
    auto* fa = impl_->fa;
    auto* fb = impl_->fb;
    auto* fx = impl_->fx;
    for (std::size_t t = 0; t < n_; ++t) {
        fa[t][0] = a[t].real();
        fa[t][1] = a[t].imag();
        fb[t][0] = b[t].real();
        fb[t][1] = b[t].imag();
        const cplx x = conj_mul(a[t], b[t]);
        fx[t][0] = x.real();
        fx[t][1] = x.imag();
    }
    for (std::size_t t = n_; t < m_; ++t) {
        fa[t][0] = fa[t][1] = fb[t][0] = fb[t][1] = fx[t][0] = fx[t][1] = 0.0;
    }
    fftw_execute_dft(impl_->fwd, fa, fa);
    fftw_execute_dft(impl_->fwd, fb, fb);
    fftw_execute_dft(impl_->fwd, fx, fx);
    // Gamma1: conj(FA) FB. Gamma2: FX[k] FX[-k]. Written in place.
    for (std::size_t k = 0; k < m_; ++k) {
        const double ar = fa[k][0], ai = fa[k][1];
        fa[k][0] = ar * fb[k][0] + ai * fb[k][1];
        fa[k][1] = ar * fb[k][1] - ai * fb[k][0];
    }
    for (std::size_t k = 0; k <= m_ / 2; ++k) {
        const std::size_t nk = (m_ - k) % m_;
        const cplx p = mul(cplx(fx[k][0], fx[k][1]), cplx(fx[nk][0], fx[nk][1]));
        fb[k][0] = fb[nk][0] = p.real();
        fb[k][1] = fb[nk][1] = p.imag();
    }
    fftw_execute_dft(impl_->bwd, fa, fa);
    fftw_execute_dft(impl_->bwd, fb, fb);
    const double inv = 1.0 / static_cast<double>(m_);
    const long T = static_cast<long>(tau_max_);
    for (long tau = -T; tau <= T; ++tau) {
        const std::size_t k = static_cast<std::size_t>((tau + static_cast<long>(m_)) % static_cast<long>(m_));
        g1[tau + T] = cplx(fa[k][0] * inv, fa[k][1] * inv);
        g2[tau + T] = cplx(fb[k][0] * inv, fb[k][1] * inv);
    }
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kStateMagic = 0x54534351; // "QCST"

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("truncated correlator checkpoint");
    return v;
}

} // namespace

void CorrelatorState::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IOError("cannot write checkpoint '" + tmp + "'");
        put(os, kStateMagic);
        put(os, static_cast<std::uint64_t>(tau_max));
        put(os, static_cast<std::uint64_t>(record_len));
        put(os, static_cast<std::uint8_t>(kernel == Kernel::direct ? 0 : 1));
        put(os, bandwidth_mhz);
        signal.save(os);
        background.save(os);
        if (!os) throw IOError("checkpoint write failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IOError("cannot move checkpoint into '" + path + "'");
}

CorrelatorState CorrelatorState::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IOError("cannot open checkpoint '" + path + "'");
    if (get<std::uint32_t>(is) != kStateMagic) throw FormatError("'" + path + "' is not a correlator checkpoint");
    CorrelatorState s;
    s.tau_max = static_cast<std::size_t>(get<std::uint64_t>(is));
    s.record_len = static_cast<std::size_t>(get<std::uint64_t>(is));
    s.kernel = get<std::uint8_t>(is) == 0 ? Kernel::direct : Kernel::fft;
    s.bandwidth_mhz = get<double>(is);
    s.signal = reduce::CascadeAccumulator::load(is);
    s.background = reduce::CascadeAccumulator::load(is);
    if (s.signal.count() != s.background.count()) throw FormatError("checkpoint accumulators disagree");
    return s;
}

namespace {

CorrEstimate finish(const CorrelatorState& st, double dt_ns) {
    CorrEstimate e;
    e.tau_max = st.tau_max;
    e.dt_ns = dt_ns;
    const std::size_t w = 2 * st.tau_max + 1;
    const long T = static_cast<long>(st.tau_max);
    for (long tau = -T; tau <= T; ++tau) {
        e.tau_samples.push_back(tau);
        e.tau_ns.push_back(static_cast<double>(tau) * dt_ns);
    }
    e.n_averages = st.signal.count();
    if (e.n_averages == 0) throw RangeError("no records were correlated");
    const double inv = 1.0 / static_cast<double>(e.n_averages);
    const auto sig = st.signal.total();
    const auto bg = st.background.total();
    e.gamma1.resize(w);
    e.gamma1_bg.resize(w);
    e.gamma2.resize(w);
    e.gamma2_bg.resize(w);
    for (std::size_t i = 0; i < w; ++i) {
        e.gamma1[i] = sig[i] * inv;
        e.gamma2[i] = sig[w + i].real() * inv;
        e.gamma1_bg[i] = bg[i] * inv;
        e.gamma2_bg[i] = bg[w + i].real() * inv;
    }
    e.has_background = true;
    return e;
}

} // namespace

CorrEstimate correlate(chain::RecordSource& src, const CorrelatorOptions& opts, RunStats* stats) {
    const std::size_t n = src.record_len();
    check_lags(n, opts.tau_max);
    const std::size_t w = 2 * opts.tau_max + 1;
    const unsigned workers = std::max(1u, opts.workers);
    const std::size_t block = opts.block_records > 0 ? opts.block_records : 64 * static_cast<std::size_t>(workers);

    CorrelatorState st;
    if (!opts.resume_path.empty()) {
        st = CorrelatorState::load(opts.resume_path);
        if (st.tau_max != opts.tau_max || st.record_len != n || st.kernel != opts.kernel ||
            st.bandwidth_mhz != opts.bandwidth_mhz) {
            throw ConfigError("checkpoint was made with different tau_max, record length, kernel or bandwidth");
        }
        if (st.next_record() > src.n_records()) throw ConfigError("checkpoint is ahead of the input");
    } else {
        st.tau_max = opts.tau_max;
        st.record_len = n;
        st.kernel = opts.kernel;
        st.bandwidth_mhz = opts.bandwidth_mhz;
        st.signal = reduce::CascadeAccumulator(2 * w);
        st.background = reduce::CascadeAccumulator(2 * w);
    }

    std::vector<std::unique_ptr<FftWorkspace>> ws(workers);
    if (opts.kernel == Kernel::fft) {
        for (auto& p : ws) p = std::make_unique<FftWorkspace>(n, opts.tau_max);
    }

    // Optional baseband filtering: demodulation phasors and kernel.
    const bool filtering = opts.bandwidth_mhz > 0.0;
    std::vector<cplx> demod;
    std::vector<double> kern;
    if (filtering) {
        const auto& cfg = src.config();
        kern = engine::ButterworthFilter(opts.bandwidth_mhz).amplitude_kernel(cfg.dt_ns());
        demod.resize(n);
        for (std::size_t t = 0; t < n; ++t) {
            demod[t] = std::polar(1.0, -units::two_pi * cfg.f_if_mhz * static_cast<double>(t) * cfg.dt_ns() * 1e-3);
        }
    }
    std::vector<std::vector<sample>> scratch(workers, std::vector<sample>(filtering ? 4 * n : 0));
    auto prefilter = [&](const sample* in, sample* out) {
        for (std::size_t t = 0; t < n; ++t) {
            cplx s = 0.0;
            const std::size_t mmax = std::min(kern.size(), t + 1);
            for (std::size_t m = 0; m < mmax; ++m) {
                const sample& x = in[t - m];
                s += kern[m] * mul(cplx(x.real(), x.imag()), demod[t - m]);
            }
            out[t] = sample(static_cast<float>(s.real()), static_cast<float>(s.imag()));
        }
    };

    const auto start = std::chrono::steady_clock::now();
    std::size_t next = static_cast<std::size_t>(st.next_record());
    std::size_t end = src.n_records();
    if (opts.stop_after > 0) end = std::min(end, next + opts.stop_after);
    std::size_t since_ckpt = 0;
    chain::RecordBlock blk;
    std::vector<std::vector<cplx>> sig_out(block), bg_out(block);
    const std::size_t first_record = next;

    while (next < end) {
        const std::size_t count = std::min(block, end - next);
        src.fetch(next, count, blk);
        auto work = [&](unsigned wid) {
            for (std::size_t i = wid; i < count; i += workers) {
                auto& so = sig_out[i];
                auto& bo = bg_out[i];
                so.assign(2 * w, cplx{});
                bo.assign(2 * w, cplx{});
                const sample* sa = blk.record(blk.sig_a, i);
                const sample* sb = blk.record(blk.sig_b, i);
                const sample* ba = blk.record(blk.bg_a, i);
                const sample* bb = blk.record(blk.bg_b, i);
                if (filtering) {
                    sample* f = scratch[wid].data();
                    prefilter(sa, f);
                    prefilter(sb, f + n);
                    prefilter(ba, f + 2 * n);
                    prefilter(bb, f + 3 * n);
                    sa = f;
                    sb = f + n;
                    ba = f + 2 * n;
                    bb = f + 3 * n;
                }
                if (opts.kernel == Kernel::direct) {
                    record_gamma1_direct(sa, sb, n, opts.tau_max, so.data());
                    record_gamma2_direct(sa, sb, n, opts.tau_max, so.data() + w);
                    record_gamma1_direct(ba, bb, n, opts.tau_max, bo.data());
                    record_gamma2_direct(ba, bb, n, opts.tau_max, bo.data() + w);
                } else {
                    ws[wid]->run(sa, sb, so.data(), so.data() + w);
                    ws[wid]->run(ba, bb, bo.data(), bo.data() + w);
                }
            }
        };
        if (workers == 1) {
            work(0);
        } else {
            std::vector<std::jthread> pool;
            for (unsigned k = 0; k < workers; ++k) pool.emplace_back(work, k);
        }
        for (std::size_t i = 0; i < count; ++i) {
            st.signal.push(std::move(sig_out[i]));
            st.background.push(std::move(bg_out[i]));
        }
        next += count;
        since_ckpt += count;
        if (!opts.checkpoint_path.empty() && opts.checkpoint_every > 0 && since_ckpt >= opts.checkpoint_every) {
            st.save(opts.checkpoint_path);
            since_ckpt = 0;
        }
    }
    if (!opts.checkpoint_path.empty()) st.save(opts.checkpoint_path);

    if (stats) {
        stats->records = next - first_record;
        stats->wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        stats->bytes = static_cast<double>(stats->records) * 4.0 * static_cast<double>(n) * sizeof(sample);
    }
    return finish(st, src.config().dt_ns());
}

CorrEstimate correlate(const chain::IQTraceBatch& batch, const CorrelatorOptions& opts, RunStats* stats) {
    chain::BatchSource src(batch);
    return correlate(src, opts, stats);
}

CorrEstimate gamma1(const chain::IQTraceBatch& batch, std::size_t tau_max, Kernel k) {
    CorrelatorOptions o;
    o.tau_max = tau_max;
    o.kernel = k;
    return correlate(batch, o);
}

CorrEstimate gamma2(const chain::IQTraceBatch& batch, std::size_t tau_max, Kernel k) {
    return gamma1(batch, tau_max, k);
}

CorrEstimate subtract_background(const CorrEstimate& est) {
    if (!est.has_background || est.gamma1_bg.size() != est.gamma1.size()) {
        throw MissingBackground("estimate carries no background records");
    }
    CorrEstimate out = est;
    for (std::size_t i = 0; i < out.gamma1.size(); ++i) {
        out.gamma1[i] -= est.gamma1_bg[i];
        out.gamma2[i] -= est.gamma2_bg[i];
    }
    out.background_subtracted = true;
    out.normalized = false;
    return out;
}

CorrEstimate normalize_g2(const CorrEstimate& est, const engine::PulseTrain& train, const NormalizeOptions& opts) {
    train.validate();
    if (!(est.dt_ns > 0.0)) throw DomainError("estimate has no sample spacing");
    const double p_exact = train.period_ns / est.dt_ns;
    const long P = std::lround(p_exact);
    if (P <= 0 || std::abs(p_exact - static_cast<double>(P)) > 1e-6 * std::max(1.0, p_exact)) {
        throw DomainError("pulse period is not a whole number of samples");
    }
    const long hw = opts.half_width >= 0 ? opts.half_width : P / 4;
    if (hw >= P) throw DomainError("normalization window wider than the period");
    const long T = static_cast<long>(est.tau_max);

    auto area = [&](long c) {
        std::vector<double> v;
        for (long t = c - hw; t <= c + hw; ++t) v.push_back(est.gamma2[est.index(t)]);
        return reduce::pairwise_sum(v);
    };

    CorrEstimate out = est;
    out.side_orders.clear();
    std::vector<double> corrected;
    for (long k = -(train.count - 1); k <= train.count - 1; ++k) {
        if (k == 0) continue;
        if (opts.max_order > 0 && std::abs(k) > opts.max_order) continue;
        const long c = k * P;
        if (std::abs(c) + hw > T) continue;
        const double overlap = static_cast<double>(train.count) / static_cast<double>(train.count - std::abs(k));
        corrected.push_back(area(c) * overlap);
        out.side_orders.push_back(k);
    }
    if (corrected.size() < 2) {
        throw InsufficientPeaks("need >= 2 side peaks inside tau_max = " + std::to_string(T) + " samples, found " +
                                std::to_string(corrected.size()));
    }
    const double mean = reduce::pairwise_sum(corrected) / static_cast<double>(corrected.size());
    if (!(std::abs(mean) > 0.0)) throw DegenerateData("side peaks integrate to zero");

    out.side_area_mean = mean;
    out.center_area = area(0);
    out.center_ratio = out.center_area / mean;
    out.side_ratios.clear();
    for (double c : corrected) out.side_ratios.push_back(c / mean);
    out.window_half_width = hw;

    // Trace normalization by the mean corrected side-peak height.
    std::vector<double> heights;
    for (long k : out.side_orders) {
        const double overlap = static_cast<double>(train.count) / static_cast<double>(train.count - std::abs(k));
        heights.push_back(est.gamma2[est.index(k * P)] * overlap);
    }
    const double hmean = reduce::pairwise_sum(heights) / static_cast<double>(heights.size());
    out.g2_normalized.resize(est.gamma2.size());
    for (std::size_t i = 0; i < est.gamma2.size(); ++i) out.g2_normalized[i] = est.gamma2[i] / hmean;
    out.normalized = true;
    return out;
}

} // namespace qpsim::corr
