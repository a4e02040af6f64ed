#include "qpsim/workflows.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "qpsim/detection_filter.hpp"
#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"

namespace qpsim::flow {

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& f) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::exception_ptr> errs(workers);
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += workers) f(i);
                } catch (...) {
                    errs[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

std::pair<double, double> scale_fit(const std::vector<double>& model, const std::vector<double>& y) {
    if (model.size() != y.size() || y.size() < 2) throw DomainError("scale_fit needs matching vectors of >= 2 points");
    double mm = 0, my = 0, mean = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        mm += model[i] * model[i];
        my += model[i] * y[i];
        mean += y[i];
    }
    if (mm == 0.0) throw DegenerateData("model identically zero");
    mean /= static_cast<double>(y.size());
    const double c = my / mm;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += std::pow(y[i] - c * model[i], 2);
        ss_tot += std::pow(y[i] - mean, 2);
    }
    if (ss_tot == 0.0) throw DegenerateData("constant data");
    return {c, 1.0 - ss_res / ss_tot};
}

// ---------------------------------------------------------------------------

engine::EmissionRecord rabi_trace(const config::RunConfig& c, double theta, double t_end_ns, double dt_ns,
                                  double bandwidth_mhz, engine::Trajectory* traj) {
    const engine::Pulse p = engine::pulse_for_theta(c.pulse, theta);
    const auto grid = engine::uniform_grid(0.0, t_end_ns, dt_ns);
    engine::Trajectory tr = engine::evolve(c.qubit, c.rates, p, engine::ground_state(), grid);
    auto rec = engine::emission_observables(tr, c.rates, p.window_end());
    if (traj) *traj = std::move(tr);
    if (bandwidth_mhz > 0.0) rec = engine::apply_detection_filter(rec, bandwidth_mhz);
    return rec;
}

namespace {
// Index of the largest value at or after time t_from.
std::size_t argmax_after(const std::vector<double>& t, const std::vector<double>& v, double t_from) {
    std::size_t k = 0;
    while (k + 1 < t.size() && t[k] < t_from - 1e-9) ++k;
    return static_cast<std::size_t>(std::max_element(v.begin() + static_cast<long>(k), v.end()) - v.begin());
}
std::vector<double> abs_of(const std::vector<cplx>& v) {
    std::vector<double> a(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) a[i] = std::abs(v[i]);
    return a;
}
} // namespace

RabiSweep rabi_sweep(const config::RunConfig& c, const std::vector<double>& thetas, double bandwidth_mhz,
                     double t_end_ns, double dt_ns) {
    RabiSweep s;
    s.thetas = thetas;
    s.bandwidth_mhz = bandwidth_mhz;
    s.records.resize(thetas.size());
    std::vector<engine::Trajectory> trajs(thetas.size());
    parallel_for(thetas.size(), c.workers, [&](std::size_t i) {
        s.records[i] = rabi_trace(c, thetas[i], t_end_ns, dt_ns, bandwidth_mhz, &trajs[i]);
    });
    s.min_eigenvalue = 1.0;
    for (const auto& tr : trajs) {
        s.max_convergence_error = std::max(s.max_convergence_error, tr.convergence_error);
        for (const auto& rho : tr.rho) {
            const auto d = engine::check_density(rho);
            s.min_eigenvalue = std::min(s.min_eigenvalue, d.min_eigenvalue);
            s.max_trace_error = std::max(s.max_trace_error, d.trace_error);
        }
    }

    const auto ref_amp = rabi_trace(c, units::pi / 2, t_end_ns, dt_ns, bandwidth_mhz);
    const auto ref_pow = rabi_trace(c, units::pi, t_end_ns, dt_ns, bandwidth_mhz);
    s.phase = engine::reference_phase(ref_amp);
    const std::size_t ia = argmax_after(ref_amp.times, abs_of(ref_amp.amp), ref_amp.drive_end_ns);
    const std::size_t ip = argmax_after(ref_pow.times, ref_pow.power, ref_pow.drive_end_ns);
    s.t_m_amp = ref_amp.times[ia];
    s.t_m_power = ref_pow.times[ip];
    for (auto& r : s.records) {
        engine::rotate_phase(r, s.phase);
        s.amp_at_tm.push_back(r.amp[ia]);
        s.power_at_tm.push_back(r.power[ip]);
        const auto a = abs_of(r.amp);
        s.amp_max.push_back(*std::max_element(a.begin(), a.end()));
        s.power_max.push_back(*std::max_element(r.power.begin(), r.power.end()));
    }
    return s;
}

// ---------------------------------------------------------------------------

double photons_per_us(double watt, double carrier_ghz) {
    const double e = units::planck * carrier_ghz * 1e9;
    return watt / e * 1e-6;
}

double omega2_per_watt(const device::Rates& r, double carrier_ghz) {
    return 4.0 * r.gamma1_e * photons_per_us(1.0, carrier_ghz);
}

double omega2_per_watt_from_flux(const device::Rates& r, double photons_per_us_at, double watt_at) {
    if (!(photons_per_us_at > 0.0) || !(watt_at > 0.0)) throw DomainError("flux anchor must be positive");
    return 4.0 * r.gamma1_e * photons_per_us_at / watt_at;
}

std::vector<double> sweep_powers_dbm() {
    std::vector<double> p;
    for (int d = -146; d <= -116; d += 2) p.push_back(d);
    return p;
}

std::vector<double> detuning_grid(const device::Rates& r, double span_gamma2, std::size_t n) {
    const double g2 = r.gamma2();
    return linspace(-span_gamma2 * g2, span_gamma2 * g2, n);
}

// ---------------------------------------------------------------------------

EngineCorrelation engine_correlation(const config::RunConfig& c, double theta, double bandwidth_mhz, double dt_ns,
                                     double window_ns) {
    engine::PulseTrain tr = c.train;
    tr.pulse = engine::pulse_for_theta(c.pulse, theta);
    tr.count = 2;
    const double steps = tr.period_ns / dt_ns;
    if (std::abs(steps - std::round(steps)) > 1e-9) throw DomainError("pulse period is not a multiple of the grid step");
    const auto P = static_cast<std::size_t>(std::llround(steps));
    const auto W = static_cast<std::size_t>(std::llround(window_ns / dt_ns));
    if (W >= P) throw DomainError("emission window must be shorter than the pulse period");

    engine::TwoTimeSpec spec;
    spec.t0 = 0.0;
    spec.dt = dt_ns;
    spec.n_t = W;
    spec.tau_stride = 1;
    spec.n_tau = P + W;
    engine::LindbladModel model(c.qubit, c.rates, engine::Drive::from_train(tr));

    EngineCorrelation out;
    out.grid = engine::two_time_correlations(model, engine::ground_state(), spec);
    if (bandwidth_mhz > 0.0) out.grid = engine::apply_detection_filter(out.grid, bandwidth_mhz);
    out.g1 = engine::integrate_g1(out.grid);
    out.g2 = engine::integrate_g2(out.grid);
    for (std::size_t j = 0; j < spec.n_tau; ++j) out.tau_ns.push_back(spec.tau(j));
    out.period_index = P;
    out.g1_center = out.g1[0].real();
    out.g1_side = out.g1[P].real();
    out.g2_center = out.g2[0];
    out.g2_side = out.g2[P];
    if (out.g2_side <= 0.0) throw DegenerateData("no side-peak coincidences");
    out.g2_ratio = out.g2_center / out.g2_side;
    return out;
}

// ---------------------------------------------------------------------------

SubrangeSource::SubrangeSource(chain::RecordSource& inner, std::size_t first, std::size_t count)
    : inner_(inner), first_(first), count_(count) {
    if (first + count > inner.n_records()) throw RangeError("record subrange past end of source");
}

void SubrangeSource::fetch(std::size_t first, std::size_t count, chain::RecordBlock& out) {
    if (first + count > count_) throw RangeError("record range past end of subrange");
    inner_.fetch(first_ + first, count, out);
    out.first = first;
}

RatioStats synthetic_ratio(const chain::ChainConfig& cfg, const chain::SourceSpec& src, const engine::PulseTrain& train,
                           std::size_t n_records, std::size_t groups, std::uint64_t seed,
                           const corr::CorrelatorOptions& opts, const corr::NormalizeOptions& norm) {
    if (groups < 2 || n_records < groups) throw DomainError("need >= 2 groups with >= 1 record each");
    chain::SynthOptions so;
    so.workers = opts.workers;
    chain::Synthesizer syn(cfg, src, train, n_records, seed, so);
    RatioStats st;
    const std::size_t per = n_records / groups;
    for (std::size_t g = 0; g < groups; ++g) {
        SubrangeSource sub(syn, g * per, per);
        auto est = corr::normalize_g2(corr::subtract_background(corr::correlate(sub, opts)), train, norm);
        st.groups.push_back(est.center_ratio);
        st.records += per;
    }
    double m = 0;
    for (double r : st.groups) m += r;
    m /= static_cast<double>(groups);
    double v = 0;
    for (double r : st.groups) v += (r - m) * (r - m);
    v /= static_cast<double>(groups - 1);
    st.mean = m;
    st.sem = std::sqrt(v / static_cast<double>(groups));
    return st;
}

corr::CorrEstimate mean_field_expectation(const chain::ChainConfig& cfg, const chain::SourceSpec& src,
                                          const engine::PulseTrain& train, const corr::CorrelatorOptions& opts,
                                          const corr::NormalizeOptions& norm) {
    if (src.kind == chain::SourceKind::thermal) throw DomainError("a thermal source has no deterministic mean field");
    chain::Synthesizer syn(cfg, src, train, 1, 0);
    const auto& u = syn.unit_field();
    const std::size_t L = cfg.record_len;
    chain::IQTraceBatch b;
    b.cfg = cfg;
    b.records.resize(0, 1, L);
    const double dt = cfg.dt_ns();
    const cplx amp = std::polar(std::sqrt(src.mean_photon), src.phase) * cfg.gain / std::sqrt(2.0);
    for (std::size_t n = 0; n < L; ++n) {
        const double t_us = static_cast<double>(n) * dt * 1e-3;
        const cplx v = amp * u[n] * std::polar(1.0, units::two_pi * cfg.f_if_mhz * t_us);
        const chain::sample s(static_cast<float>(v.real()), static_cast<float>(v.imag()));
        b.records.sig_a[n] = s;
        b.records.sig_b[n] = s;
        b.records.bg_a[n] = b.records.bg_b[n] = chain::sample{};
    }
    return corr::normalize_g2(corr::subtract_background(corr::correlate(b, opts)), train, norm);
}

// ---------------------------------------------------------------------------

io::Table flux_scan(const config::RunConfig& c, double flux_min, double flux_max, std::size_t n) {
    if (n < 2) throw DomainError("flux scan needs >= 2 points");
    io::Table t;
    t.columns = {"flux", "omega01_ghz", "omega12_ghz", "anharmonicity_ghz", "de01_dphi_ghz",
                 "gamma_phi_mhz", "eta_prime_limit", "gamma_eqv_limit_mhz"};
    const double g1 = c.rates.gamma1();
    for (double f : linspace(flux_min, flux_max, n)) {
        device::QubitParams q = c.qubit;
        q.flux = f;
        const auto tf = device::transition_frequencies(q);
        const double slope = device::flux_sensitivity(q);
        const double gphi = device::pure_dephasing_1f(c.noise, slope);
        device::Rates r;
        r.gamma1_e = g1;
        r.gamma_phi = gphi;
        const double eta_p = r.eta_prime();
        t.add_row({f, tf.omega01_ghz, tf.omega12_ghz, tf.anharmonicity_ghz, slope, units::rad_per_us_to_mhz(gphi), eta_p,
                   units::rad_per_us_to_mhz(device::gamma_eqv(eta_p, r.gamma2()))});
    }
    return t;
}

} // namespace qpsim::flow
