#include "qpsim/fitters.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"

namespace qpsim::fit {

using cplx = std::complex<double>;

const FitParam& FitReport::get(const std::string& name) const {
    for (const auto& p : params)
        if (p.name == name) return p;
    for (const auto& p : derived)
        if (p.name == name) return p;
    throw RangeError("fit report has no entry '" + name + "'");
}

bool FitReport::has(const std::string& name) const {
    const auto eq = [&](const FitParam& p) { return p.name == name; };
    return std::any_of(params.begin(), params.end(), eq) || std::any_of(derived.begin(), derived.end(), eq);
}

std::string FitReport::to_keyvalue() const {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "model = " << model << "\n";
    os << "equation = " << equation << "\n";
    os << "converged = " << (converged ? "true" : "false") << "\n";
    os << "iterations = " << iterations << "\n";
    os << "n_points = " << n_points << "\n";
    os << "residual_norm = " << residual_norm << "\n";
    for (const auto* group : {&params, &derived}) {
        for (const auto& p : *group) {
            os << p.name << " = " << p.value;
            if (!p.unit.empty()) os << " " << p.unit;
            os << "\n" << p.name << ".sigma = " << p.sigma << "\n";
        }
    }
    for (const auto& n : notes) os << "note = " << n << "\n";
    return os.str();
}

std::string FitReport::to_json() const {
    nlohmann::ordered_json j;
    j["model"] = model;
    j["equation"] = equation;
    j["converged"] = converged;
    j["iterations"] = iterations;
    j["n_points"] = n_points;
    j["residual_norm"] = residual_norm;
    auto dump = [](const std::vector<FitParam>& v) {
        nlohmann::ordered_json a = nlohmann::ordered_json::array();
        for (const auto& p : v) a.push_back({{"name", p.name}, {"value", p.value}, {"sigma", p.sigma}, {"unit", p.unit}});
        return a;
    };
    j["params"] = dump(params);
    j["derived"] = dump(derived);
    j["notes"] = notes;
    return j.dump(2);
}

// ---------------------------------------------------------------------------

void ReflectionSweep::validate() const {
    if (powers_dbm.size() < 3) throw DomainError("reflection fit needs >= 3 powers");
    if (detunings.size() < 7) throw DomainError("reflection fit needs >= 7 detunings");
    for (std::size_t i = 1; i < powers_dbm.size(); ++i) {
        if (!(powers_dbm[i] > powers_dbm[i - 1])) throw DomainError("powers must be strictly increasing");
    }
    if (r.rows() != static_cast<Eigen::Index>(powers_dbm.size()) ||
        r.cols() != static_cast<Eigen::Index>(detunings.size())) {
        throw DomainError("reflection matrix shape does not match the sweep axes");
    }
    if (!r.allFinite()) throw DomainError("reflection data contains non-finite values");
    if (r.cwiseAbs().maxCoeff() > 1.1) throw DomainError("|r| exceeds 1.1; data is not normalized");
}

cplx reflection_model(double g2, double g1e, double q, double phi, double delta, double w_rel) {
    const double x = delta / g2;
    const double d = 1.0 + x * x + q * w_rel / g2;
    return std::polar(1.0, phi) * (1.0 - (g1e / g2) * cplx(1.0, -x) / d);
}

ReflectionSweep generate_sweep(const device::Rates& r, const std::vector<double>& powers_dbm,
                               const std::vector<double>& detunings, double omega2_per_watt, double noise_rms,
                               std::uint64_t seed) {
    ReflectionSweep s;
    s.powers_dbm = powers_dbm;
    s.detunings = detunings;
    s.r.resize(static_cast<Eigen::Index>(powers_dbm.size()), static_cast<Eigen::Index>(detunings.size()));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, noise_rms / std::sqrt(2.0));
    for (std::size_t i = 0; i < powers_dbm.size(); ++i) {
        const double omega = std::sqrt(omega2_per_watt * units::dbm_to_watt(powers_dbm[i]));
        for (std::size_t j = 0; j < detunings.size(); ++j) {
            cplx v = engine::reflection(r, omega, detunings[j]);
            if (noise_rms > 0.0) {
                const double re = nd(rng);
                const double im = nd(rng);
                v += cplx(re, im);
            }
            s.r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }
    return s;
}

namespace {

struct SweepView {
    const ReflectionSweep& s;
    std::vector<double> w_rel; // W / W_max
};

Eigen::VectorXd initial_guess(const SweepView& v) {
    const auto& s = v.s;
    const auto nd = static_cast<Eigen::Index>(s.detunings.size());
    // Off-resonant phase from the two sweep ends at the lowest power.
    const cplx edge = s.r(0, 0) + s.r(0, nd - 1);
    const double phi = std::abs(edge) > 0.0 ? std::arg(edge) : 0.0;
    const cplx rot = std::polar(1.0, -phi);

    std::vector<double> dip(static_cast<std::size_t>(nd));
    for (Eigen::Index j = 0; j < nd; ++j) dip[static_cast<std::size_t>(j)] = (1.0 - (s.r(0, j) * rot).real());
    const auto jmax = static_cast<std::size_t>(std::max_element(dip.begin(), dip.end()) - dip.begin());
    const double depth = dip[jmax];
    if (!(depth > 1e-9)) throw DegenerateData("reflection sweep shows no resonance dip");

    // Half width at half depth on either side, averaged.
    auto crossing = [&](int dir) {
        long j = static_cast<long>(jmax);
        while (j + dir >= 0 && j + dir < nd && dip[static_cast<std::size_t>(j + dir)] > 0.5 * depth) j += dir;
        if (j + dir < 0 || j + dir >= nd) return std::abs(s.detunings[static_cast<std::size_t>(j)] - s.detunings[jmax]);
        const double y0 = dip[static_cast<std::size_t>(j)], y1 = dip[static_cast<std::size_t>(j + dir)];
        const double x0 = s.detunings[static_cast<std::size_t>(j)], x1 = s.detunings[static_cast<std::size_t>(j + dir)];
        const double xc = x0 + (0.5 * depth - y0) * (x1 - x0) / (y1 - y0);
        return std::abs(xc - s.detunings[jmax]);
    };
    double g2 = 0.5 * (crossing(-1) + crossing(+1));
    if (!(g2 > 0.0)) g2 = 0.25 * (s.detunings.back() - s.detunings.front());
    const double g1e = depth * g2;

    // Saturation from the on-resonance dip at the highest power.
    const auto ip = static_cast<Eigen::Index>(s.powers_dbm.size()) - 1;
    const double depth_hi = 1.0 - (s.r(ip, static_cast<Eigen::Index>(jmax)) * rot).real();
    double sat = depth_hi > 1e-6 ? depth / depth_hi - 1.0 : 10.0;
    sat = std::clamp(sat, 1e-3, 1e4);
    Eigen::VectorXd p(4);
    p << g2, g1e, sat * g2, phi;
    return p;
}

} // namespace

FitReport fit_reflection(const ReflectionSweep& sweep, const ReflectionFitOptions& opts) {
    sweep.validate();
    {
        const cplx m = sweep.r.mean();
        if ((sweep.r.array() - m).abs().maxCoeff() < 1e-12) throw DegenerateData("reflection sweep is flat");
    }
    SweepView v{sweep, {}};
    const double w_max = units::dbm_to_watt(sweep.powers_dbm.back());
    for (double p : sweep.powers_dbm) v.w_rel.push_back(units::dbm_to_watt(p) / w_max);

    const auto np = static_cast<Eigen::Index>(sweep.powers_dbm.size());
    const auto nd = static_cast<Eigen::Index>(sweep.detunings.size());
    const Eigen::Index m = np * nd;
    const int nparam = opts.fit_phase ? 4 : 3;

    auto unpack = [&](const Eigen::VectorXd& p) {
        return std::array<double, 4>{p(0), p(1), p(2), opts.fit_phase ? p(3) : 0.0};
    };
    auto residual = [&](const Eigen::VectorXd& p) {
        const auto [g2, g1e, q, phi] = unpack(p);
        Eigen::VectorXd r(2 * m);
        for (Eigen::Index i = 0; i < np; ++i) {
            for (Eigen::Index j = 0; j < nd; ++j) {
                const cplx d = reflection_model(g2, g1e, q, phi, sweep.detunings[static_cast<std::size_t>(j)],
                                                v.w_rel[static_cast<std::size_t>(i)]) -
                               sweep.r(i, j);
                r(i * nd + j) = d.real();
                r(m + i * nd + j) = d.imag();
            }
        }
        return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& p) {
        const auto [g2, g1e, q, phi] = unpack(p);
        Eigen::MatrixXd J(2 * m, nparam);
        const cplx e = std::polar(1.0, phi);
        const cplx I(0.0, 1.0);
        for (Eigen::Index i = 0; i < np; ++i) {
            const double w = v.w_rel[static_cast<std::size_t>(i)];
            for (Eigen::Index j = 0; j < nd; ++j) {
                const double x = sweep.detunings[static_cast<std::size_t>(j)] / g2;
                const double S = q * w / g2;
                const double D = 1.0 + x * x + S;
                const cplx u(1.0, -x);
                const cplx f = (g1e / g2) * u / D;
                const cplx df_dg2 = -f / g2 + I * (g1e * x) / (g2 * g2 * D) + f * (2.0 * x * x + S) / (g2 * D);
                const cplx df_dg1e = u / (g2 * D);
                const cplx df_dq = -(g1e / g2) * u / (D * D) * (w / g2);
                const cplx cols[4] = {-e * df_dg2, -e * df_dg1e, -e * df_dq, I * e * (1.0 - f)};
                for (int k = 0; k < nparam; ++k) {
                    J(i * nd + j, k) = cols[k].real();
                    J(m + i * nd + j, k) = cols[k].imag();
                }
            }
        }
        return J;
    };

    Eigen::VectorXd start = opts.start ? *opts.start : initial_guess(v);
    Eigen::VectorXd x0 = start.head(nparam);
    const LMResult lm = levenberg_marquardt(residual, x0, jacobian, opts.lm);

    const auto [g2, g1e, q, phi] = unpack(lm.x);
    if (!(g2 > 0.0) || !(g1e > 0.0)) throw DegenerateData("fit reached non-physical rates");
    auto sd = [&](int k) { return std::sqrt(std::max(0.0, lm.covariance(k, k))); };

    FitReport rep;
    rep.model = "reflection";
    rep.equation = "r_e = exp(i phi) [1 - (G1e/G2)(1 - i d/G2) / (1 + (d/G2)^2 + q (W/W_max)/G2)], "
                   "q = Omega^2(W_max)/G1";
    rep.params = {{"gamma2", g2, sd(0), "rad/us"}, {"gamma1e", g1e, sd(1), "rad/us"}, {"q", q, sd(2), "rad/us"}};
    if (opts.fit_phase) rep.params.push_back({"phi", phi, sd(3), "rad"});

    // eta' = G1e / (2 G2), first-order error propagation with the covariance.
    const double eta = g1e / (2.0 * g2);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(nparam);
    grad(0) = -g1e / (2.0 * g2 * g2);
    grad(1) = 1.0 / (2.0 * g2);
    const double eta_sd = std::sqrt(std::max(0.0, grad.dot(lm.covariance * grad)));
    rep.derived.push_back({"eta_prime", std::min(eta, 1.0), eta_sd, ""});
    rep.derived.push_back({"eta_prime_raw", eta, eta_sd, ""});
    rep.derived.push_back({"gamma2_mhz", units::rad_per_us_to_mhz(g2), units::rad_per_us_to_mhz(sd(0)), "MHz"});
    rep.derived.push_back({"gamma1e_mhz", units::rad_per_us_to_mhz(g1e), units::rad_per_us_to_mhz(sd(1)), "MHz"});
    if (opts.omega2_per_watt) {
        const double s = *opts.omega2_per_watt;
        const double g1 = s * w_max / q;
        const double g1_sd = g1 * sd(2) / q;
        rep.derived.push_back({"gamma1", g1, g1_sd, "rad/us"});
        rep.derived.push_back({"gamma1_mhz", units::rad_per_us_to_mhz(g1), units::rad_per_us_to_mhz(g1_sd), "MHz"});
        rep.derived.push_back({"omega2_per_watt", s, 0.0, "(rad/us)^2/W"});
    } else {
        rep.notes.push_back("Gamma1 not identifiable without an Omega^2-per-watt calibration; q reported instead");
    }
    if (eta > 1.0) rep.notes.push_back("eta' clamped to 1; raw value kept as eta_prime_raw");
    rep.notes.push_back("all powers and detunings weighted uniformly");
    rep.residual_norm = std::sqrt(lm.cost);
    rep.iterations = lm.iterations;
    rep.converged = lm.converged;
    rep.n_points = static_cast<std::size_t>(m);
    return rep;
}

McResult normalization_mc(const ReflectionSweep& sweep, double amp_jitter, double phase_jitter_rad, int n_trials,
                          std::uint64_t seed, const ReflectionFitOptions& opts) {
    if (!(amp_jitter >= 0.0) || !(phase_jitter_rad >= 0.0)) throw DomainError("jitters must be >= 0");
    if (n_trials < 2) throw DomainError("normalization_mc needs >= 2 trials");
    const FitReport base = fit_reflection(sweep, opts);
    ReflectionFitOptions o = opts;
    Eigen::VectorXd start(4);
    start << base.get("gamma2").value, base.get("gamma1e").value, base.get("q").value,
        opts.fit_phase ? base.get("phi").value : 0.0;
    o.start = start;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    McResult out;
    for (int t = 0; t < n_trials; ++t) {
        const double a = amp_jitter * nd(rng);
        const double ph = phase_jitter_rad * nd(rng);
        ReflectionSweep s = sweep;
        s.r *= std::polar(1.0 + a, ph);
        out.samples.push_back(fit_reflection(s, o).get("eta_prime_raw").value);
    }
    const double n = static_cast<double>(out.samples.size());
    out.mean = std::accumulate(out.samples.begin(), out.samples.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : out.samples) ss += (x - out.mean) * (x - out.mean);
    out.spread = std::sqrt(ss / (n - 1.0));
    return out;
}

// ---------------------------------------------------------------------------

FitReport fit_saturation(const std::vector<double>& w, const std::vector<double>& y) {
    if (w.size() != y.size()) throw DomainError("powers and values differ in length");
    if (w.size() < 4) throw DomainError("saturation fit needs >= 4 points");
    for (double p : w)
        if (!(p >= 0.0)) throw DomainError("powers must be >= 0");
    const double w_max = *std::max_element(w.begin(), w.end());
    if (!(w_max > 0.0)) throw DegenerateData("all powers are zero");
    const auto n = static_cast<Eigen::Index>(w.size());

    // Parameters [A, u = k W_max].
    auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double x = w[static_cast<std::size_t>(i)] / w_max;
            r(i) = p(0) / (1.0 + p(1) * x) - y[static_cast<std::size_t>(i)];
        }
        return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& p) {
        Eigen::MatrixXd J(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double x = w[static_cast<std::size_t>(i)] / w_max;
            const double d = 1.0 + p(1) * x;
            J(i, 0) = 1.0 / d;
            J(i, 1) = -p(0) * x / (d * d);
        }
        return J;
    };
    const auto imin = static_cast<std::size_t>(std::min_element(w.begin(), w.end()) - w.begin());
    const auto imax = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    Eigen::VectorXd p0(2);
    p0(0) = y[imin];
    p0(1) = (y[imax] != 0.0 && y[imin] / y[imax] > 1.0) ? y[imin] / y[imax] - 1.0 : 1.0;
    const LMResult lm = levenberg_marquardt(residual, p0, jacobian);

    FitReport rep;
    rep.model = "saturation";
    rep.equation = "y = A / (1 + k W)";
    const double sa = std::sqrt(std::max(0.0, lm.covariance(0, 0)));
    const double su = std::sqrt(std::max(0.0, lm.covariance(1, 1)));
    rep.params = {{"A", lm.x(0), sa, ""}, {"k", lm.x(1) / w_max, su / w_max, "1/W"}};
    rep.residual_norm = std::sqrt(lm.cost);
    rep.iterations = lm.iterations;
    rep.converged = lm.converged;
    rep.n_points = w.size();
    return rep;
}

std::string to_string(DecayKind k) { return k == DecayKind::amplitude ? "amplitude" : "power"; }

DecayKind parse_decay_kind(const std::string& s) {
    if (s == "amplitude") return DecayKind::amplitude;
    if (s == "power") return DecayKind::power;
    throw ConfigError("unknown decay kind '" + s + "' (amplitude, power)");
}

FitReport fit_decay(const std::vector<double>& t, const std::vector<double>& y, double t_start, double t_end) {
    if (t.size() != y.size()) throw DomainError("times and values differ in length");
    if (!(t_end > t_start)) throw WindowError("empty fit window");
    std::vector<double> tw, yw;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] >= t_start && t[i] <= t_end) {
            tw.push_back(t[i] - t_start);
            yw.push_back(y[i]);
        }
    }
    if (tw.size() < 10) throw WindowError("decay window holds " + std::to_string(tw.size()) + " points, need >= 10");

    // Log-linear start from the positive samples.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < tw.size(); ++i) {
        if (yw[i] > 0.0) {
            const double ly = std::log(yw[i]);
            sx += tw[i];
            sy += ly;
            sxx += tw[i] * tw[i];
            sxy += tw[i] * ly;
            ++k;
        }
    }
    if (k < 2) throw DegenerateData("decay window has fewer than two positive samples");
    const double kn = static_cast<double>(k);
    const double den = kn * sxx - sx * sx;
    double slope = den != 0.0 ? (kn * sxy - sx * sy) / den : 0.0;
    double icpt = (sy - slope * sx) / kn;
    if (!(slope < 0.0)) throw DegenerateData("values in the window do not decay");

    const auto n = static_cast<Eigen::Index>(tw.size());
    const double span = tw.back();
    // Parameters [C, rate * span].
    auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            r(i) = p(0) * std::exp(-p(1) * tw[static_cast<std::size_t>(i)] / span) - yw[static_cast<std::size_t>(i)];
        }
        return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& p) {
        Eigen::MatrixXd J(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double x = tw[static_cast<std::size_t>(i)] / span;
            const double e = std::exp(-p(1) * x);
            J(i, 0) = e;
            J(i, 1) = -p(0) * x * e;
        }
        return J;
    };
    Eigen::VectorXd p0(2);
    p0 << std::exp(icpt), -slope * span;
    const LMResult lm = levenberg_marquardt(residual, p0, jacobian);
    const double rate = lm.x(1) / span;
    const double rate_sd = std::sqrt(std::max(0.0, lm.covariance(1, 1))) / span;
    if (!(rate > 0.0)) throw DegenerateData("fitted decay rate is not positive");
    if (rate * span < 2.0) {
        throw WindowError("window spans " + std::to_string(rate * span) + " decay constants, need >= 2");
    }

    FitReport rep;
    rep.model = "exp-decay";
    rep.equation = "y = C exp(-rate (t - t_start))";
    rep.params = {{"C", lm.x(0), std::sqrt(std::max(0.0, lm.covariance(0, 0))), ""}, {"rate", rate, rate_sd, "1/ns"}};
    rep.derived = {{"rate_rad_per_us", rate * 1e3, rate_sd * 1e3, "rad/us"},
                   {"rate_mhz", rate * 1e3 / units::two_pi, rate_sd * 1e3 / units::two_pi, "MHz"},
                   {"tau_ns", 1.0 / rate, rate_sd / (rate * rate), "ns"}};
    rep.residual_norm = std::sqrt(lm.cost);
    rep.iterations = lm.iterations;
    rep.converged = lm.converged;
    rep.n_points = tw.size();
    return rep;
}

FitReport fit_decay(const engine::EmissionRecord& rec, DecayKind kind, double t_start, double t_end) {
    if (t_start < rec.drive_end_ns) {
        throw WindowError("decay window starts at " + std::to_string(t_start) + " ns, before the drive ends at " +
                          std::to_string(rec.drive_end_ns) + " ns");
    }
    std::vector<double> y(rec.times.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = kind == DecayKind::amplitude ? std::abs(rec.amp[i]) : rec.power[i];
    FitReport rep = fit_decay(rec.times, y, t_start, t_end);
    rep.notes.push_back("kind = " + to_string(kind));
    return rep;
}

} // namespace qpsim::fit
