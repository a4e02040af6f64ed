#include "qpsim/lindblad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"

namespace qpsim::engine {

namespace {

Vector9 vec(const Matrix3& x) {
    Vector9 v;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) v(i + 3 * j) = x(i, j);
    return v;
}

Matrix3 unvec(const Vector9& v) {
    Matrix3 x;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) x(i, j) = v(i + 3 * j);
    return x;
}

EngineRates to_engine(const device::QubitParams& q, const device::Rates& r) {
    r.validate();
    const auto f = device::transition_frequencies(q);
    return {units::rad_per_us_to_rad_per_ns(r.gamma1()),
            units::rad_per_us_to_rad_per_ns(r.gamma_phi),
            units::ghz_to_rad_per_ns(f.anharmonicity_ghz), q.lambda_12};
}

// Splits [t0, t1] at drive breakpoints.
std::vector<double> segment_edges(const Drive& d, double t0, double t1) {
    std::vector<double> edges{t0};
    for (double b : d.breakpoints) {
        if (b > t0 && b < t1) edges.push_back(b);
    }
    std::sort(edges.begin() + 1, edges.end());
    edges.push_back(t1);
    return edges;
}

struct SuperOps {
    Matrix9 fixed;  // drive-independent part
    Matrix9 drive;  // coefficient of Omega(t)
};

} // namespace

Matrix3 ground_state() { return basis_op(0, 0); }
Matrix3 excited_state() { return basis_op(1, 1); }

DensityCheck check_density(const Matrix3& rho) {
    DensityCheck c{};
    c.hermiticity = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    c.trace_error = std::abs(rho.trace() - cplx(1.0, 0.0));
    const Matrix3 h = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix3> es(h, Eigen::EigenvaluesOnly);
    c.min_eigenvalue = es.eigenvalues().minCoeff();
    return c;
}

LindbladModel::LindbladModel(const EngineRates& rates, Drive drive)
    : rates_(rates), drive_(std::move(drive)) {
    if (!(rates_.gamma1 >= 0.0 && rates_.gamma_phi >= 0.0)) {
        throw DomainError("engine rates must be non-negative");
    }
    collapse_ = {std::sqrt(rates_.gamma1) * basis_op(0, 1),
                 std::sqrt(2.0 * rates_.gamma_phi) * basis_op(1, 1),
                 std::sqrt(2.0 * rates_.gamma1) * basis_op(1, 2),
                 std::sqrt(2.0 * rates_.gamma_phi) * basis_op(2, 2)};
    decay_term_ = Matrix3::Zero();
    for (const auto& c : collapse_) decay_term_ += 0.5 * c.adjoint() * c;
}

LindbladModel::LindbladModel(const device::QubitParams& q, const device::Rates& r, Drive drive)
    : LindbladModel(to_engine(q, r), std::move(drive)) {}

Matrix3 LindbladModel::hamiltonian(double t) const {
    const double w = drive_.envelope(t);
    const double d = drive_.detuning;
    Matrix3 h = Matrix3::Zero();
    h(0, 1) = h(1, 0) = 0.5 * w;
    h(1, 2) = h(2, 1) = 0.5 * rates_.lambda * w;
    h(1, 1) = d;
    h(2, 2) = rates_.anharmonicity + 2.0 * d;
    return h;
}

Matrix3 LindbladModel::apply(double t, const Matrix3& x) const {
    const Matrix3 h = hamiltonian(t);
    const cplx mi(0.0, -1.0);
    Matrix3 out = mi * (h * x - x * h);
    for (const auto& c : collapse_) out += c * x * c.adjoint();
    out -= decay_term_ * x + x * decay_term_;
    return out;
}

namespace {

SuperOps build_superops(const LindbladModel& m) {
    // Linear in Omega: L(t) = L(Omega=0) + Omega(t) * (L(Omega=1) - L(Omega=0)).
    EngineRates r = m.rates();
    auto column_op = [&](double omega) {
        LindbladModel tmp(r, Drive::constant(omega, m.drive().detuning));
        Matrix9 s;
        for (int k = 0; k < 9; ++k) {
            Vector9 e = Vector9::Zero();
            e(k) = 1.0;
            s.col(k) = vec(tmp.apply(0.0, unvec(e)));
        }
        return s;
    };
    SuperOps ops;
    ops.fixed = column_op(0.0);
    ops.drive = column_op(1.0) - ops.fixed;
    return ops;
}

template <typename State>
void rk4_segment(const SuperOps& ops, const Drive& drive, State& x, double a, double b, double max_step) {
    const double len = b - a;
    if (!(len > 0.0)) return;
    const long n = std::max<long>(1, static_cast<long>(std::ceil(len / max_step - 1e-9)));
    const double h = len / static_cast<double>(n);
    for (long i = 0; i < n; ++i) {
        // Sample one-sided limits at segment edges so a step never sees across a breakpoint.
        const double t = a + static_cast<double>(i) * h;
        const double w0 = drive.envelope(i == 0 ? std::nextafter(a, b) : t);
        const double wm = drive.envelope(t + 0.5 * h);
        const double w1 = drive.envelope(i + 1 == n ? std::nextafter(b, a) : t + h);
        const Matrix9 l0 = ops.fixed + w0 * ops.drive;
        const Matrix9 lm = ops.fixed + wm * ops.drive;
        const Matrix9 l1 = ops.fixed + w1 * ops.drive;
        const State k1 = l0 * x;
        const State k2 = lm * (x + (0.5 * h) * k1);
        const State k3 = lm * (x + (0.5 * h) * k2);
        const State k4 = l1 * (x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
}

template <typename State>
void propagate_impl(const LindbladModel& model, const SuperOps& ops, State& x, double t0, double t1,
                    double max_step) {
    const auto edges = segment_edges(model.drive(), t0, t1);
    for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
        rk4_segment(ops, model.drive(), x, edges[s], edges[s + 1], max_step);
    }
}

} // namespace

Matrix9 LindbladModel::superoperator(double t) const {
    const SuperOps ops = build_superops(*this);
    return ops.fixed + drive_.envelope(t) * ops.drive;
}

double LindbladModel::default_step() const {
    const double fastest = std::max({rates_.gamma1, drive_.peak, std::abs(drive_.detuning),
                                     std::abs(rates_.anharmonicity)});
    double dt = fastest > 0.0 ? 0.02 / fastest : 1.0;
    if (drive_.shortest_feature_ns > 0.0) dt = std::min(dt, drive_.shortest_feature_ns / 50.0);
    return dt;
}

void propagate(const LindbladModel& model, Matrix3& x, double t0, double t1, double max_step) {
    const SuperOps ops = build_superops(model);
    Vector9 v = vec(x);
    propagate_impl(model, ops, v, t0, t1, max_step);
    x = unvec(v);
}

std::vector<double> uniform_grid(double t0, double t1, double dt) {
    if (!(dt > 0.0) || !(t1 >= t0)) throw DomainError("uniform_grid needs dt > 0 and t1 >= t0");
    const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / dt + 1e-9)) + 1;
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = t0 + static_cast<double>(i) * dt;
    return g;
}

namespace {

std::vector<Matrix3> run_grid(const LindbladModel& model, const SuperOps& ops, const Matrix3& rho0,
                              std::span<const double> grid, double step) {
    std::vector<Matrix3> out;
    out.reserve(grid.size());
    Vector9 v = vec(rho0);
    out.push_back(rho0);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        propagate_impl(model, ops, v, grid[i - 1], grid[i], step);
        out.push_back(unvec(v));
    }
    return out;
}

} // namespace

Trajectory evolve(const LindbladModel& model, const Matrix3& rho0, std::span<const double> grid,
                  const EvolveOptions& opts) {
    if (grid.empty()) throw DomainError("empty time grid");
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) throw DomainError("time grid must be strictly increasing");
    }
    if (!check_density(rho0).ok()) throw DomainError("initial state is not a valid density matrix");

    const SuperOps ops = build_superops(model);
    const double step = opts.max_step_ns > 0.0 ? opts.max_step_ns : model.default_step();

    Trajectory traj;
    traj.times.assign(grid.begin(), grid.end());
    traj.step_ns = step;
    if (!opts.convergence_check) {
        traj.rho = run_grid(model, ops, rho0, grid, step);
        return traj;
    }
    const auto coarse = run_grid(model, ops, rho0, grid, step);
    traj.rho = run_grid(model, ops, rho0, grid, 0.5 * step);
    traj.step_ns = 0.5 * step;
    double err = 0.0;
    for (std::size_t i = 0; i < coarse.size(); ++i) {
        err = std::max(err, (coarse[i] - traj.rho[i]).cwiseAbs().maxCoeff());
    }
    traj.convergence_error = err;
    if (!(err <= opts.tolerance)) {
        std::ostringstream os;
        os << "step-halving check failed: max |drho| = " << err << " > " << opts.tolerance
           << " at dt = " << step << " ns";
        throw IntegrationError(os.str());
    }
    return traj;
}

Trajectory evolve(const device::QubitParams& q, const device::Rates& r, const Pulse& p,
                  const Matrix3& rho0, std::span<const double> grid, const EvolveOptions& opts) {
    const LindbladModel model(q, r, Drive::from_pulse(p));
    return evolve(model, rho0, grid, opts);
}

EmissionRecord emission_observables(const Trajectory& traj, const EngineRates& rates,
                                    double drive_end_ns) {
    EmissionRecord rec;
    rec.times = traj.times;
    rec.drive_end_ns = drive_end_ns;
    const double sg = std::sqrt(rates.gamma1);
    const std::size_t n = traj.rho.size();
    rec.amp.resize(n);
    rec.power.resize(n);
    rec.pop0.resize(n);
    rec.pop1.resize(n);
    rec.pop2.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Matrix3& r = traj.rho[i];
        rec.amp[i] = sg * r(1, 0);
        rec.power[i] = rates.gamma1 * r(1, 1).real();
        rec.pop0[i] = r(0, 0).real();
        rec.pop1[i] = r(1, 1).real();
        rec.pop2[i] = r(2, 2).real();
    }
    return rec;
}

EmissionRecord emission_observables(const Trajectory& traj, const device::Rates& r,
                                    double drive_end_ns) {
    const EngineRates e{units::rad_per_us_to_rad_per_ns(r.gamma1()),
                        units::rad_per_us_to_rad_per_ns(r.gamma_phi), 0.0, 0.0};
    return emission_observables(traj, e, drive_end_ns);
}

double reference_phase(const EmissionRecord& ref) {
    if (ref.amp.empty()) return 0.0;
    std::size_t best = 0;
    for (std::size_t i = 1; i < ref.amp.size(); ++i) {
        if (std::abs(ref.amp[i]) > std::abs(ref.amp[best])) best = i;
    }
    return std::arg(ref.amp[best]);
}

void rotate_phase(EmissionRecord& rec, double phase) {
    const cplx rot = std::polar(1.0, -phase);
    for (auto& a : rec.amp) a *= rot;
}

cplx steady_state_sigma_minus(const device::Rates& r, double omega, double delta) {
    r.validate();
    const double g1 = r.gamma1();
    const double g2 = r.gamma2();
    if (!(g1 > 0.0) || !(g2 > 0.0)) throw DomainError("steady state needs Gamma1 > 0 and Gamma2 > 0");
    const double x = delta / g2;
    const cplx num = cplx(0.0, -omega / (2.0 * g2)) * cplx(1.0, -x);
    return num / (1.0 + x * x + omega * omega / (g1 * g2));
}

cplx reflection(const device::Rates& r, double omega, double delta) {
    r.validate();
    const double g1 = r.gamma1();
    const double g2 = r.gamma2();
    if (!(g1 > 0.0) || !(g2 > 0.0)) throw DomainError("reflection needs Gamma1 > 0 and Gamma2 > 0");
    const double x = delta / g2;
    return 1.0 - (r.gamma1_e / g2) * cplx(1.0, -x) / (1.0 + x * x + omega * omega / (g1 * g2));
}

PreparationPoint preparation_point(const EmissionRecord& rec) {
    if (rec.pop1.empty()) throw DomainError("empty emission record");
    const auto it = std::max_element(rec.pop1.begin(), rec.pop1.end());
    const auto i = static_cast<std::size_t>(it - rec.pop1.begin());
    return {rec.times[i], rec.pop1[i], rec.pop2[i]};
}

// ---------------------------------------------------------------------------

void TwoTimeSpec::validate() const {
    if (!(dt > 0.0)) throw DomainError("two-time grid needs dt > 0");
    if (n_t == 0 || n_tau == 0) throw DomainError("two-time grid needs n_t > 0 and n_tau > 0");
    if (tau_stride == 0) throw DomainError("tau stride must be >= 1");
}

namespace {

struct QrtResult {
    Eigen::MatrixXcd g1;
    Eigen::MatrixXd g2;
    std::vector<double> power;
};

QrtResult run_qrt(const LindbladModel& model, const SuperOps& ops, const Matrix3& rho0,
                  const TwoTimeSpec& spec, double step) {
    const std::size_t n_lat = spec.n_t + (spec.n_tau - 1) * spec.tau_stride;
    std::vector<Matrix9> props(n_lat > 0 ? n_lat - 1 : 0);
    for (std::size_t k = 0; k + 1 < n_lat; ++k) {
        Matrix9 u = Matrix9::Identity();
        propagate_impl(model, ops, u, spec.t(k), spec.t(k + 1), step);
        props[k] = u;
    }

    const double g1 = model.rates().gamma1;
    QrtResult out;
    out.g1.resize(static_cast<Eigen::Index>(spec.n_t), static_cast<Eigen::Index>(spec.n_tau));
    out.g2.resize(static_cast<Eigen::Index>(spec.n_t), static_cast<Eigen::Index>(spec.n_tau));
    out.power.resize(spec.n_t);

    const Matrix3 s01 = basis_op(0, 1);
    const Matrix3 s10 = basis_op(1, 0);
    Vector9 rho = vec(rho0);
    for (std::size_t i = 0; i < spec.n_t; ++i) {
        if (i > 0) rho = props[i - 1] * rho;
        const Matrix3 r = unvec(rho);
        out.power[i] = g1 * r(1, 1).real();
        Vector9 x1 = vec(r * s10);
        Vector9 x2 = vec(s01 * r * s10);
        std::size_t lat = i;
        for (std::size_t j = 0; j < spec.n_tau; ++j) {
            if (j > 0) {
                for (std::size_t s = 0; s < spec.tau_stride; ++s, ++lat) {
                    x1 = props[lat] * x1;
                    x2 = props[lat] * x2;
                }
            }
            const auto ii = static_cast<Eigen::Index>(i);
            const auto jj = static_cast<Eigen::Index>(j);
            out.g1(ii, jj) = g1 * x1(1);     // tr[s01 X] = X(1,0)
            out.g2(ii, jj) = g1 * g1 * x2(4).real(); // tr[s11 X] = X(1,1)
        }
    }
    return out;
}

} // namespace

TwoTimeGrid two_time_correlations(const LindbladModel& model, const Matrix3& rho0,
                                  const TwoTimeSpec& spec, const EvolveOptions& opts) {
    spec.validate();
    if (!check_density(rho0).ok()) throw DomainError("initial state is not a valid density matrix");
    const SuperOps ops = build_superops(model);
    const double step = opts.max_step_ns > 0.0 ? opts.max_step_ns : model.default_step();

    TwoTimeGrid grid;
    grid.spec = spec;
    if (!opts.convergence_check) {
        auto r = run_qrt(model, ops, rho0, spec, step);
        grid.g1 = std::move(r.g1);
        grid.g2 = std::move(r.g2);
        grid.power = std::move(r.power);
        return grid;
    }
    const auto coarse = run_qrt(model, ops, rho0, spec, step);
    auto fine = run_qrt(model, ops, rho0, spec, 0.5 * step);
    const double scale1 = std::max(fine.g1.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const double scale2 = std::max(fine.g2.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const double err = std::max((coarse.g1 - fine.g1).cwiseAbs().maxCoeff() / scale1,
                                (coarse.g2 - fine.g2).cwiseAbs().maxCoeff() / scale2);
    grid.convergence_error = err;
    if (!(err <= opts.tolerance)) {
        std::ostringstream os;
        os << "two-time step-halving check failed: relative change " << err << " > " << opts.tolerance;
        throw IntegrationError(os.str());
    }
    grid.g1 = std::move(fine.g1);
    grid.g2 = std::move(fine.g2);
    grid.power = std::move(fine.power);
    return grid;
}

std::vector<cplx> integrate_g1(const TwoTimeGrid& grid) {
    const auto nt = grid.g1.rows();
    std::vector<cplx> out(static_cast<std::size_t>(grid.g1.cols()));
    for (Eigen::Index j = 0; j < grid.g1.cols(); ++j) {
        cplx s = 0.0;
        for (Eigen::Index i = 0; i < nt; ++i) {
            const double w = (i == 0 || i == nt - 1) ? 0.5 : 1.0;
            s += w * grid.g1(i, j);
        }
        out[static_cast<std::size_t>(j)] = s * grid.spec.dt;
    }
    return out;
}

std::vector<double> integrate_g2(const TwoTimeGrid& grid) {
    const auto nt = grid.g2.rows();
    std::vector<double> out(static_cast<std::size_t>(grid.g2.cols()));
    for (Eigen::Index j = 0; j < grid.g2.cols(); ++j) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < nt; ++i) {
            const double w = (i == 0 || i == nt - 1) ? 0.5 : 1.0;
            s += w * grid.g2(i, j);
        }
        out[static_cast<std::size_t>(j)] = s * grid.spec.dt;
    }
    return out;
}

} // namespace qpsim::engine
