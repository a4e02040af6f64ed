// qpsim: command-line entry point.
//
//   qpsim [--config PATH] [--out DIR] [--seed N] [--workers N] <subcommand> [flags]
//
// Every subcommand writes CSV files with a "# key = value" header block that
// echoes the run parameters. Errors print "error: <Category>: message" and
// exit nonzero.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qpsim/config.hpp"
#include "qpsim/correlator.hpp"
#include "qpsim/detection_chain.hpp"
#include "qpsim/detection_filter.hpp"
#include "qpsim/device_model.hpp"
#include "qpsim/errors.hpp"
#include "qpsim/fitters.hpp"
#include "qpsim/units.hpp"
#include "qpsim/workflows.hpp"

namespace fs = std::filesystem;
using namespace qpsim;
using cplx = std::complex<double>;

namespace {

struct Globals {
    std::string config_path;
    std::string out_dir{"."};
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
};

config::RunConfig load_config(const Globals& g) {
    config::RunConfig c = g.config_path.empty() ? config::defaults() : config::load(g.config_path);
    if (g.seed) c.seed = *g.seed;
    if (g.workers) {
        if (*g.workers == 0) throw ConfigError("--workers must be >= 1");
        c.workers = *g.workers;
    }
    c.correlator.workers = c.workers;
    c.validate();
    return c;
}

std::string out_path(const Globals& g, const std::string& name) {
    std::error_code ec;
    fs::create_directories(g.out_dir, ec);
    if (ec) throw IOError("cannot create output directory '" + g.out_dir + "': " + ec.message());
    return (fs::path(g.out_dir) / name).string();
}

io::Table base_table(const config::RunConfig& c, const std::string& what) {
    io::Table t;
    t.add_header("qpsim", what);
    for (const auto& [k, v] : c.header()) t.add_header(k, v);
    return t;
}

void save(const io::Table& t, const std::string& path) {
    io::write_csv(t, path);
    std::cout << "wrote " << path << "\n";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot write '" + path + "'");
    f << text;
    if (!f) throw IOError("write failed for '" + path + "'");
    std::cout << "wrote " << path << "\n";
}

std::string num(double v) { return io::format_number(v); }

// --- spectrum -----------------------------------------------------------------

struct SpectrumArgs {
    double flux_min{0.0}, flux_max{0.4};
    std::size_t points{81};
};

void run_spectrum(const Globals& g, const SpectrumArgs& a) {
    const auto c = load_config(g);
    io::Table t = flow::flux_scan(c, a.flux_min, a.flux_max, a.points);
    io::Table out = base_table(c, "spectrum");
    out.columns = t.columns;
    out.rows = t.rows;
    save(out, out_path(g, "spectrum.csv"));
}

// --- budget -------------------------------------------------------------------

void run_budget(const Globals& g) {
    const auto c = load_config(g);
    const auto r = device::efficiency_budget(c.budget);
    std::cout << std::setprecision(4);
    std::cout << "Photon-generation budget\n"
              << "  minimal drive time     " << r.drive_time_ns << " ns\n"
              << "  Rabi rate Omega        " << r.rabi_rate << " rad/s\n"
              << "  drive power W          " << r.drive_power_W << " W\n"
              << "  pulse energy E         " << r.pulse_energy_J << " J\n"
              << "  leakage alpha_l        " << r.leakage << "\n"
              << "  coupling efficiency    " << r.coupling_efficiency << "\n"
              << "  total efficiency       " << r.total_efficiency << "\n";
    std::cout << std::setprecision(17);
    std::cout << "\n[budget]\n"
              << "drive_time_ns = " << r.drive_time_ns << "\n"
              << "rabi_rate_rad_per_s = " << r.rabi_rate << "\n"
              << "drive_power_W = " << r.drive_power_W << "\n"
              << "pulse_energy_J = " << r.pulse_energy_J << "\n"
              << "leakage = " << r.leakage << "\n"
              << "coupling_efficiency = " << r.coupling_efficiency << "\n"
              << "total_efficiency = " << r.total_efficiency << "\n";
}

// --- rabi ---------------------------------------------------------------------

struct RabiArgs {
    double theta_min_pi{0.0}, theta_max_pi{2.0};
    std::size_t points{33};
    double t_end{200.0}, dt{0.25};
    std::optional<double> bandwidth;
};

void write_rabi(const Globals& g, const config::RunConfig& c, const flow::RabiSweep& s, const std::string& prefix) {
    io::Table traces = base_table(c, "rabi traces");
    traces.add_header("bandwidth_mhz", s.bandwidth_mhz);
    traces.add_header("phase_rad", s.phase);
    traces.columns = {"theta", "time_ns", "amp_re", "amp_im", "amp_abs", "power", "pop0", "pop1", "pop2"};
    for (std::size_t i = 0; i < s.thetas.size(); ++i) {
        const auto& r = s.records[i];
        for (std::size_t k = 0; k < r.times.size(); ++k) {
            traces.add_row({s.thetas[i], r.times[k], r.amp[k].real(), r.amp[k].imag(), std::abs(r.amp[k]), r.power[k],
                            r.pop0[k], r.pop1[k], r.pop2[k]});
        }
    }
    save(traces, out_path(g, prefix + "_traces.csv"));

    io::Table tm = base_table(c, "rabi at t_m");
    tm.add_header("bandwidth_mhz", s.bandwidth_mhz);
    tm.add_header("t_m_amp_ns", s.t_m_amp);
    tm.add_header("t_m_power_ns", s.t_m_power);
    tm.columns = {"theta", "amp_re", "amp_im", "power", "amp_max", "power_max"};
    for (std::size_t i = 0; i < s.thetas.size(); ++i)
        tm.add_row({s.thetas[i], s.amp_at_tm[i].real(), s.amp_at_tm[i].imag(), s.power_at_tm[i], s.amp_max[i],
                    s.power_max[i]});
    save(tm, out_path(g, prefix + "_tm.csv"));
}

void run_rabi(const Globals& g, const RabiArgs& a) {
    const auto c = load_config(g);
    if (a.points < 2) throw ConfigError("--points must be >= 2");
    const double bw = a.bandwidth.value_or(c.bandwidth_rabi_mhz);
    const auto th = flow::linspace(a.theta_min_pi * units::pi, a.theta_max_pi * units::pi, a.points);
    const auto s = flow::rabi_sweep(c, th, bw, a.t_end, a.dt);
    write_rabi(g, c, s, "rabi");
    std::vector<double> ms, mp, re;
    for (std::size_t i = 0; i < th.size(); ++i) {
        ms.push_back(std::sin(th[i]));
        mp.push_back(std::pow(std::sin(th[i] / 2), 2));
        re.push_back(s.amp_at_tm[i].real());
    }
    std::cout << "r2_amplitude_sin = " << num(flow::scale_fit(ms, re).second) << "\n"
              << "r2_power_sin2 = " << num(flow::scale_fit(mp, s.power_at_tm).second) << "\n";
}

// --- reflection ---------------------------------------------------------------

struct ReflectionArgs {
    double power_min{-146}, power_max{-116}, power_step{2};
    std::size_t detunings{41};
    double span{5.0};
    double noise{0.0};
    std::optional<double> omega2_per_watt;
};

io::Table reflection_table(const config::RunConfig& c, const fit::ReflectionSweep& sw, double s_cal) {
    io::Table t = base_table(c, "reflection sweep");
    t.add_header("omega2_per_watt", s_cal);
    t.add_header("carrier_ghz", c.chain.carrier_ghz);
    t.columns = {"power_dbm", "power_w", "photons_per_us", "detuning_rad_per_us", "detuning_mhz", "re", "im"};
    for (std::size_t i = 0; i < sw.powers_dbm.size(); ++i) {
        const double w = units::dbm_to_watt(sw.powers_dbm[i]);
        for (std::size_t j = 0; j < sw.detunings.size(); ++j) {
            t.add_row({sw.powers_dbm[i], w, flow::photons_per_us(w, c.chain.carrier_ghz), sw.detunings[j],
                       units::rad_per_us_to_mhz(sw.detunings[j]), sw.r(i, j).real(), sw.r(i, j).imag()});
        }
    }
    return t;
}

fit::ReflectionSweep sweep_from_table(const io::Table& t) {
    const auto p = t.column("power_dbm");
    const auto d = t.column("detuning_rad_per_us");
    const auto re = t.column("re");
    const auto im = t.column("im");
    fit::ReflectionSweep sw;
    for (double v : p)
        if (sw.powers_dbm.empty() || v != sw.powers_dbm.back()) sw.powers_dbm.push_back(v);
    for (std::size_t k = 0; k < d.size() && p[k] == p[0]; ++k) sw.detunings.push_back(d[k]);
    const std::size_t np = sw.powers_dbm.size(), nd = sw.detunings.size();
    if (np * nd != p.size()) throw FormatError("reflection CSV is not a complete power x detuning grid");
    sw.r.resize(static_cast<long>(np), static_cast<long>(nd));
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t j = 0; j < nd; ++j) {
            const std::size_t k = i * nd + j;
            if (p[k] != sw.powers_dbm[i] || d[k] != sw.detunings[j])
                throw FormatError("reflection CSV rows are not in power-major grid order");
            sw.r(static_cast<long>(i), static_cast<long>(j)) = cplx(re[k], im[k]);
        }
    sw.validate();
    return sw;
}

void run_reflection(const Globals& g, const ReflectionArgs& a) {
    const auto c = load_config(g);
    if (!(a.power_step > 0.0) || a.power_max < a.power_min) throw ConfigError("bad power range");
    std::vector<double> p;
    for (double v = a.power_min; v <= a.power_max + 1e-9; v += a.power_step) p.push_back(v);
    const double s_cal = a.omega2_per_watt.value_or(flow::omega2_per_watt(c.rates, c.chain.carrier_ghz));
    const auto sw = fit::generate_sweep(c.rates, p, flow::detuning_grid(c.rates, a.span, a.detunings), s_cal, a.noise, c.seed);
    io::Table t = reflection_table(c, sw, s_cal);
    t.add_header("noise_rms", a.noise);
    save(t, out_path(g, "reflection.csv"));
}

// --- correlations (engine) ----------------------------------------------------

struct CorrelationsArgs {
    std::optional<double> theta_pi;
    std::optional<double> bandwidth;
    double dt{0.5}, window{200.0};
};

io::Table engine_corr_table(const config::RunConfig& c, const flow::EngineCorrelation& e, double theta, double bw) {
    io::Table t = base_table(c, "engine correlations");
    t.add_header("theta_rad", theta);
    t.add_header("bandwidth_mhz", bw);
    t.add_header("period_ns", c.train.period_ns);
    t.add_header("g1_center", e.g1_center);
    t.add_header("g1_side", e.g1_side);
    t.add_header("g2_center", e.g2_center);
    t.add_header("g2_side", e.g2_side);
    t.add_header("g2_center_over_side", e.g2_ratio);
    t.columns = {"tau_ns", "g1_re", "g1_im", "g2", "g2_normalized"};
    for (std::size_t j = 0; j < e.tau_ns.size(); ++j)
        t.add_row({e.tau_ns[j], e.g1[j].real(), e.g1[j].imag(), e.g2[j], e.g2[j] / e.g2_side});
    return t;
}

void run_correlations(const Globals& g, const CorrelationsArgs& a) {
    const auto c = load_config(g);
    const double theta = a.theta_pi ? *a.theta_pi * units::pi : c.theta;
    const double bw = a.bandwidth.value_or(c.bandwidth_g2_mhz);
    const auto e = flow::engine_correlation(c, theta, bw, a.dt, a.window);
    save(engine_corr_table(c, e, theta, bw), out_path(g, "correlations.csv"));
    std::cout << "g2_center_over_side = " << num(e.g2_ratio) << "\n";
}

// --- synth --------------------------------------------------------------------

struct SynthArgs {
    std::string source;
    std::optional<std::size_t> records;
    std::optional<double> mean_photon;
    std::optional<std::size_t> record_len;
    std::optional<int> pulses;
    std::string out;
};

void run_synth(const Globals& g, const SynthArgs& a) {
    auto c = load_config(g);
    if (!a.source.empty()) c.source_kind = chain::parse_source_kind(a.source);
    if (a.records) c.n_records = *a.records;
    if (a.mean_photon) c.source_mean_photon = *a.mean_photon;
    if (a.record_len) c.chain.record_len = *a.record_len;
    if (a.pulses) c.train.count = *a.pulses;
    if (c.n_records == 0) throw ConfigError("--records must be >= 1");
    const auto train = c.synth_train();
    chain::SourceSpec src;
    if (c.source_kind == chain::SourceKind::sim_mean) {
        const auto rec = flow::rabi_trace(c, c.theta, 200.0, 0.25, 0.0);
        src = chain::SourceSpec::from_emission(rec, c.pulse.center_ns);
    } else {
        src = c.source();
    }
    chain::SynthOptions so;
    so.idle_photons = c.idle_photons;
    so.workers = c.workers;
    auto batch = chain::synthesize(c.chain, src, train, c.n_records, c.seed, so);
    const std::string path = a.out.empty() ? out_path(g, "traces.qptb") : a.out;
    if (!a.out.empty() && fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    chain::write_batch(batch, path);
    std::cout << "wrote " << path << " (" << c.n_records << " record pairs, source " << chain::to_string(c.source_kind)
              << ")\n";
}

// --- correlate ----------------------------------------------------------------

struct CorrelateArgs {
    std::string in;
    std::optional<std::size_t> tau_max;
    std::string kernel;
    std::string resume, checkpoint;
    std::size_t checkpoint_every{0};
    std::size_t stop_after{0};
    std::optional<double> bandwidth;
    long half_width{-1};
};

std::vector<std::string> trace_files(const std::string& in) {
    if (in.empty()) throw ConfigError("--in is required");
    if (!fs::exists(in)) throw IOError("no such file or directory '" + in + "'");
    if (!fs::is_directory(in)) return {in};
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(in))
        if (e.is_regular_file() && e.path().extension() == ".qptb") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IOError("no .qptb files in '" + in + "'");
    return files;
}

void run_correlate(const Globals& g, const CorrelateArgs& a) {
    const auto c = load_config(g);
    corr::CorrelatorOptions o = c.correlator;
    if (a.tau_max) o.tau_max = *a.tau_max;
    if (!a.kernel.empty()) o.kernel = corr::parse_kernel(a.kernel);
    if (a.bandwidth) o.bandwidth_mhz = *a.bandwidth;
    o.resume_path = a.resume;
    o.checkpoint_path = a.checkpoint;
    o.checkpoint_every = a.checkpoint_every;
    o.stop_after = a.stop_after;
    const auto files = trace_files(a.in);
    chain::MultiFileSource src(files);

    corr::RunStats stats;
    const auto raw = corr::correlate(src, o, &stats);
    corr::CorrEstimate est = raw;
    if (raw.has_background) est = corr::subtract_background(raw);

    // Pulse layout from the first file's header, when present.
    chain::TraceFileReader head(files.front());
    std::optional<engine::PulseTrain> train;
    if (head.extra().count("pulses") && head.extra().count("period_ns")) {
        engine::PulseTrain t;
        t.count = std::stoi(head.extra().at("pulses"));
        t.period_ns = std::stod(head.extra().at("period_ns"));
        train = t;
    }
    std::optional<std::string> norm_error;
    if (train && est.background_subtracted && train->count >= 2) {
        try {
            corr::NormalizeOptions no;
            no.half_width = a.half_width;
            est = corr::normalize_g2(est, *train, no);
        } catch (const Error& e) {
            norm_error = std::string(e.category()) + ": " + e.what();
        }
    }

    io::Table t = base_table(c, "correlate");
    t.add_header("inputs", std::to_string(files.size()));
    t.add_header("tau_max", std::to_string(o.tau_max));
    t.add_header("kernel", corr::to_string(o.kernel));
    t.add_header("bandwidth_mhz", o.bandwidth_mhz);
    t.add_header("n_averages", std::to_string(est.n_averages));
    t.add_header("dt_ns", est.dt_ns);
    if (est.normalized) {
        t.add_header("center_ratio", est.center_ratio);
        t.add_header("side_area_mean", est.side_area_mean);
        t.add_header("window_half_width", std::to_string(est.window_half_width));
    }
    t.columns = {"tau_samples", "tau_ns", "gamma1_re", "gamma1_im", "gamma1_bg_re", "gamma1_bg_im", "gamma2", "gamma2_bg",
                 "g1_re", "g1_im", "g2"};
    if (est.normalized) t.columns.push_back("g2_normalized");
    for (std::size_t i = 0; i < est.tau_samples.size(); ++i) {
        std::vector<double> row = {static_cast<double>(est.tau_samples[i]), est.tau_ns[i], raw.gamma1[i].real(),
                                   raw.gamma1[i].imag(), raw.has_background ? raw.gamma1_bg[i].real() : 0.0,
                                   raw.has_background ? raw.gamma1_bg[i].imag() : 0.0, raw.gamma2[i],
                                   raw.has_background ? raw.gamma2_bg[i] : 0.0, est.gamma1[i].real(),
                                   est.gamma1[i].imag(), est.gamma2[i]};
        if (est.normalized) row.push_back(est.g2_normalized[i]);
        t.add_row(std::move(row));
    }
    save(t, out_path(g, "correlate.csv"));

    nlohmann::ordered_json j;
    j["n_averages"] = est.n_averages;
    j["records_this_run"] = stats.records;
    j["wall_time_s"] = stats.wall_s;
    j["bytes"] = stats.bytes;
    j["throughput_MBps"] = stats.throughput_mbps();
    j["workers"] = o.workers;
    j["kernel"] = corr::to_string(o.kernel);
    j["tau_max"] = o.tau_max;
    if (est.normalized) {
        j["center_ratio"] = est.center_ratio;
        j["side_ratios"] = est.side_ratios;
    }
    if (norm_error) j["normalization_skipped"] = *norm_error;
    const std::string summary = j.dump(2);
    std::cout << summary << "\n";
    write_text(out_path(g, "correlate_summary.json"), summary + "\n");
}

// --- fitters ------------------------------------------------------------------

struct FitReflectionArgs {
    std::string in;
    std::optional<double> omega2_per_watt;
    int mc_trials{0};
    double amp_jitter{0.01}, phase_jitter_deg{1.0};
};

void emit_report(const Globals& g, const fit::FitReport& r, const std::string& name,
                 const std::optional<nlohmann::ordered_json>& extra = std::nullopt) {
    std::cout << r.to_keyvalue();
    auto j = nlohmann::ordered_json::parse(r.to_json());
    if (extra)
        for (const auto& [k, v] : extra->items()) j[k] = v;
    const std::string text = j.dump(2);
    std::cout << "\n" << text << "\n";
    write_text(out_path(g, name), text + "\n");
}

void run_fit_reflection(const Globals& g, const FitReflectionArgs& a) {
    const auto c = load_config(g);
    if (a.in.empty()) throw ConfigError("--in is required");
    const auto t = io::read_csv(a.in);
    const auto sw = sweep_from_table(t);
    fit::ReflectionFitOptions o;
    o.omega2_per_watt = a.omega2_per_watt;
    const auto rep = fit::fit_reflection(sw, o);
    std::optional<nlohmann::ordered_json> extra;
    if (a.mc_trials > 0) {
        const auto mc = fit::normalization_mc(sw, a.amp_jitter, a.phase_jitter_deg * units::pi / 180.0, a.mc_trials, c.seed, o);
        nlohmann::ordered_json j;
        j["normalization_mc"] = {{"trials", a.mc_trials}, {"amp_jitter", a.amp_jitter},
                                 {"phase_jitter_deg", a.phase_jitter_deg}, {"mean", mc.mean}, {"spread", mc.spread}};
        extra = j;
        std::cout << "normalization_mc.mean = " << num(mc.mean) << "\nnormalization_mc.spread = " << num(mc.spread) << "\n";
    }
    emit_report(g, rep, "fit_reflection.json", extra);
}

struct FitSaturationArgs {
    std::string in;
    std::string x_column{"power_w"}, y_column{"saturation"};
};

void run_fit_saturation(const Globals& g, const FitSaturationArgs& a) {
    load_config(g);
    if (a.in.empty()) throw ConfigError("--in is required");
    const auto t = io::read_csv(a.in);
    emit_report(g, fit::fit_saturation(t.column(a.x_column), t.column(a.y_column)), "fit_saturation.json");
}

struct FitDecayArgs {
    std::string in;
    std::string kind{"power"};
    std::string time_column{"time_ns"};
    std::string value_column;
    std::optional<double> theta;
    double t_start{0.0}, t_end{0.0};
};

void run_fit_decay(const Globals& g, const FitDecayArgs& a) {
    load_config(g);
    if (a.in.empty()) throw ConfigError("--in is required");
    const auto kind = fit::parse_decay_kind(a.kind);
    const std::string vcol = !a.value_column.empty() ? a.value_column : (kind == fit::DecayKind::power ? "power" : "amp_abs");
    const auto t = io::read_csv(a.in);
    auto times = t.column(a.time_column);
    auto vals = t.column(vcol);
    bool has_theta = std::find(t.columns.begin(), t.columns.end(), "theta") != t.columns.end();
    if (has_theta) {
        const auto th = t.column("theta");
        if (!a.theta) throw ConfigError("input has several traces; select one with --theta (units of pi)");
        double best = th.front();
        for (double v : th)
            if (std::abs(v - *a.theta * units::pi) < std::abs(best - *a.theta * units::pi)) best = v;
        std::vector<double> ts, vs;
        for (std::size_t i = 0; i < th.size(); ++i)
            if (th[i] == best) {
                ts.push_back(times[i]);
                vs.push_back(vals[i]);
            }
        times = std::move(ts);
        vals = std::move(vs);
    }
    const double t_end = a.t_end > a.t_start ? a.t_end : times.back();
    auto rep = fit::fit_decay(times, vals, a.t_start, t_end);
    rep.notes.push_back("fitted column " + vcol + " as " + fit::to_string(kind));
    emit_report(g, rep, "fit_decay.json");
}

// --- reproduce ----------------------------------------------------------------

void reproduce_fig2(const Globals& g, bool circles) {
    const auto c = load_config(g);
    const double s_cal = flow::omega2_per_watt(c.rates, c.chain.carrier_ghz);
    if (circles) {
        const auto sw = fit::generate_sweep(c.rates, flow::sweep_powers_dbm(), flow::detuning_grid(c.rates, 5.0, 81), s_cal);
        io::Table t = reflection_table(c, sw, s_cal);
        save(t, out_path(g, "fig2b_reflection.csv"));
        return;
    }
    io::Table t = base_table(c, "saturation of the on-resonance reflection");
    t.add_header("omega2_per_watt", s_cal);
    t.columns = {"power_dbm", "power_w", "photons_per_us", "saturation", "fit"};
    std::vector<double> w, y;
    for (double p = -160.0; p <= -110.0 + 1e-9; p += 1.0) {
        const double watt = units::dbm_to_watt(p);
        const cplx r = engine::reflection(c.rates, std::sqrt(s_cal * watt), 0.0);
        w.push_back(watt);
        y.push_back((1.0 - r.real()) / 2.0);
    }
    const auto rep = fit::fit_saturation(w, y);
    const double A = rep.get("A").value, k = rep.get("k").value;
    for (std::size_t i = 0; i < w.size(); ++i)
        t.add_row({units::watt_to_dbm(w[i]), w[i], flow::photons_per_us(w[i], c.chain.carrier_ghz), y[i], A / (1.0 + k * w[i])});
    t.add_header("fit_A", A);
    t.add_header("fit_k_per_w", k);
    t.add_header("eta_prime", c.rates.eta_prime());
    save(t, out_path(g, "fig2c_saturation.csv"));
}

void reproduce_fig3(const Globals& g) {
    const auto c = load_config(g);
    io::Table t = flow::flux_scan(c, 0.0, 0.35, 71);
    io::Table out = base_table(c, "flux dependence and 1/f dephasing limit");
    out.columns = t.columns;
    out.rows = t.rows;
    save(out, out_path(g, "fig3_flux.csv"));
}

void reproduce_fig4(const Globals& g) {
    const auto c = load_config(g);
    const double bw = c.bandwidth_rabi_mhz;
    const auto th = flow::linspace(0.0, 2.0 * units::pi, 33);
    const auto s = flow::rabi_sweep(c, th, bw, 200.0, 0.5);

    io::Table a = base_table(c, "amplitude vs time and theta");
    io::Table d = base_table(c, "power vs time and theta");
    for (auto* t : {&a, &d}) {
        t->add_header("bandwidth_mhz", bw);
        t->add_header("phase_rad", s.phase);
    }
    a.columns = {"theta", "time_ns", "amp_re", "amp_im"};
    d.columns = {"theta", "time_ns", "power"};
    for (std::size_t i = 0; i < th.size(); ++i) {
        const auto& r = s.records[i];
        for (std::size_t k = 0; k < r.times.size(); ++k) {
            a.add_row({th[i], r.times[k], r.amp[k].real(), r.amp[k].imag()});
            d.add_row({th[i], r.times[k], r.power[k]});
        }
    }
    save(a, out_path(g, "fig4a_amplitude.csv"));
    save(d, out_path(g, "fig4d_power.csv"));

    auto trace_panel = [&](double theta, fit::DecayKind kind, const std::string& name) {
        auto rec = flow::rabi_trace(c, theta, 200.0, 0.5, bw);
        engine::rotate_phase(rec, s.phase);
        const double t0 = rec.drive_end_ns + 4.0 * engine::ButterworthFilter(bw).rise_time_ns();
        const auto rep = fit::fit_decay(rec, kind, t0, 200.0);
        const double C = rep.get("C").value, rate = rep.get("rate").value;
        io::Table t = base_table(c, kind == fit::DecayKind::power ? "power trace" : "amplitude trace");
        t.add_header("theta_rad", theta);
        t.add_header("bandwidth_mhz", bw);
        t.add_header("fit_start_ns", t0);
        t.add_header("fit_rate_mhz", rep.get("rate_mhz").value);
        if (kind == fit::DecayKind::power) {
            t.columns = {"time_ns", "power", "fit"};
            for (std::size_t k = 0; k < rec.times.size(); ++k)
                t.add_row({rec.times[k], rec.power[k], rec.times[k] >= t0 ? C * std::exp(-rate * (rec.times[k] - t0)) : NAN});
        } else {
            t.columns = {"time_ns", "amp_re", "amp_im", "amp_abs", "fit"};
            for (std::size_t k = 0; k < rec.times.size(); ++k)
                t.add_row({rec.times[k], rec.amp[k].real(), rec.amp[k].imag(), std::abs(rec.amp[k]),
                           rec.times[k] >= t0 ? C * std::exp(-rate * (rec.times[k] - t0)) : NAN});
        }
        save(t, out_path(g, name));
    };
    trace_panel(units::pi / 2, fit::DecayKind::amplitude, "fig4b_amplitude_trace.csv");
    trace_panel(units::pi, fit::DecayKind::power, "fig4e_power_trace.csv");

    io::Table cpanel = base_table(c, "amplitude at t_m vs theta");
    cpanel.add_header("bandwidth_mhz", bw);
    cpanel.add_header("t_m_ns", s.t_m_amp);
    cpanel.columns = {"theta", "amp_re", "amp_im", "ideal_sin_half"};
    io::Table f = base_table(c, "power at t_m vs theta");
    f.add_header("bandwidth_mhz", bw);
    f.add_header("t_m_ns", s.t_m_power);
    f.columns = {"theta", "power", "ideal_sin2_half"};
    for (std::size_t i = 0; i < th.size(); ++i) {
        cpanel.add_row({th[i], s.amp_at_tm[i].real(), s.amp_at_tm[i].imag(), std::sin(th[i]) / 2});
        f.add_row({th[i], s.power_at_tm[i], std::pow(std::sin(th[i] / 2), 2)});
    }
    save(cpanel, out_path(g, "fig4c_amplitude_vs_theta.csv"));
    save(f, out_path(g, "fig4f_power_vs_theta.csv"));
}

void reproduce_fig5(const Globals& g) {
    const auto c = load_config(g);
    constexpr double kG1Bandwidth = 20.0;
    const auto half = flow::engine_correlation(c, units::pi / 2, kG1Bandwidth);
    save(engine_corr_table(c, half, units::pi / 2, kG1Bandwidth), out_path(g, "fig5a_g1_tau.csv"));

    const auto th = flow::linspace(0.0, 2.0 * units::pi, 9);
    std::vector<flow::EngineCorrelation> per(th.size());
    flow::parallel_for(th.size(), c.workers, [&](std::size_t i) {
        auto e = flow::engine_correlation(c, th[i] == 0.0 ? 1e-3 : th[i], kG1Bandwidth);
        e.grid = {};
        per[i] = std::move(e);
    });
    io::Table b = base_table(c, "G1 center and side peak vs theta");
    b.add_header("bandwidth_mhz", kG1Bandwidth);
    b.columns = {"theta", "g1_center", "g1_side"};
    for (std::size_t i = 0; i < th.size(); ++i) b.add_row({th[i], per[i].g1_center, per[i].g1_side});
    save(b, out_path(g, "fig5b_g1_vs_theta.csv"));

    const auto pi_pulse = flow::engine_correlation(c, units::pi, c.bandwidth_g2_mhz);
    save(engine_corr_table(c, pi_pulse, units::pi, c.bandwidth_g2_mhz), out_path(g, "fig5c_g2_single_photon.csv"));

    corr::CorrelatorOptions o = c.correlator;
    o.bandwidth_mhz = c.bandwidth_g2_mhz;
    const auto train = c.synth_train();
    auto src = chain::SourceSpec::gaussian(chain::SourceKind::coherent, c.source_sigma_ns, c.source_mean_photon);
    const auto expect = flow::mean_field_expectation(c.chain, src, train, o, {});
    chain::SynthOptions so;
    so.workers = c.workers;
    chain::Synthesizer syn(c.chain, src, train, c.n_records, c.seed, so);
    const auto meas = corr::normalize_g2(corr::subtract_background(corr::correlate(syn, o)), train);
    io::Table d = base_table(c, "coherent-pulse G2, filtered");
    d.add_header("bandwidth_mhz", c.bandwidth_g2_mhz);
    d.add_header("expected_center_ratio", expect.center_ratio);
    d.add_header("synthetic_center_ratio", meas.center_ratio);
    d.add_header("synthetic_records", std::to_string(meas.n_averages));
    d.columns = {"tau_ns", "expected_g2_normalized", "synthetic_g2_normalized"};
    for (std::size_t i = 0; i < expect.tau_ns.size(); ++i)
        d.add_row({expect.tau_ns[i], expect.g2_normalized[i], meas.g2_normalized[i]});
    save(d, out_path(g, "fig5d_g2_coherent.csv"));
    std::cout << "single-photon center/side = " << num(pi_pulse.g2_ratio) << "\ncoherent expected center ratio = "
              << num(expect.center_ratio) << "\n";
}

int exit_code(const std::string& category) {
    if (category == "ConfigError") return 2;
    if (category == "IOError") return 3;
    if (category == "FormatError") return 4;
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"qpsim: tunable transmon single-photon source toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "Run configuration file (defaults: built-in parameter set)");
    app.add_option("--out", g.out_dir, "Output directory for CSV and report files")->capture_default_str();
    app.add_option("--seed", g.seed, "Random seed, overrides run.seed");
    app.add_option("--workers", g.workers, "Worker threads, overrides run.workers")->envname("QPSIM_WORKERS");

    auto* spectrum = app.add_subcommand("spectrum", "Transition frequencies and 1/f dephasing over a flux range");
    SpectrumArgs sa;
    spectrum->add_option("--flux-min", sa.flux_min, "First flux bias, Phi0")->capture_default_str();
    spectrum->add_option("--flux-max", sa.flux_max, "Last flux bias, Phi0")->capture_default_str();
    spectrum->add_option("--points", sa.points, "Number of flux points")->capture_default_str();

    auto* budget = app.add_subcommand("budget", "Photon-generation efficiency budget from the [budget] section");

    auto* rabi = app.add_subcommand("rabi", "Emission traces over a Rabi-angle sweep");
    RabiArgs ra;
    rabi->add_option("--theta-min", ra.theta_min_pi, "First Rabi angle, units of pi")->capture_default_str();
    rabi->add_option("--theta-max", ra.theta_max_pi, "Last Rabi angle, units of pi")->capture_default_str();
    rabi->add_option("--points", ra.points, "Number of angles")->capture_default_str();
    rabi->add_option("--t-end", ra.t_end, "Trace length, ns")->capture_default_str();
    rabi->add_option("--dt", ra.dt, "Output spacing, ns")->capture_default_str();
    rabi->add_option("--bandwidth", ra.bandwidth, "Detection bandwidth, MHz (0: off; default detection.rabi_bandwidth)");

    auto* refl = app.add_subcommand("reflection", "Reflection coefficient over drive power and detuning");
    ReflectionArgs rf;
    refl->add_option("--power-min", rf.power_min, "Lowest power, dBm")->capture_default_str();
    refl->add_option("--power-max", rf.power_max, "Highest power, dBm")->capture_default_str();
    refl->add_option("--power-step", rf.power_step, "Power step, dB")->capture_default_str();
    refl->add_option("--detunings", rf.detunings, "Detuning points per power")->capture_default_str();
    refl->add_option("--span", rf.span, "Detuning half-span in units of Gamma2")->capture_default_str();
    refl->add_option("--noise", rf.noise, "Complex Gaussian noise rms added to r")->capture_default_str();
    refl->add_option("--omega2-per-watt", rf.omega2_per_watt, "Drive calibration Omega^2/W, (rad/us)^2/W");

    auto* corrs = app.add_subcommand("correlations", "Engine G1/G2 for a two-pulse train (quantum regression)");
    CorrelationsArgs ca;
    corrs->add_option("--theta", ca.theta_pi, "Rabi angle, units of pi (default pulse.theta)");
    corrs->add_option("--bandwidth", ca.bandwidth, "Detection bandwidth, MHz (0: off; default detection.g2_bandwidth)");
    corrs->add_option("--dt", ca.dt, "Grid spacing, ns")->capture_default_str();
    corrs->add_option("--window", ca.window, "Emission window integrated over t, ns")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Synthesize a two-channel trace file");
    SynthArgs sy;
    synth->add_option("--source", sy.source, "coherent, thermal or sim-mean (default source.kind)");
    synth->add_option("--records", sy.records, "Signal records (each with a background record)");
    synth->add_option("--mean-photon", sy.mean_photon, "Mean photon number per pulse");
    synth->add_option("--record-len", sy.record_len, "Samples per record");
    synth->add_option("--pulses", sy.pulses, "Pulses per record");
    synth->add_option("--out", sy.out, "Trace file path (default <out dir>/traces.qptb)");

    auto* correlate = app.add_subcommand("correlate", "Gamma1/Gamma2 estimators over trace files");
    CorrelateArgs co;
    correlate->add_option("--in", co.in, "Trace file or directory of .qptb files")->required();
    correlate->add_option("--tau-max", co.tau_max, "Largest lag, samples (default correlator.tau_max)");
    correlate->add_option("--kernel", co.kernel, "direct or fft (default correlator.kernel)");
    correlate->add_option("--resume", co.resume, "Resume from this checkpoint file");
    correlate->add_option("--checkpoint", co.checkpoint, "Write checkpoints to this file");
    correlate->add_option("--checkpoint-every", co.checkpoint_every, "Records between checkpoints (0: end only)")
        ->capture_default_str();
    correlate->add_option("--stop-after", co.stop_after, "Process at most this many records (0: all)")->capture_default_str();
    correlate->add_option("--bandwidth", co.bandwidth, "Digital detection bandwidth, MHz (0: off)");
    correlate->add_option("--half-width", co.half_width, "Peak window half-width, samples (-1: period/4)")
        ->capture_default_str();

    auto* fr = app.add_subcommand("fit-reflection", "Joint reflection fit over a power x detuning CSV");
    FitReflectionArgs fra;
    fr->add_option("--in", fra.in, "CSV from 'reflection'")->required();
    fr->add_option("--omega2-per-watt", fra.omega2_per_watt, "Drive calibration; enables the Gamma1 estimate");
    fr->add_option("--mc", fra.mc_trials, "Normalization Monte-Carlo trials (0: off)")->capture_default_str();
    fr->add_option("--amp-jitter", fra.amp_jitter, "Relative amplitude jitter for --mc")->capture_default_str();
    fr->add_option("--phase-jitter", fra.phase_jitter_deg, "Phase jitter for --mc, degrees")->capture_default_str();

    auto* fsat = app.add_subcommand("fit-saturation", "Fit y = A / (1 + k W)");
    FitSaturationArgs fsa;
    fsat->add_option("--in", fsa.in, "CSV with power and value columns")->required();
    fsat->add_option("--x-column", fsa.x_column, "Power column, W")->capture_default_str();
    fsat->add_option("--y-column", fsa.y_column, "Value column")->capture_default_str();

    auto* fdec = app.add_subcommand("fit-decay", "Exponential decay fit of an emission trace");
    FitDecayArgs fda;
    fdec->add_option("--in", fda.in, "CSV with a time column")->required();
    fdec->add_option("--kind", fda.kind, "amplitude or power")->capture_default_str();
    fdec->add_option("--time-column", fda.time_column, "Time column, ns")->capture_default_str();
    fdec->add_option("--value-column", fda.value_column, "Value column (default power or amp_abs)");
    fdec->add_option("--theta", fda.theta, "Trace to use when the CSV holds several, units of pi");
    fdec->add_option("--t-start", fda.t_start, "Window start, ns")->capture_default_str();
    fdec->add_option("--t-end", fda.t_end, "Window end, ns (default: last sample)")->capture_default_str();

    auto* repro = app.add_subcommand("reproduce", "Per-panel CSVs for a figure from the built-in parameters");
    std::string figure;
    repro->add_option("figure", figure, "fig2b, fig2c, fig3, fig4 or fig5")
        ->required()
        ->check(CLI::IsMember({"fig2b", "fig2c", "fig3", "fig4", "fig5"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*spectrum) run_spectrum(g, sa);
        else if (*budget) run_budget(g);
        else if (*rabi) run_rabi(g, ra);
        else if (*refl) run_reflection(g, rf);
        else if (*corrs) run_correlations(g, ca);
        else if (*synth) run_synth(g, sy);
        else if (*correlate) run_correlate(g, co);
        else if (*fr) run_fit_reflection(g, fra);
        else if (*fsat) run_fit_saturation(g, fsa);
        else if (*fdec) run_fit_decay(g, fda);
        else if (*repro) {
            if (figure == "fig2b") reproduce_fig2(g, true);
            else if (figure == "fig2c") reproduce_fig2(g, false);
            else if (figure == "fig3") reproduce_fig3(g);
            else if (figure == "fig4") reproduce_fig4(g);
            else reproduce_fig5(g);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return exit_code(std::string(e.category()));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
