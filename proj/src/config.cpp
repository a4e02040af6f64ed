#include "qpsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "default_conf.hpp"
#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"

namespace qpsim::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

} // namespace

IniFile IniFile::parse(const std::string& text, const std::string& origin) {
    IniFile f;
    f.origin_ = origin;
    std::istringstream is(text);
    std::string section;
    int lineno = 0;
    for (std::string line; std::getline(is, line);) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto where = origin + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ConfigError(where + ": empty section name");
            f.data_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        if (section.empty()) throw ConfigError(where + ": key outside of any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (f.data_[section].count(key)) throw ConfigError(where + ": duplicate key '" + section + "." + key + "'");
        f.data_[section][key] = val;
    }
    return f;
}

IniFile IniFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

bool IniFile::has(const std::string& s, const std::string& k) const {
    const auto it = data_.find(s);
    return it != data_.end() && it->second.count(k) > 0;
}

std::optional<std::string> IniFile::raw(const std::string& s, const std::string& k) const {
    const auto it = data_.find(s);
    if (it == data_.end()) return std::nullopt;
    const auto jt = it->second.find(k);
    if (jt == it->second.end()) return std::nullopt;
    return jt->second;
}

void IniFile::set(const std::string& s, const std::string& k, const std::string& v) { data_[s][k] = v; }

IniFile::Quantity IniFile::quantity(const std::string& s, const std::string& k) const {
    const auto v = raw(s, k);
    const std::string& text = *v;
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": " + s + "." + k + " = '" + text + "' is not a number");
    }
    if (!std::isfinite(x)) throw ConfigError(origin_ + ": " + s + "." + k + " is not finite");
    return {x, trim(text.substr(pos))};
}

std::string IniFile::get_string(const std::string& s, const std::string& k, const std::string& def) const {
    return raw(s, k).value_or(def);
}

double IniFile::get_number(const std::string& s, const std::string& k, double def) const {
    if (!has(s, k)) return def;
    const auto q = quantity(s, k);
    if (!q.unit.empty()) throw ConfigError(origin_ + ": " + s + "." + k + " is dimensionless, got unit '" + q.unit + "'");
    return q.value;
}

long IniFile::get_int(const std::string& s, const std::string& k, long def) const {
    const double v = get_number(s, k, static_cast<double>(def));
    if (v != std::floor(v)) throw ConfigError(origin_ + ": " + s + "." + k + " must be an integer");
    return static_cast<long>(v);
}

namespace {

double scale_for(const std::string& unit, std::initializer_list<std::pair<const char*, double>> table,
                 const std::string& what) {
    for (const auto& [name, f] : table)
        if (unit == name) return f;
    std::string list;
    for (const auto& [name, f] : table) list += std::string(list.empty() ? "" : ", ") + name;
    throw ConfigError(what + ": unit '" + unit + "' is not one of " + list);
}

} // namespace

double IniFile::get_frequency_mhz(const std::string& s, const std::string& k, double def) const {
    if (!has(s, k)) return def;
    const auto q = quantity(s, k);
    return q.value * scale_for(q.unit, {{"Hz", 1e-6}, {"kHz", 1e-3}, {"MHz", 1.0}, {"GHz", 1e3}}, s + "." + k);
}

double IniFile::get_time_ns(const std::string& s, const std::string& k, double def) const {
    if (!has(s, k)) return def;
    const auto q = quantity(s, k);
    return q.value * scale_for(q.unit, {{"ps", 1e-3}, {"ns", 1.0}, {"us", 1e3}, {"ms", 1e6}, {"s", 1e9}}, s + "." + k);
}

double IniFile::get_temperature_k(const std::string& s, const std::string& k, double def) const {
    if (!has(s, k)) return def;
    const auto q = quantity(s, k);
    return q.value * scale_for(q.unit, {{"mK", 1e-3}, {"K", 1.0}}, s + "." + k);
}

double IniFile::get_power_w(const std::string& s, const std::string& k, double def) const {
    if (!has(s, k)) return def;
    const auto q = quantity(s, k);
    if (q.unit == "dBm") return units::dbm_to_watt(q.value);
    return q.value * scale_for(q.unit, {{"W", 1.0}, {"mW", 1e-3}, {"dBm", 0.0}}, s + "." + k);
}

double IniFile::get_angle_rad(const std::string& s, const std::string& k, double def) const {
    if (!has(s, k)) return def;
    const auto q = quantity(s, k);
    if (q.unit.empty()) return q.value;
    return q.value * scale_for(q.unit, {{"rad", 1.0}, {"deg", units::pi / 180.0}, {"pi", units::pi}}, s + "." + k);
}

std::vector<std::string> IniFile::echo() const {
    std::vector<std::string> out;
    for (const auto& [s, kv] : data_)
        for (const auto& [k, v] : kv) out.push_back(s + "." + k + " = " + v);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

const std::map<std::string, std::vector<std::string>>& known_keys() {
    static const std::map<std::string, std::vector<std::string>> k = {
        {"device", {"ej_max", "ec", "flux", "lambda_12", "a_phi_sqrt", "zeta"}},
        {"rates", {"gamma1", "gamma2", "eta"}},
        {"pulse", {"sigma", "truncation", "detuning", "theta", "center"}},
        {"train", {"count", "period"}},
        {"chain", {"f_if", "fs", "noise_temp", "record_len", "gain", "carrier"}},
        {"source", {"kind", "sigma", "mean_photon", "offset", "idle_photons", "records"}},
        {"correlator", {"tau_max", "kernel", "bandwidth", "workers"}},
        {"detection", {"bandwidth_rabi", "bandwidth_g2"}},
        {"budget", {"alpha_p", "alpha_c2", "beta", "dt_min", "carrier", "t1e", "gamma1n"}},
        {"run", {"seed", "workers"}},
    };
    return k;
}

} // namespace

RunConfig from_ini(const IniFile& ini) {
    for (const auto& line : ini.echo()) {
        const auto dot = line.find('.');
        const auto eq = line.find(" = ");
        const std::string s = line.substr(0, dot);
        const std::string k = line.substr(dot + 1, eq - dot - 1);
        const auto it = known_keys().find(s);
        if (it == known_keys().end()) throw ConfigError("unknown config section [" + s + "]");
        if (std::find(it->second.begin(), it->second.end(), k) == it->second.end()) {
            throw ConfigError("unknown config key " + s + "." + k);
        }
    }

    RunConfig c;
    c.ini = ini;
    c.qubit.ej_max_ghz = ini.get_frequency_mhz("device", "ej_max", 16800.0) * 1e-3;
    c.qubit.ec_ghz = ini.get_frequency_mhz("device", "ec", 415.0) * 1e-3;
    c.qubit.flux = ini.get_number("device", "flux", 0.0);
    c.qubit.lambda_12 = ini.get_number("device", "lambda_12", std::sqrt(2.0));
    c.noise.a_phi_sqrt = ini.get_number("device", "a_phi_sqrt", 1.5e-6);
    c.noise.zeta = ini.get_number("device", "zeta", 3.5);

    c.rates_gamma1_mhz = ini.get_frequency_mhz("rates", "gamma1", 7.02);
    c.rates_gamma2_mhz = ini.get_frequency_mhz("rates", "gamma2", 3.54);
    c.rates_eta = ini.get_number("rates", "eta", 1.0);
    if (!(c.rates_eta > 0.0 && c.rates_eta <= 1.0)) throw ConfigError("rates.eta must lie in (0, 1]");
    try {
        c.rates = device::Rates::from_cyclic_mhz(c.rates_gamma1_mhz, c.rates_gamma2_mhz);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("rates: ") + e.what());
    }
    const double g1 = c.rates.gamma1_e;
    c.rates.gamma1_e = c.rates_eta * g1;
    c.rates.gamma1_n = g1 - c.rates.gamma1_e;

    c.pulse.sigma_ns = ini.get_time_ns("pulse", "sigma", 2.0);
    c.pulse.truncation = ini.get_number("pulse", "truncation", 3.0);
    c.pulse.detuning = units::mhz_to_rad_per_ns(ini.get_frequency_mhz("pulse", "detuning", 0.0));
    c.pulse.center_ns = ini.get_time_ns("pulse", "center", c.pulse.truncation * c.pulse.sigma_ns);
    c.theta = ini.get_angle_rad("pulse", "theta", units::pi);

    c.train.count = static_cast<int>(ini.get_int("train", "count", 16));
    c.train.period_ns = ini.get_time_ns("train", "period", 512.0);

    c.chain.f_if_mhz = ini.get_frequency_mhz("chain", "f_if", 25.0);
    c.chain.fs_msps = ini.get_frequency_mhz("chain", "fs", 250.0);
    c.chain.noise_temp_K = ini.get_temperature_k("chain", "noise_temp", 0.0);
    const long rl = ini.get_int("chain", "record_len", 2048);
    if (rl <= 0) throw ConfigError("chain.record_len must be positive");
    c.chain.record_len = static_cast<std::size_t>(rl);
    c.chain.gain = ini.get_number("chain", "gain", 1.0);
    c.chain.carrier_ghz = ini.get_frequency_mhz("chain", "carrier", 7062.0) * 1e-3;

    c.source_kind = chain::parse_source_kind(ini.get_string("source", "kind", "coherent"));
    c.source_sigma_ns = ini.get_time_ns("source", "sigma", 8.0);
    c.source_mean_photon = ini.get_number("source", "mean_photon", 1.0);
    c.idle_photons = ini.get_number("source", "idle_photons", 0.0);
    const long nrec = ini.get_int("source", "records", 1000);
    if (nrec <= 0) throw ConfigError("source.records must be positive");
    c.n_records = static_cast<std::size_t>(nrec);
    const double offset = ini.get_time_ns("source", "offset", 64.0);

    const long tm = ini.get_int("correlator", "tau_max", 600);
    if (tm < 0) throw ConfigError("correlator.tau_max must be >= 0");
    c.correlator.tau_max = static_cast<std::size_t>(tm);
    c.correlator.kernel = corr::parse_kernel(ini.get_string("correlator", "kernel", "fft"));
    c.correlator.bandwidth_mhz = ini.get_frequency_mhz("correlator", "bandwidth", 0.0);

    c.bandwidth_rabi_mhz = ini.get_frequency_mhz("detection", "bandwidth_rabi", 25.0);
    c.bandwidth_g2_mhz = ini.get_frequency_mhz("detection", "bandwidth_g2", 12.5);

    c.budget.alpha_p = ini.get_number("budget", "alpha_p", 0.01);
    c.budget.alpha_c2 = ini.get_number("budget", "alpha_c2", 0.01);
    c.budget.beta = ini.get_number("budget", "beta", 0.0);
    c.budget.dt_min_ns = ini.get_time_ns("budget", "dt_min", 2.0);
    c.budget.omega = units::two_pi * ini.get_frequency_mhz("budget", "carrier", 7000.0) * 1e6;
    const double t1e_ns = ini.get_time_ns("budget", "t1e", 200.0);
    if (!(t1e_ns > 0.0)) throw ConfigError("budget.t1e must be positive");
    c.budget.gamma1_e = 1e3 / t1e_ns;
    c.budget.gamma1_n = units::mhz_to_rad_per_us(ini.get_frequency_mhz("budget", "gamma1n", 0.0));

    const long seed = ini.get_int("run", "seed", 1);
    if (seed < 0) throw ConfigError("run.seed must be >= 0");
    c.seed = static_cast<std::uint64_t>(seed);
    const long w = ini.get_int("run", "workers", ini.get_int("correlator", "workers", 1));
    if (w <= 0) throw ConfigError("workers must be positive");
    c.workers = static_cast<unsigned>(w);
    c.correlator.workers = c.workers;

    // Pulse amplitude for the requested Rabi angle.
    try {
        c.pulse.validate();
        c.pulse = engine::pulse_for_theta(c.pulse, c.theta);
    } catch (const Error& e) {
        throw ConfigError(std::string("pulse: ") + e.what());
    }
    c.train.pulse = c.pulse;
    c.source_offset_ns = offset;
    c.validate();
    return c;
}

void RunConfig::validate() const {
    try {
        if (!(qubit.ej_max_ghz > 0.0) || !(qubit.ec_ghz > 0.0)) throw ConfigError("device energies must be positive");
        (void)device::transition_frequencies(qubit);
        noise.validate();
        rates.validate();
        pulse.validate();
        train.validate();
        chain.validate();
        budget.validate();
        if (!(source_sigma_ns > 0.0)) throw ConfigError("source.sigma must be positive");
        if (!(source_mean_photon >= 0.0)) throw ConfigError("source.mean_photon must be >= 0");
        if (!(idle_photons >= 0.0)) throw ConfigError("source.idle_photons must be >= 0");
        if (!(bandwidth_rabi_mhz > 0.0) || !(bandwidth_g2_mhz > 0.0)) throw ConfigError("detection bandwidths must be positive");
        if (!(correlator.bandwidth_mhz >= 0.0)) throw ConfigError("correlator.bandwidth must be >= 0");
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("invalid configuration (") + std::string(e.category()) + "): " + e.what());
    }
}

std::vector<std::pair<std::string, std::string>> RunConfig::header() const {
    std::vector<std::pair<std::string, std::string>> h;
    h.emplace_back("gamma1_mhz", fmt(units::rad_per_us_to_mhz(rates.gamma1())));
    h.emplace_back("gamma2_mhz", fmt(units::rad_per_us_to_mhz(rates.gamma2())));
    h.emplace_back("gamma1e_mhz", fmt(units::rad_per_us_to_mhz(rates.gamma1_e)));
    h.emplace_back("gamma_phi_mhz", fmt(units::rad_per_us_to_mhz(rates.gamma_phi)));
    const auto f = device::transition_frequencies(qubit);
    h.emplace_back("omega01_ghz", fmt(f.omega01_ghz));
    h.emplace_back("anharmonicity_mhz", fmt(f.anharmonicity_ghz * 1e3));
    h.emplace_back("lambda_12", fmt(qubit.lambda_12));
    h.emplace_back("sigma_ns", fmt(pulse.sigma_ns));
    h.emplace_back("truncation_sigma", fmt(pulse.truncation));
    h.emplace_back("seed", std::to_string(seed));
    for (const auto& line : ini.echo()) {
        const auto eq = line.find(" = ");
        h.emplace_back("config." + line.substr(0, eq), line.substr(eq + 3));
    }
    return h;
}

engine::PulseTrain RunConfig::synth_train() const {
    engine::PulseTrain t = train;
    t.pulse.center_ns = source_offset_ns;
    return t;
}

chain::SourceSpec RunConfig::source() const {
    if (source_kind == chain::SourceKind::sim_mean) {
        throw ConfigError("source.kind = sim-mean needs an engine emission record, not a config entry");
    }
    return chain::SourceSpec::gaussian(source_kind, source_sigma_ns, source_mean_photon);
}

const std::string& default_text() {
    static const std::string t = kDefaultConfig;
    return t;
}

RunConfig defaults() { return from_ini(IniFile::parse(default_text(), "<defaults>")); }

RunConfig load(const std::string& path) { return from_ini(IniFile::load(path)); }

} // namespace qpsim::config
