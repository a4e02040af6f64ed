#include "qpsim/detection_chain.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"

namespace qpsim::chain {

using cplx = std::complex<double>;

std::string to_string(SourceKind k) {
    switch (k) {
    case SourceKind::coherent: return "coherent";
    case SourceKind::thermal: return "thermal";
    case SourceKind::sim_mean: return "sim-mean";
    }
    return "?";
}

SourceKind parse_source_kind(const std::string& s) {
    if (s == "coherent") return SourceKind::coherent;
    if (s == "thermal") return SourceKind::thermal;
    if (s == "sim-mean") return SourceKind::sim_mean;
    throw ConfigError("unknown source kind '" + s + "' (coherent, thermal, sim-mean)");
}

void SourceSpec::validate() const {
    if (!envelope) throw ConfigError("source envelope is empty");
    if (!(mean_photon >= 0.0) || !std::isfinite(mean_photon)) throw ConfigError("mean_photon must be >= 0");
    if (!(half_width_ns > 0.0)) throw ConfigError("source half-width must be positive");
}

SourceSpec SourceSpec::gaussian(SourceKind kind, double sigma_ns, double mean_photon) {
    if (!(sigma_ns > 0.0)) throw ConfigError("source sigma must be positive");
    SourceSpec s;
    s.kind = kind;
    s.mean_photon = mean_photon;
    s.half_width_ns = 6.0 * sigma_ns;
    const double norm = std::pow(units::pi * sigma_ns * sigma_ns, -0.25);
    s.envelope = [sigma_ns, norm](double t) { return cplx(norm * std::exp(-t * t / (2.0 * sigma_ns * sigma_ns)), 0.0); };
    return s;
}

SourceSpec SourceSpec::from_emission(const engine::EmissionRecord& rec, double center_ns) {
    if (rec.times.size() < 2) throw ConfigError("emission record too short for a source");
    double e = 0.0;
    for (std::size_t i = 1; i < rec.times.size(); ++i) {
        e += 0.5 * (std::norm(rec.amp[i]) + std::norm(rec.amp[i - 1])) * (rec.times[i] - rec.times[i - 1]);
    }
    if (!(e > 0.0)) throw ConfigError("emission record carries no mean field");
    SourceSpec s;
    s.kind = SourceKind::sim_mean;
    s.mean_photon = e;
    s.half_width_ns = std::max(center_ns - rec.times.front(), rec.times.back() - center_ns);
    const double scale = 1.0 / std::sqrt(e);
    auto times = rec.times;
    auto amp = rec.amp;
    s.envelope = [times, amp, center_ns, scale](double t) {
        const double x = t + center_ns;
        if (x < times.front() || x > times.back()) return cplx(0.0, 0.0);
        const auto it = std::upper_bound(times.begin(), times.end(), x);
        const auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - times.begin())) - 1;
        if (i + 1 >= times.size()) return scale * amp.back();
        const double w = (x - times[i]) / (times[i + 1] - times[i]);
        return scale * ((1.0 - w) * amp[i] + w * amp[i + 1]);
    };
    return s;
}

std::uint64_t record_seed(std::uint64_t seed, std::uint64_t stream) {
    auto mix = [](std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(seed + 0x9e3779b97f4a7c15ULL) + 0x9e3779b97f4a7c15ULL * (stream + 1));
}

Synthesizer::Synthesizer(const ChainConfig& cfg, SourceSpec src, const engine::PulseTrain& train,
                         std::size_t n_records, std::uint64_t seed, SynthOptions opts)
    : cfg_(cfg), src_(std::move(src)), n_records_(n_records), seed_(seed), opts_(opts) {
    cfg_.validate();
    src_.validate();
    train.validate();
    if (!(opts_.idle_photons >= 0.0)) throw ConfigError("idle-port occupation must be >= 0");
    const double dt = cfg_.dt_ns();
    const double duration = static_cast<double>(cfg_.record_len) * dt;
    const double first = train.pulse_at(0).center_ns - src_.half_width_ns;
    const double last = train.pulse_at(train.count - 1).center_ns + src_.half_width_ns;
    if (first < 0.0 || last > duration) {
        throw ConfigError("record of " + std::to_string(duration) + " ns does not cover the pulse train [" +
                          std::to_string(first) + ", " + std::to_string(last) + "] ns");
    }
    const std::size_t L = cfg_.record_len;
    n_pulses_ = static_cast<std::size_t>(train.count);
    pulse_fields_.assign(n_pulses_, std::vector<cplx>(L));
    unit_field_.assign(L, cplx{});
    const double sdt = std::sqrt(dt);
    for (std::size_t k = 0; k < n_pulses_; ++k) {
        const double c = train.pulse_at(static_cast<int>(k)).center_ns;
        for (std::size_t n = 0; n < L; ++n) {
            pulse_fields_[k][n] = src_.envelope(static_cast<double>(n) * dt - c) * sdt;
            unit_field_[n] += pulse_fields_[k][n];
        }
    }
    mixer_.resize(L);
    for (std::size_t n = 0; n < L; ++n) {
        const double t_us = static_cast<double>(n) * dt * 1e-3;
        mixer_[n] = std::polar(1.0, units::two_pi * cfg_.f_if_mhz * t_us);
    }
}

void Synthesizer::make_record(std::size_t index, sample* sa, sample* sb, sample* ba, sample* bb) const {
    const std::size_t L = cfg_.record_len;
    const double floor = 0.5 + cfg_.amplifier_photons();
    const double sd_noise = std::sqrt(0.5 * floor);
    const double sd_idle = std::sqrt(0.5 * opts_.idle_photons);
    const double g = cfg_.gain;
    const double r2 = 1.0 / std::sqrt(2.0);

    // Signal record.
    {
        std::mt19937_64 rng(record_seed(seed_, 2 * static_cast<std::uint64_t>(index)));
        std::normal_distribution<double> nd(0.0, 1.0);
        std::vector<cplx> amps(n_pulses_);
        const double sq = std::sqrt(src_.mean_photon);
        for (auto& a : amps) {
            if (src_.kind == SourceKind::thermal) {
                const double re = nd(rng);
                const double im = nd(rng);
                a = std::sqrt(0.5 * src_.mean_photon) * cplx(re, im);
            } else {
                a = std::polar(sq, src_.phase);
            }
        }
        for (std::size_t n = 0; n < L; ++n) {
            cplx s = 0.0;
            for (std::size_t k = 0; k < n_pulses_; ++k) s += amps[k] * pulse_fields_[k][n];
            cplx v = 0.0;
            if (sd_idle > 0.0) v = cplx(sd_idle * nd(rng), sd_idle * nd(rng));
            const cplx na(sd_noise * nd(rng), sd_noise * nd(rng));
            const cplx nb(sd_noise * nd(rng), sd_noise * nd(rng));
            const cplx a = g * ((s + v) * r2 * mixer_[n] + na);
            const cplx b = g * ((s - v) * r2 * mixer_[n] + nb);
            sa[n] = sample(static_cast<float>(a.real()), static_cast<float>(a.imag()));
            sb[n] = sample(static_cast<float>(b.real()), static_cast<float>(b.imag()));
        }
    }
    // Background record: noise only.
    {
        std::mt19937_64 rng(record_seed(seed_, 2 * static_cast<std::uint64_t>(index) + 1));
        std::normal_distribution<double> nd(0.0, 1.0);
        for (std::size_t n = 0; n < L; ++n) {
            cplx v = 0.0;
            if (sd_idle > 0.0) v = cplx(sd_idle * nd(rng), sd_idle * nd(rng));
            const cplx na(sd_noise * nd(rng), sd_noise * nd(rng));
            const cplx nb(sd_noise * nd(rng), sd_noise * nd(rng));
            const cplx a = g * (v * r2 * mixer_[n] + na);
            const cplx b = g * (-v * r2 * mixer_[n] + nb);
            ba[n] = sample(static_cast<float>(a.real()), static_cast<float>(a.imag()));
            bb[n] = sample(static_cast<float>(b.real()), static_cast<float>(b.imag()));
        }
    }
}

void Synthesizer::fetch(std::size_t first, std::size_t count, RecordBlock& out) {
    if (first + count > n_records_) throw RangeError("record range past end of synthetic run");
    out.resize(first, count, cfg_.record_len);
    const unsigned workers = std::max(1u, std::min<unsigned>(opts_.workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    auto run = [&](unsigned w) {
        for (std::size_t i = w; i < count; i += workers) {
            make_record(first + i, out.record(out.sig_a, i), out.record(out.sig_b, i), out.record(out.bg_a, i),
                        out.record(out.bg_b, i));
        }
    };
    if (workers == 1) {
        run(0);
        return;
    }
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
}

IQTraceBatch synthesize(const ChainConfig& cfg, const SourceSpec& src, const engine::PulseTrain& train,
                        std::size_t n_records, std::uint64_t seed, SynthOptions opts) {
    Synthesizer syn(cfg, src, train, n_records, seed, opts);
    IQTraceBatch b;
    b.cfg = cfg;
    b.seed = seed;
    b.extra["source"] = to_string(src.kind);
    {
        std::ostringstream os;
        os.precision(17);
        os << src.mean_photon;
        b.extra["mean_photon"] = os.str();
    }
    b.extra["pulses"] = std::to_string(train.count);
    {
        std::ostringstream os;
        os.precision(17);
        os << train.period_ns;
        b.extra["period_ns"] = os.str();
    }
    if (opts.idle_photons > 0.0) b.extra["idle_photons"] = std::to_string(opts.idle_photons);
    syn.fetch(0, n_records, b.records);
    return b;
}

} // namespace qpsim::chain
