// detection_chain.hpp: synthetic two-channel heterodyne records.
//
// Field samples are in sqrt(photon) units: a pulse with mean_photon = N has
// sum |s[n]|^2 = N over its samples. Each channel gets an independent
// complex Gaussian floor of 1/2 photon per sample (the vacuum share entering
// through that arm of the detection chain) plus k_B T / (hbar omega) photons
// per sample of amplifier noise. The idle splitter port v is given in the
// P-representation: vacuum is v = 0, a thermal idle port adds CN(0, n_idle)
// per sample to both arms with opposite signs.
//
// Classical synthesis cannot antibunch. It exists to validate the estimators
// on sources with known g2 (coherent 1, thermal 2); quantum predictions come
// from the engine.

#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qpsim/lindblad.hpp"
#include "qpsim/pulse.hpp"
#include "qpsim/trace_io.hpp"

namespace qpsim::chain {

enum class SourceKind { coherent, thermal, sim_mean };

std::string to_string(SourceKind k);
SourceKind parse_source_kind(const std::string& s);

struct SourceSpec {
    SourceKind kind{SourceKind::coherent};
    /// f(t) relative to the pulse center, 1/sqrt(ns), with integral |f|^2 dt = 1.
    std::function<std::complex<double>(double)> envelope;
    double half_width_ns{0.0}; // |f| negligible beyond this
    double mean_photon{1.0};
    double phase{0.0};         // coherent and sim-mean carrier phase

    void validate() const;

    /// Gaussian amplitude exp(-t^2 / (2 sigma^2)), normalized.
    static SourceSpec gaussian(SourceKind kind, double sigma_ns, double mean_photon);
    /// Engine mean field <a(t)>, linearly interpolated and normalized.
    /// mean_photon becomes the integral of |<a>|^2.
    static SourceSpec from_emission(const engine::EmissionRecord& rec, double center_ns);
};

struct SynthOptions {
    double idle_photons{0.0}; // thermal occupation of the idle port per sample
    unsigned workers{1};
};

/// Per-record seed: splitmix64 of (seed, stream index). Stream 2i is signal
/// record i, stream 2i+1 its background.
std::uint64_t record_seed(std::uint64_t seed, std::uint64_t stream);

/// Generates records on demand; the output depends only on (cfg, src, train,
/// seed, record index).
class Synthesizer final : public RecordSource {
public:
    Synthesizer(const ChainConfig& cfg, SourceSpec src, const engine::PulseTrain& train,
                std::size_t n_records, std::uint64_t seed, SynthOptions opts = {});

    std::size_t n_records() const override { return n_records_; }
    std::size_t record_len() const override { return cfg_.record_len; }
    const ChainConfig& config() const override { return cfg_; }
    void fetch(std::size_t first, std::size_t count, RecordBlock& out) override;

    /// Noise-free field per record (before splitter, mixing and noise) in
    /// photon units, for a unit source amplitude.
    const std::vector<std::complex<double>>& unit_field() const { return unit_field_; }

private:
    void make_record(std::size_t index, sample* sa, sample* sb, sample* ba, sample* bb) const;

    ChainConfig cfg_;
    SourceSpec src_;
    std::size_t n_records_;
    std::uint64_t seed_;
    SynthOptions opts_;
    std::size_t n_pulses_{0};
    std::vector<std::vector<std::complex<double>>> pulse_fields_; // per pulse, unit amplitude
    std::vector<std::complex<double>> unit_field_;
    std::vector<std::complex<double>> mixer_;
};

IQTraceBatch synthesize(const ChainConfig& cfg, const SourceSpec& src, const engine::PulseTrain& train,
                        std::size_t n_records, std::uint64_t seed, SynthOptions opts = {});

} // namespace qpsim::chain
