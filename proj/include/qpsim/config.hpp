// config.hpp: INI-style run configuration with unit suffixes.
//
//   [section]
//   key = value [unit]     # comment
//
// Units: frequency Hz kHz MHz GHz; time ps ns us ms s; temperature mK K;
// power dBm W mW; angle rad deg pi. Dimensionless keys take no unit.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qpsim/correlator.hpp"
#include "qpsim/detection_chain.hpp"
#include "qpsim/device_model.hpp"
#include "qpsim/pulse.hpp"

namespace qpsim::config {

class IniFile {
public:
    static IniFile parse(const std::string& text, const std::string& origin = "<string>");
    static IniFile load(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> raw(const std::string& section, const std::string& key) const;
    void set(const std::string& section, const std::string& key, const std::string& value);

    std::string get_string(const std::string& s, const std::string& k, const std::string& def) const;
    double get_number(const std::string& s, const std::string& k, double def) const; // no unit allowed
    long get_int(const std::string& s, const std::string& k, long def) const;
    double get_frequency_mhz(const std::string& s, const std::string& k, double def_mhz) const;
    double get_time_ns(const std::string& s, const std::string& k, double def_ns) const;
    double get_temperature_k(const std::string& s, const std::string& k, double def_k) const;
    double get_power_w(const std::string& s, const std::string& k, double def_w) const;
    double get_angle_rad(const std::string& s, const std::string& k, double def_rad) const;

    /// All entries as "section.key = value" lines, sorted.
    std::vector<std::string> echo() const;

private:
    std::string origin_;
    std::map<std::string, std::map<std::string, std::string>> data_;
    struct Quantity {
        double value;
        std::string unit;
    };
    Quantity quantity(const std::string& s, const std::string& k) const;
};

struct RunConfig {
    device::QubitParams qubit;
    device::FluxNoiseModel noise;
    device::Rates rates;
    double rates_gamma1_mhz{7.02};
    double rates_gamma2_mhz{3.54};
    double rates_eta{1.0};

    engine::Pulse pulse;      // omega0 from theta
    double theta{3.141592653589793};
    engine::PulseTrain train;

    chain::ChainConfig chain;
    chain::SourceKind source_kind{chain::SourceKind::coherent};
    double source_sigma_ns{8.0};
    double source_mean_photon{1.0};
    double source_offset_ns{64.0}; // first pulse centre in synthetic records
    double idle_photons{0.0};
    std::size_t n_records{1000};

    corr::CorrelatorOptions correlator;

    double bandwidth_rabi_mhz{25.0};
    double bandwidth_g2_mhz{12.5};

    device::BudgetInput budget;

    std::uint64_t seed{1};
    unsigned workers{1};

    IniFile ini; // as loaded, for echoing

    /// The pulse train as placed in synthetic records.
    engine::PulseTrain synth_train() const;
    chain::SourceSpec source() const;

    /// Validates every section against its module invariants.
    void validate() const;
    /// Parameter echo for CSV headers.
    std::vector<std::pair<std::string, std::string>> header() const;
};

RunConfig from_ini(const IniFile& ini);
RunConfig load(const std::string& path);
/// Built-in defaults (the shipped defaults.conf content).
RunConfig defaults();
const std::string& default_text();

} // namespace qpsim::config
