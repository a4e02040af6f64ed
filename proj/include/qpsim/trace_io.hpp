// trace_io.hpp: two-channel IF trace batches and the QPTB binary format.
//
// File layout (little-endian):
//   "QPTB" | u16 version | u32 header bytes | UTF-8 "key=value\n" header |
//   per record pair: signal A, signal B, background A, background B,
//   each record_len samples of interleaved float32 I, Q.
// n_records counts signal records; the file holds 2*n_records of each channel.

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace qpsim::chain {

using sample = std::complex<float>;

struct ChainConfig {
    double f_if_mhz{25.0};
    double fs_msps{250.0};
    double noise_temp_K{0.0};  // per-channel added noise, referred to the input
    std::size_t record_len{0};
    double gain{1.0};
    double carrier_ghz{7.062}; // sets the photon-unit conversion of noise_temp

    void validate() const;
    double dt_ns() const { return 1e3 / fs_msps; }
    /// Added noise in photons per sample, k_B T / (hbar omega).
    double amplifier_photons() const;
};

/// Contiguous records [first, first + count). Each vector holds count*record_len samples.
struct RecordBlock {
    std::size_t first{0};
    std::size_t count{0};
    std::size_t record_len{0};
    std::vector<sample> sig_a, sig_b, bg_a, bg_b;

    void resize(std::size_t first_, std::size_t count_, std::size_t len);
    const sample* record(const std::vector<sample>& v, std::size_t i) const { return v.data() + i * record_len; }
    sample* record(std::vector<sample>& v, std::size_t i) { return v.data() + i * record_len; }
};

struct IQTraceBatch {
    ChainConfig cfg;
    std::uint64_t seed{0};
    std::map<std::string, std::string> extra; // further header keys, echoed verbatim
    RecordBlock records;                      // first == 0

    std::size_t n_records() const { return records.count; }
    bool operator==(const IQTraceBatch& o) const;
};

/// Pull interface for the correlator. fetch is called from one thread at a time.
class RecordSource {
public:
    virtual ~RecordSource() = default;
    virtual std::size_t n_records() const = 0;
    virtual std::size_t record_len() const = 0;
    virtual const ChainConfig& config() const = 0;
    virtual void fetch(std::size_t first, std::size_t count, RecordBlock& out) = 0;
};

class BatchSource final : public RecordSource {
public:
    explicit BatchSource(const IQTraceBatch& b) : batch_(b) {}
    std::size_t n_records() const override { return batch_.n_records(); }
    std::size_t record_len() const override { return batch_.records.record_len; }
    const ChainConfig& config() const override { return batch_.cfg; }
    void fetch(std::size_t first, std::size_t count, RecordBlock& out) override;

private:
    const IQTraceBatch& batch_;
};

constexpr std::uint16_t kFormatVersion = 1;

void write_batch(const IQTraceBatch& batch, const std::string& path);
IQTraceBatch read_batch(const std::string& path);

/// Streams records from a trace file without loading it whole.
class TraceFileReader final : public RecordSource {
public:
    explicit TraceFileReader(const std::string& path);
    std::size_t n_records() const override { return n_records_; }
    std::size_t record_len() const override { return cfg_.record_len; }
    const ChainConfig& config() const override { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    const std::map<std::string, std::string>& extra() const { return extra_; }
    void fetch(std::size_t first, std::size_t count, RecordBlock& out) override;

private:
    std::string path_;
    std::ifstream in_;
    ChainConfig cfg_;
    std::uint64_t seed_{0};
    std::size_t n_records_{0};
    std::map<std::string, std::string> extra_;
    std::streamoff data_offset_{0};
};

/// Several trace files read back-to-back as one record sequence. Files must
/// share fs, f_if and record_len.
class MultiFileSource final : public RecordSource {
public:
    explicit MultiFileSource(const std::vector<std::string>& paths);
    std::size_t n_records() const override { return total_; }
    std::size_t record_len() const override { return readers_.front()->record_len(); }
    const ChainConfig& config() const override { return readers_.front()->config(); }
    void fetch(std::size_t first, std::size_t count, RecordBlock& out) override;

private:
    std::vector<std::unique_ptr<TraceFileReader>> readers_;
    std::vector<std::size_t> offsets_;
    std::size_t total_{0};
};

} // namespace qpsim::chain
