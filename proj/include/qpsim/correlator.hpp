// correlator.hpp: two-channel correlation estimators over trace records.
//
//   Gamma1(tau) = sum_t A*(t) B(t+tau)
//   Gamma2(tau) = sum_t A*(t) A*(t+tau) B(t+tau) B(t) = sum_t X(t) X(t+tau),  X = A* B
//
// summed within each record and averaged over records, separately for
// signal and background. Gamma2 is a second-order correlation only when the
// idle splitter port is in vacuum.
//
// Reduction order is fixed: within a record the direct kernel sums each lag
// with pairwise_sum over increasing t; across records a CascadeAccumulator
// receives records in index order. Worker count changes scheduling only.

#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "qpsim/pairwise_sum.hpp"
#include "qpsim/pulse.hpp"
#include "qpsim/trace_io.hpp"

namespace qpsim::corr {

using cplx = std::complex<double>;
using chain::sample;

enum class Kernel { direct, fft };
std::string to_string(Kernel k);
Kernel parse_kernel(const std::string& s);

/// Per-record estimators, lags -tau_max..tau_max written to out[tau + tau_max].
void record_gamma1_direct(const sample* a, const sample* b, std::size_t n, std::size_t tau_max, cplx* out);
void record_gamma2_direct(const sample* a, const sample* b, std::size_t n, std::size_t tau_max, cplx* out);

/// Zero-padded FFT evaluation of both estimators for one record. Not
/// bitwise equal to the direct kernel (agrees to rounding).
class FftWorkspace {
public:
    FftWorkspace(std::size_t n, std::size_t tau_max);
    ~FftWorkspace();
    FftWorkspace(const FftWorkspace&) = delete;
    FftWorkspace& operator=(const FftWorkspace&) = delete;

    std::size_t transform_size() const { return m_; }
    void run(const sample* a, const sample* b, cplx* gamma1_out, cplx* gamma2_out);

private:
    std::size_t n_, tau_max_, m_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Smallest 2^a 3^b 5^c 7^d >= n.
std::size_t good_fft_size(std::size_t n);

struct CorrEstimate {
    std::size_t tau_max{0};
    double dt_ns{0.0};
    std::vector<long> tau_samples;
    std::vector<double> tau_ns;
    std::vector<cplx> gamma1, gamma1_bg;
    std::vector<double> gamma2, gamma2_bg;
    std::uint64_t n_averages{0};
    bool has_background{false};
    bool background_subtracted{false};

    // Filled by normalize_g2.
    bool normalized{false};
    std::vector<double> g2_normalized; // gamma2 / mean corrected side-peak height
    double side_area_mean{0.0};
    double center_area{0.0};
    double center_ratio{0.0};          // center area / mean corrected side area
    std::vector<double> side_ratios;   // corrected side areas / their mean
    std::vector<long> side_orders;     // n of each side peak used
    long window_half_width{0};         // samples

    std::size_t index(long tau) const { return static_cast<std::size_t>(tau + static_cast<long>(tau_max)); }
};

struct CorrelatorOptions {
    std::size_t tau_max{256};
    unsigned workers{1};
    Kernel kernel{Kernel::fft};
    std::size_t block_records{0};     // 0: 64 per worker
    std::string checkpoint_path;      // written at block ends when non-empty
    std::size_t checkpoint_every{0};  // records between checkpoints, 0: only at the end
    std::string resume_path;          // start from this state when non-empty
    std::size_t stop_after{0};        // process at most this many records in this run, 0: all
    /// Digital detection bandwidth in MHz, 0: off. When set, each record is
    /// shifted from f_if to baseband and passed through the Butterworth
    /// amplitude kernel before the estimators.
    double bandwidth_mhz{0.0};
};

struct RunStats {
    std::uint64_t records{0};    // processed in this run
    double wall_s{0.0};
    double bytes{0.0};           // input bytes read in this run
    double throughput_mbps() const { return wall_s > 0.0 ? bytes / wall_s / 1e6 : 0.0; }
};

/// Accumulated state; serializable so a run can resume.
struct CorrelatorState {
    std::size_t tau_max{0};
    std::size_t record_len{0};
    Kernel kernel{Kernel::fft};
    double bandwidth_mhz{0.0};
    reduce::CascadeAccumulator signal;     // [gamma1 lags | gamma2 lags]
    reduce::CascadeAccumulator background;

    std::uint64_t next_record() const { return signal.count(); }
    void save(const std::string& path) const;
    static CorrelatorState load(const std::string& path);
};

/// Streams records through the estimator. Throws RangeError when tau_max is
/// not below record_len / 2.
CorrEstimate correlate(chain::RecordSource& src, const CorrelatorOptions& opts, RunStats* stats = nullptr);
CorrEstimate correlate(const chain::IQTraceBatch& batch, const CorrelatorOptions& opts, RunStats* stats = nullptr);

CorrEstimate gamma1(const chain::IQTraceBatch& batch, std::size_t tau_max, Kernel k = Kernel::direct);
CorrEstimate gamma2(const chain::IQTraceBatch& batch, std::size_t tau_max, Kernel k = Kernel::direct);

/// G1 = Gamma1 - Gamma1_bg, G2 = Gamma2 - Gamma2_bg. MissingBackground when absent.
CorrEstimate subtract_background(const CorrEstimate& est);

struct NormalizeOptions {
    long half_width{-1}; // samples; -1: a quarter of the period
    int max_order{0};    // use side peaks with |n| <= max_order, 0: all that fit
};

/// Integrates G2 over windows centred at n * period (n != 0), corrects each
/// for the pulse-pair overlap count / (count - |n|), and divides by their
/// mean. Needs at least two side peaks inside tau_max (InsufficientPeaks).
CorrEstimate normalize_g2(const CorrEstimate& est, const engine::PulseTrain& train, const NormalizeOptions& opts = {});

} // namespace qpsim::corr
