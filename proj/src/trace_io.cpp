#include "qpsim/trace_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"

static_assert(std::endian::native == std::endian::little, "QPTB I/O assumes a little-endian host");

namespace qpsim::chain {

void ChainConfig::validate() const {
    if (!(fs_msps > 0.0)) throw ConfigError("chain: fs must be positive");
    if (!(f_if_mhz >= 0.0)) throw ConfigError("chain: f_if must be non-negative");
    if (!(fs_msps > 2.0 * f_if_mhz)) throw ConfigError("chain: fs must exceed 2*f_if");
    if (!(noise_temp_K >= 0.0)) throw ConfigError("chain: noise temperature must be >= 0");
    if (record_len == 0) throw ConfigError("chain: record_len must be positive");
    if (!(gain > 0.0)) throw ConfigError("chain: gain must be positive");
    if (!(carrier_ghz > 0.0)) throw ConfigError("chain: carrier frequency must be positive");
}

double ChainConfig::amplifier_photons() const {
    return units::k_boltzmann * noise_temp_K / (units::hbar * units::two_pi * carrier_ghz * 1e9);
}

void RecordBlock::resize(std::size_t first_, std::size_t count_, std::size_t len) {
    first = first_;
    count = count_;
    record_len = len;
    const std::size_t n = count_ * len;
    sig_a.resize(n);
    sig_b.resize(n);
    bg_a.resize(n);
    bg_b.resize(n);
}

namespace {

bool same_bits(const std::vector<sample>& a, const std::vector<sample>& b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(sample)) == 0);
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

double parse_double(const std::map<std::string, std::string>& h, const std::string& k) {
    const auto it = h.find(k);
    if (it == h.end()) throw FormatError("header is missing '" + k + "'");
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument(k);
        return v;
    } catch (const std::exception&) {
        throw FormatError("header value for '" + k + "' is not a number");
    }
}

std::uint64_t parse_u64(const std::map<std::string, std::string>& h, const std::string& k) {
    const auto it = h.find(k);
    if (it == h.end()) throw FormatError("header is missing '" + k + "'");
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument(k);
        return v;
    } catch (const std::exception&) {
        throw FormatError("header value for '" + k + "' is not an integer");
    }
}

const char* kReserved[] = {"fs", "f_if", "record_len", "n_records", "seed", "noise_temp_K", "gain", "carrier_ghz"};

} // namespace

bool IQTraceBatch::operator==(const IQTraceBatch& o) const {
    return cfg.f_if_mhz == o.cfg.f_if_mhz && cfg.fs_msps == o.cfg.fs_msps &&
           cfg.noise_temp_K == o.cfg.noise_temp_K && cfg.record_len == o.cfg.record_len &&
           cfg.gain == o.cfg.gain && cfg.carrier_ghz == o.cfg.carrier_ghz && seed == o.seed &&
           extra == o.extra && records.count == o.records.count && records.record_len == o.records.record_len &&
           same_bits(records.sig_a, o.records.sig_a) && same_bits(records.sig_b, o.records.sig_b) &&
           same_bits(records.bg_a, o.records.bg_a) && same_bits(records.bg_b, o.records.bg_b);
}

void BatchSource::fetch(std::size_t first, std::size_t count, RecordBlock& out) {
    if (first + count > batch_.n_records()) throw RangeError("record range past end of batch");
    const std::size_t len = batch_.records.record_len;
    out.resize(first, count, len);
    const auto copy = [&](const std::vector<sample>& src, std::vector<sample>& dst) {
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(first * len), count * len, dst.begin());
    };
    copy(batch_.records.sig_a, out.sig_a);
    copy(batch_.records.sig_b, out.sig_b);
    copy(batch_.records.bg_a, out.bg_a);
    copy(batch_.records.bg_b, out.bg_b);
}

void write_batch(const IQTraceBatch& batch, const std::string& path) {
    batch.cfg.validate();
    const auto& r = batch.records;
    if (r.record_len != batch.cfg.record_len) throw FormatError("batch record length disagrees with its config");
    std::ostringstream hdr;
    hdr << "fs=" << format_double(batch.cfg.fs_msps) << "\n"
        << "f_if=" << format_double(batch.cfg.f_if_mhz) << "\n"
        << "record_len=" << batch.cfg.record_len << "\n"
        << "n_records=" << r.count << "\n"
        << "seed=" << batch.seed << "\n"
        << "noise_temp_K=" << format_double(batch.cfg.noise_temp_K) << "\n"
        << "gain=" << format_double(batch.cfg.gain) << "\n"
        << "carrier_ghz=" << format_double(batch.cfg.carrier_ghz) << "\n";
    for (const auto& [k, v] : batch.extra) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw FormatError("header keys and values must not contain '=' or newlines");
        }
        if (std::find(std::begin(kReserved), std::end(kReserved), k) != std::end(kReserved)) {
            throw FormatError("extra header key '" + k + "' is reserved");
        }
        hdr << k << "=" << v << "\n";
    }
    const std::string h = hdr.str();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IOError("cannot open '" + path + "' for writing");
    os.write("QPTB", 4);
    const std::uint16_t ver = kFormatVersion;
    const auto hlen = static_cast<std::uint32_t>(h.size());
    os.write(reinterpret_cast<const char*>(&ver), sizeof ver);
    os.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    const auto bytes = static_cast<std::streamsize>(r.record_len * sizeof(sample));
    for (std::size_t i = 0; i < r.count; ++i) {
        os.write(reinterpret_cast<const char*>(r.record(r.sig_a, i)), bytes);
        os.write(reinterpret_cast<const char*>(r.record(r.sig_b, i)), bytes);
        os.write(reinterpret_cast<const char*>(r.record(r.bg_a, i)), bytes);
        os.write(reinterpret_cast<const char*>(r.record(r.bg_b, i)), bytes);
    }
    if (!os) throw IOError("write to '" + path + "' failed");
}

TraceFileReader::TraceFileReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IOError("cannot open '" + path + "'");
    char magic[4] = {};
    in_.read(magic, 4);
    if (!in_) throw FormatError("'" + path + "' is too short for a trace file");
    if (std::memcmp(magic, "QPTB", 4) != 0) {
        if (std::memcmp(magic, "BTPQ", 4) == 0) throw FormatError("byte-swapped magic: file written with the wrong endianness");
        throw FormatError("bad magic in '" + path + "'");
    }
    std::uint16_t ver = 0;
    std::uint32_t hlen = 0;
    in_.read(reinterpret_cast<char*>(&ver), sizeof ver);
    in_.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    if (!in_) throw FormatError("truncated file header");
    if (ver != kFormatVersion) throw FormatError("unsupported format version " + std::to_string(ver));
    if (hlen > (1u << 20)) throw FormatError("header length " + std::to_string(hlen) + " is implausible");
    std::string h(hlen, '\0');
    in_.read(h.data(), hlen);
    if (!in_) throw FormatError("truncated text header");

    std::map<std::string, std::string> kv;
    std::istringstream hs(h);
    for (std::string line; std::getline(hs, line);) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed header line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    cfg_.fs_msps = parse_double(kv, "fs");
    cfg_.f_if_mhz = parse_double(kv, "f_if");
    cfg_.record_len = static_cast<std::size_t>(parse_u64(kv, "record_len"));
    cfg_.noise_temp_K = parse_double(kv, "noise_temp_K");
    if (kv.count("gain")) cfg_.gain = parse_double(kv, "gain");
    if (kv.count("carrier_ghz")) cfg_.carrier_ghz = parse_double(kv, "carrier_ghz");
    n_records_ = static_cast<std::size_t>(parse_u64(kv, "n_records"));
    seed_ = parse_u64(kv, "seed");
    for (const auto& [k, v] : kv) {
        if (std::find(std::begin(kReserved), std::end(kReserved), k) == std::end(kReserved)) extra_[k] = v;
    }
    try {
        cfg_.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid header: ") + e.what());
    }
    data_offset_ = static_cast<std::streamoff>(4 + sizeof ver + sizeof hlen + hlen);
}

void TraceFileReader::fetch(std::size_t first, std::size_t count, RecordBlock& out) {
    if (first + count > n_records_) throw RangeError("record range past end of file");
    const std::size_t len = cfg_.record_len;
    out.resize(first, count, len);
    const auto bytes = static_cast<std::streamsize>(len * sizeof(sample));
    in_.clear();
    in_.seekg(data_offset_ + static_cast<std::streamoff>(first) * 4 * bytes);
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<sample>* dst[] = {&out.sig_a, &out.sig_b, &out.bg_a, &out.bg_b};
        for (auto* d : dst) {
            in_.read(reinterpret_cast<char*>(out.record(*d, i)), bytes);
            if (in_.gcount() != bytes) {
                throw FormatError("'" + path_ + "' is truncated: record " + std::to_string(first + i) + " of " +
                                  std::to_string(n_records_) + " is missing or incomplete");
            }
        }
    }
}

IQTraceBatch read_batch(const std::string& path) {
    TraceFileReader rd(path);
    IQTraceBatch b;
    b.cfg = rd.config();
    b.seed = rd.seed();
    b.extra = rd.extra();
    rd.fetch(0, rd.n_records(), b.records);
    return b;
}

MultiFileSource::MultiFileSource(const std::vector<std::string>& paths) {
    if (paths.empty()) throw IOError("no trace files given");
    for (const auto& p : paths) {
        auto r = std::make_unique<TraceFileReader>(p);
        if (!readers_.empty()) {
            const auto& c0 = readers_.front()->config();
            const auto& c = r->config();
            if (c.record_len != c0.record_len || c.fs_msps != c0.fs_msps || c.f_if_mhz != c0.f_if_mhz) {
                throw FormatError("'" + p + "' does not match the chain settings of the first file");
            }
        }
        offsets_.push_back(total_);
        total_ += r->n_records();
        readers_.push_back(std::move(r));
    }
}

void MultiFileSource::fetch(std::size_t first, std::size_t count, RecordBlock& out) {
    if (first + count > total_) throw RangeError("record range past end of input");
    const std::size_t len = record_len();
    out.resize(first, count, len);
    RecordBlock part;
    std::size_t done = 0;
    while (done < count) {
        const std::size_t g = first + done;
        const auto f = static_cast<std::size_t>(std::upper_bound(offsets_.begin(), offsets_.end(), g) - offsets_.begin() - 1);
        const std::size_t local = g - offsets_[f];
        const std::size_t take = std::min(count - done, readers_[f]->n_records() - local);
        readers_[f]->fetch(local, take, part);
        const auto off = static_cast<std::ptrdiff_t>(done * len);
        std::copy(part.sig_a.begin(), part.sig_a.end(), out.sig_a.begin() + off);
        std::copy(part.sig_b.begin(), part.sig_b.end(), out.sig_b.begin() + off);
        std::copy(part.bg_a.begin(), part.bg_a.end(), out.bg_a.begin() + off);
        std::copy(part.bg_b.begin(), part.bg_b.end(), out.bg_b.begin() + off);
        done += take;
    }
}

} // namespace qpsim::chain
