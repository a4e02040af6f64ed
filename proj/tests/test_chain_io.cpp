#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "qpsim/detection_chain.hpp"
#include "qpsim/errors.hpp"
#include "qpsim/trace_io.hpp"
#include "qpsim/units.hpp"

using namespace qpsim;
using namespace qpsim::chain;
namespace fs = std::filesystem;

namespace {

ChainConfig small_cfg() {
    ChainConfig c;
    c.record_len = 256;
    return c;
}

engine::PulseTrain train(int count, double period) {
    engine::PulseTrain t;
    t.pulse.center_ns = 150.0;
    t.pulse.sigma_ns = 2.0;
    t.count = count;
    t.period_ns = period;
    return t;
}

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("qpsim_test_" + name); }

bool same_bits(const std::vector<sample>& a, const std::vector<sample>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(sample)) == 0;
}

bool same_block(const RecordBlock& a, const RecordBlock& b) {
    return same_bits(a.sig_a, b.sig_a) && same_bits(a.sig_b, b.sig_b) && same_bits(a.bg_a, b.bg_a) &&
           same_bits(a.bg_b, b.bg_b);
}

} // namespace

TEST_CASE("trace file round trip is bitwise") {
    const auto src = SourceSpec::gaussian(SourceKind::coherent, 20.0, 2.0);
    auto b = synthesize(small_cfg(), src, train(2, 128.0), 7, 42);
    b.extra["note"] = "roundtrip";
    const auto p = tmp("rt.qptb");
    write_batch(b, p.string());
    const auto r = read_batch(p.string());
    CHECK(r == b);
    CHECK(same_block(r.records, b.records));
    CHECK(r.extra.at("note") == "roundtrip");
    CHECK(r.seed == 42);
    CHECK(fs::file_size(p) > 7u * 4u * 256u * sizeof(sample));
    fs::remove(p);
}

TEST_CASE("truncated and foreign files") {
    const auto src = SourceSpec::gaussian(SourceKind::thermal, 20.0, 1.0);
    const auto b = synthesize(small_cfg(), src, train(1, 512.0), 5, 1);
    const auto p = tmp("trunc.qptb");
    write_batch(b, p.string());
    fs::resize_file(p, fs::file_size(p) - 100);
    TraceFileReader rd(p.string());
    RecordBlock blk;
    rd.fetch(0, 4, blk);
    try {
        rd.fetch(0, 5, blk);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("record 4") != std::string::npos);
    }
    CHECK_THROWS_AS(rd.fetch(3, 4, blk), RangeError);

    // byte-swapped magic
    {
        std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
        f.write("BTPQ", 4);
    }
    try {
        TraceFileReader bad(p.string());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("byte-swapped") != std::string::npos);
    }
    {
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        f << "XY";
    }
    CHECK_THROWS_AS(TraceFileReader(p.string()), FormatError);
    fs::remove(p);
    CHECK_THROWS_AS(TraceFileReader(p.string()), IOError);
}

TEST_CASE("synthesis is deterministic and independent of the worker count") {
    const auto src = SourceSpec::gaussian(SourceKind::thermal, 20.0, 3.0);
    SynthOptions o;
    o.idle_photons = 0.2;
    RecordBlock ref;
    Synthesizer(small_cfg(), src, train(1, 512.0), 33, 9, o).fetch(0, 33, ref);
    for (unsigned w : {1u, 2u, 4u, 8u}) {
        o.workers = w;
        RecordBlock blk;
        Synthesizer(small_cfg(), src, train(1, 512.0), 33, 9, o).fetch(0, 33, blk);
        CHECK(same_block(blk, ref));
    }
    // a record depends only on its index
    RecordBlock part;
    Synthesizer(small_cfg(), src, train(1, 512.0), 33, 9, o).fetch(10, 5, part);
    CHECK(std::memcmp(part.sig_a.data(), ref.record(ref.sig_a, 10), 5 * 256 * sizeof(sample)) == 0);
    RecordBlock other;
    Synthesizer(small_cfg(), src, train(1, 512.0), 33, 10, o).fetch(0, 33, other);
    CHECK_FALSE(same_block(other, ref));
    CHECK(record_seed(1, 0) != record_seed(1, 1));
    CHECK(record_seed(1, 0) != record_seed(2, 0));
}

TEST_CASE("noise floor per sample") {
    for (double temp : {0.0, 0.3}) {
        ChainConfig c = small_cfg();
        c.noise_temp_K = temp;
        c.gain = 2.0;
        const double expect_photons = 0.5 + units::k_boltzmann * temp / (units::hbar * units::two_pi * c.carrier_ghz * 1e9);
        CHECK(c.amplifier_photons() == doctest::Approx(expect_photons - 0.5));
        const auto src = SourceSpec::gaussian(SourceKind::coherent, 20.0, 0.0);
        RecordBlock blk;
        Synthesizer(c, src, train(1, 512.0), 400, 5).fetch(0, 400, blk);
        double s = 0;
        for (const auto& v : blk.bg_b) s += std::norm(std::complex<double>(v));
        const double var = s / static_cast<double>(blk.bg_b.size());
        // 102400 samples: relative sd of the estimate ~ 0.3 %
        CHECK(var == doctest::Approx(4.0 * expect_photons).epsilon(0.015));
    }
}

TEST_CASE("pulse photon number") {
    // the unit field carries one photon
    ChainConfig c = small_cfg();
    const double n = 5.0;
    const auto src = SourceSpec::gaussian(SourceKind::coherent, 20.0, n);
    Synthesizer syn(c, src, train(1, 512.0), 1, 3);
    double e = 0;
    for (const auto& v : syn.unit_field()) e += std::norm(v);
    CHECK(e == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("configuration errors") {
    ChainConfig c = small_cfg();
    const auto src = SourceSpec::gaussian(SourceKind::coherent, 20.0, 1.0);
    // 256 samples at 4 ns do not cover a second pulse 1000 ns later
    CHECK_THROWS_AS(Synthesizer(c, src, train(2, 1000.0), 1, 1), ConfigError);
    c.fs_msps = 40.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_cfg();
    c.record_len = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(parse_source_kind("laser"), ConfigError);
    CHECK(parse_source_kind("sim-mean") == SourceKind::sim_mean);
    CHECK_THROWS_AS(SourceSpec::gaussian(SourceKind::coherent, -1.0, 1.0), ConfigError);
    SynthOptions o;
    o.idle_photons = -1;
    CHECK_THROWS_AS(Synthesizer(small_cfg(), src, train(1, 512.0), 1, 1, o), ConfigError);
}

TEST_CASE("several files read as one sequence") {
    const auto src = SourceSpec::gaussian(SourceKind::thermal, 20.0, 1.0);
    const auto all = synthesize(small_cfg(), src, train(1, 512.0), 9, 4);
    IQTraceBatch a = all, b = all;
    a.records.resize(0, 4, 256);
    b.records.resize(0, 5, 256);
    for (std::size_t i = 0; i < 4 * 256; ++i) {
        a.records.sig_a[i] = all.records.sig_a[i];
        a.records.sig_b[i] = all.records.sig_b[i];
        a.records.bg_a[i] = all.records.bg_a[i];
        a.records.bg_b[i] = all.records.bg_b[i];
    }
    for (std::size_t i = 0; i < 5 * 256; ++i) {
        b.records.sig_a[i] = all.records.sig_a[4 * 256 + i];
        b.records.sig_b[i] = all.records.sig_b[4 * 256 + i];
        b.records.bg_a[i] = all.records.bg_a[4 * 256 + i];
        b.records.bg_b[i] = all.records.bg_b[4 * 256 + i];
    }
    const auto pa = tmp("ma.qptb"), pb = tmp("mb.qptb");
    write_batch(a, pa.string());
    write_batch(b, pb.string());
    MultiFileSource m({pa.string(), pb.string()});
    CHECK(m.n_records() == 9);
    RecordBlock blk;
    m.fetch(2, 5, blk);
    CHECK(std::memcmp(blk.sig_b.data(), all.records.record(all.records.sig_b, 2), 5 * 256 * sizeof(sample)) == 0);
    CHECK(std::memcmp(blk.bg_a.data(), all.records.record(all.records.bg_a, 2), 5 * 256 * sizeof(sample)) == 0);

    ChainConfig other = small_cfg();
    other.record_len = 128;
    const auto c = synthesize(other, src, train(1, 512.0), 1, 1);
    const auto pc = tmp("mc.qptb");
    write_batch(c, pc.string());
    CHECK_THROWS_AS(MultiFileSource({pa.string(), pc.string()}), FormatError);
    fs::remove(pa);
    fs::remove(pb);
    fs::remove(pc);
}
