#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qpsim/config.hpp"
#include "qpsim/csv.hpp"
#include "qpsim/errors.hpp"
#include "qpsim/units.hpp"

using namespace qpsim;
using namespace qpsim::config;
namespace fs = std::filesystem;

TEST_CASE("unit suffixes") {
    const auto f = IniFile::parse("[a]\n"
                                  "f1 = 7.062 GHz\n"
                                  "f2 = 25 MHz   # comment\n"
                                  "t1 = 0.2 us\n"
                                  "t2 = 1500 ps\n"
                                  "T = 20 mK\n"
                                  "p1 = -116 dBm\n"
                                  "p2 = 2 mW\n"
                                  "th = 0.5 pi\n"
                                  "th2 = 90 deg\n"
                                  "n = 3\n");
    CHECK(f.get_frequency_mhz("a", "f1", 0) == doctest::Approx(7062.0));
    CHECK(f.get_frequency_mhz("a", "f2", 0) == doctest::Approx(25.0));
    CHECK(f.get_time_ns("a", "t1", 0) == doctest::Approx(200.0));
    CHECK(f.get_time_ns("a", "t2", 0) == doctest::Approx(1.5));
    CHECK(f.get_temperature_k("a", "T", 0) == doctest::Approx(0.02));
    CHECK(f.get_power_w("a", "p1", 0) == doctest::Approx(units::dbm_to_watt(-116.0)));
    CHECK(f.get_power_w("a", "p2", 0) == doctest::Approx(2e-3));
    CHECK(f.get_angle_rad("a", "th", 0) == doctest::Approx(units::pi / 2));
    CHECK(f.get_angle_rad("a", "th2", 0) == doctest::Approx(units::pi / 2));
    CHECK(f.get_int("a", "n", 0) == 3);
    CHECK(f.get_number("a", "missing", 4.5) == 4.5);
    CHECK_THROWS_AS(f.get_time_ns("a", "f1", 0), ConfigError);
    CHECK_THROWS_AS(f.get_number("a", "f1", 0), ConfigError);
    CHECK_THROWS_AS(f.get_int("a", "th", 0), ConfigError);
}

TEST_CASE("malformed files") {
    CHECK_THROWS_AS(IniFile::parse("key = 1\n"), ConfigError);
    CHECK_THROWS_AS(IniFile::parse("[a\n"), ConfigError);
    CHECK_THROWS_AS(IniFile::parse("[a]\nx = 1\nx = 2\n"), ConfigError);
    CHECK_THROWS_AS(IniFile::parse("[a]\njust text\n"), ConfigError);
    CHECK_THROWS_AS(IniFile::load("/nonexistent/qpsim.conf"), ConfigError);
    CHECK_THROWS_AS(IniFile::parse("[a]\nx = abc\n").get_number("a", "x", 0), ConfigError);
}

TEST_CASE("run configuration") {
    CHECK_THROWS_AS(from_ini(IniFile::parse("[device]\nej_maxx = 16 GHz\n")), ConfigError);
    CHECK_THROWS_AS(from_ini(IniFile::parse("[devices]\nej_max = 16 GHz\n")), ConfigError);
    CHECK_THROWS_AS(from_ini(IniFile::parse("[rates]\neta = 1.5\n")), ConfigError);
    CHECK_THROWS_AS(from_ini(IniFile::parse("[rates]\ngamma2 = 3.0 MHz\n")), ConfigError);
    CHECK_THROWS_AS(from_ini(IniFile::parse("[chain]\nfs = 40 MHz\n")), ConfigError);

    const auto c = defaults();
    CHECK(c.qubit.ej_max_ghz == doctest::Approx(16.8));
    CHECK(c.qubit.ec_ghz == doctest::Approx(0.415));
    CHECK(units::rad_per_us_to_mhz(c.rates.gamma1()) == doctest::Approx(7.02));
    CHECK(units::rad_per_us_to_mhz(c.rates.gamma2()) == doctest::Approx(3.54));
    CHECK(c.chain.record_len == 2048);
    CHECK(c.correlator.tau_max == 600);
    CHECK(c.theta == doctest::Approx(units::pi));
    CHECK_NOTHROW(c.validate());
    CHECK_FALSE(c.header().empty());

    // the built-in text is the shipped file
    std::ifstream in(std::string(QPSIM_SOURCE_DIR) + "/config/defaults.conf");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == default_text());

    auto g = from_ini(IniFile::parse("[pulse]\ntheta = 0.5 pi\n[source]\nkind = thermal\nmean_photon = 2\n"));
    CHECK(g.theta == doctest::Approx(units::pi / 2));
    CHECK(g.source().kind == chain::SourceKind::thermal);
    CHECK(g.source().mean_photon == 2.0);
}

TEST_CASE("CSV round trip") {
    io::Table t;
    t.add_header("model", "reflection");
    t.add_header("gamma1_mhz", 7.02);
    t.columns = {"x", "y"};
    t.add_row({1.0, 1.0 / 3.0});
    t.add_row({-2.5e-19, 6.02214076e23});
    t.add_row({0.1, std::nextafter(1.0, 2.0)});
    CHECK_THROWS_AS(t.add_row({1.0}), RangeError);
    const auto p = fs::temp_directory_path() / "qpsim_csv_roundtrip.csv";
    io::write_csv(t, p.string());
    const auto r = io::read_csv(p.string());
    CHECK(r.columns == t.columns);
    CHECK(r.rows == t.rows); // exact: numbers are written with round-trip precision
    CHECK(r.header_value("model") == "reflection");
    CHECK(std::stod(r.header_value("gamma1_mhz")) == 7.02);
    CHECK(r.header_value("absent").empty());
    CHECK(r.column("y")[0] == 1.0 / 3.0);
    CHECK_THROWS_AS(r.column("z"), RangeError);

    {
        std::ofstream os(p);
        os << "# a = 1\nx,y\n1,2\n3\n";
    }
    CHECK_THROWS_AS(io::read_csv(p.string()), FormatError);
    {
        std::ofstream os(p);
        os << "x,y\n1,abc\n";
    }
    CHECK_THROWS_AS(io::read_csv(p.string()), FormatError);
    fs::remove(p);
    CHECK_THROWS_AS(io::read_csv(p.string()), IOError);
}
