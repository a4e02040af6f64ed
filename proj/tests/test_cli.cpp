#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
    int status;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(QPSIM_BIN) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::string out;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), p)) out += buf.data();
    const int st = pclose(p);
    return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("qpsim_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

/// Every option line carries a description, on the same line or the next.
bool all_flags_described(const std::string& help, std::string& missing) {
    std::istringstream is(help);
    std::vector<std::string> lines;
    for (std::string l; std::getline(is, l);) lines.push_back(l);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& l = lines[i];
        if (l.rfind("  -", 0) != 0) continue;
        const auto gap = l.find("  ", 2);
        const bool same_line = gap != std::string::npos && l.find_first_not_of(' ', gap) != std::string::npos;
        const bool next_line = i + 1 < lines.size() && lines[i + 1].rfind("                    ", 0) == 0 &&
                               lines[i + 1].find_first_not_of(' ') != std::string::npos;
        if (!same_line && !next_line) {
            missing = l;
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("help lists every flag with a description") {
    const std::vector<std::pair<std::string, std::vector<std::string>>> subs = {
        {"", {"--config", "--out", "--seed", "--workers"}},
        {"spectrum", {"--flux-min", "--flux-max", "--points"}},
        {"budget", {}},
        {"rabi", {"--theta-min", "--theta-max", "--points", "--t-end", "--dt", "--bandwidth"}},
        {"reflection", {"--power-min", "--power-max", "--power-step", "--detunings", "--span", "--noise",
                        "--omega2-per-watt"}},
        {"correlations", {"--theta", "--bandwidth", "--dt", "--window"}},
        {"synth", {"--source", "--records", "--mean-photon", "--record-len", "--pulses", "--out"}},
        {"correlate", {"--in", "--tau-max", "--kernel", "--resume", "--checkpoint", "--checkpoint-every",
                       "--stop-after", "--bandwidth", "--half-width"}},
        {"fit-reflection", {"--in", "--omega2-per-watt", "--mc", "--amp-jitter", "--phase-jitter"}},
        {"fit-saturation", {"--in", "--x-column", "--y-column"}},
        {"fit-decay", {"--in", "--kind", "--time-column", "--value-column", "--theta", "--t-start", "--t-end"}},
        {"reproduce", {}},
    };
    for (const auto& [sub, flags] : subs) {
        const auto r = run(sub + " --help");
        CAPTURE(sub);
        CHECK(r.status == 0);
        for (const auto& f : flags) {
            CAPTURE(f);
            CHECK(r.out.find(f) != std::string::npos);
        }
        std::string missing;
        CHECK_MESSAGE(all_flags_described(r.out, missing), missing);
    }
}

TEST_CASE("error reporting and exit codes") {
    auto r = run("--config /nonexistent/run.conf budget");
    CHECK(r.status == 2);
    CHECK(r.out.find("ConfigError") != std::string::npos);
    const auto d = fresh_dir("err");
    r = run("--out " + d.string() + " correlate --in " + (d / "missing.qptb").string());
    CHECK(r.status == 3);
    CHECK(r.out.find("IOError") != std::string::npos);
    {
        std::ofstream os(d / "junk.qptb");
        os << "not a trace file";
    }
    r = run("--out " + d.string() + " correlate --in " + (d / "junk.qptb").string());
    CHECK(r.status == 4);
    CHECK(r.out.find("FormatError") != std::string::npos);
    r = run("reproduce fig9");
    CHECK(r.status != 0);
    fs::remove_all(d);
}

TEST_CASE("identical runs give identical files") {
    const auto d = fresh_dir("det");
    for (int k = 0; k < 2; ++k) {
        const auto sub = d / std::to_string(k);
        fs::create_directories(sub);
        const auto trace = (sub / "t.qptb").string();
        auto r = run("--seed 5 --out " + sub.string() + " synth --source thermal --records 64 --mean-photon 2 --out " +
                     trace);
        REQUIRE(r.status == 0);
        r = run("--workers " + std::to_string(1 + 3 * k) + " --out " + sub.string() + " correlate --in " + trace +
                " --kernel direct --tau-max 300");
        REQUIRE(r.status == 0);
    }
    CHECK(slurp(d / "0" / "t.qptb") == slurp(d / "1" / "t.qptb"));
    CHECK(slurp(d / "0" / "correlate.csv") == slurp(d / "1" / "correlate.csv"));
    const auto j = nlohmann::json::parse(slurp(d / "0" / "correlate_summary.json"));
    CHECK(j["n_averages"] == 64);
    fs::remove_all(d);
}

TEST_CASE("interrupted correlation resumes to the same result") {
    const auto d = fresh_dir("resume");
    const auto trace = (d / "t.qptb").string();
    REQUIRE(run("--out " + d.string() + " synth --source coherent --records 200 --out " + trace).status == 0);
    const auto full = d / "full", part = d / "part";
    fs::create_directories(full);
    fs::create_directories(part);
    REQUIRE(run("--out " + full.string() + " correlate --in " + trace + " --kernel direct --tau-max 300").status == 0);
    const auto ck = (d / "state.ckpt").string();
    REQUIRE(run("--out " + part.string() + " correlate --in " + trace +
                " --kernel direct --tau-max 300 --checkpoint " + ck + " --stop-after 70")
                .status == 0);
    REQUIRE(run("--out " + part.string() + " correlate --in " + trace + " --kernel direct --tau-max 300 --resume " + ck)
                .status == 0);
    CHECK(slurp(full / "correlate.csv") == slurp(part / "correlate.csv"));
    fs::remove_all(d);
}

TEST_CASE("figure reproduction writes every panel") {
    const auto d = fresh_dir("fig4");
    const auto r = run("--out " + d.string() + " reproduce fig4");
    REQUIRE(r.status == 0);
    for (const char* f : {"fig4a_amplitude.csv", "fig4b_amplitude_trace.csv", "fig4c_amplitude_vs_theta.csv",
                          "fig4d_power.csv", "fig4e_power_trace.csv", "fig4f_power_vs_theta.csv"}) {
        CAPTURE(f);
        REQUIRE(fs::exists(d / f));
        const auto text = slurp(d / f);
        CHECK(text.find("# gamma1_mhz = 7.02\n") != std::string::npos);
        CHECK(text.find("# seed = ") != std::string::npos);
    }
    fs::remove_all(d);
}

TEST_CASE("reflection sweep feeds the reflection fit") {
    const auto d = fresh_dir("refl");
    REQUIRE(run("--out " + d.string() + " reflection --noise 0.005").status == 0);
    REQUIRE(fs::exists(d / "reflection.csv"));
    const auto r = run("--out " + d.string() + " fit-reflection --in " + (d / "reflection.csv").string());
    REQUIRE(r.status == 0);
    const auto j = nlohmann::json::parse(slurp(d / "fit_reflection.json"));
    CHECK(j.dump().find("eta_prime") != std::string::npos);
    fs::remove_all(d);
}
