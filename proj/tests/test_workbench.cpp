#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cavspin/io/text.hpp"
#include "cavspin/workbench/run.hpp"

using namespace cavspin;
namespace wb = cavspin::workbench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    auto dir = fs::temp_directory_path() / ("cavspin_test_wb_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct Outcome
{
    int code = -1;
    std::string out, err;
};

// Writes the config into `dir` and runs it in-process with outputs in `dir`.
Outcome run_config(const fs::path& dir, const std::string& ini, std::optional<std::uint64_t> seed = std::nullopt)
{
    const auto path = dir / "run.ini";
    io::write_text_file(path, ini);
    Outcome o;
    std::ostringstream out, err;
    try {
        o.code = wb::run(wb::load_config(path), {dir, seed, false}, out, err);
    } catch (const Error& e) {
        o.code = wb::exit_code_of(e.kind());
        err << e.what();
    }
    o.out = out.str();
    o.err = err.str();
    return o;
}

nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(io::read_text_file(path)); }

const nlohmann::json& row(const nlohmann::json& report, const std::string& quantity)
{
    for (const auto& r : report["rows"])
        if (r["quantity"] == quantity)
            return r;
    throw std::runtime_error("no report row " + quantity);
}

int run_cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string(CAVSPIN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Strong-coupling DPPH-like sample with the spin half-width matched to the
// cavity, additive noise at 1 % of full scale.
const std::string branches_ini = R"([run]
command = fit-branches
[cavity]
omega_c_MHz = 9750
kappa_c_MHz = 0.73
kappa_e_ratio = 1
[spins]
g_c_MHz = 5.9
gamma_s_MHz = 0.73
B_r_G = 3469
[grid]
field_min_G = 3463
field_max_G = 3475
field_count = 61
freq_min_MHz = 9725
freq_max_MHz = 9775
freq_count = 1001
[noise]
model = additive
sigma = 0.01
seed = 20110401
[fit]
expect_branches = 2
[io]
prefix = br
)";

const std::string lipc_cavity = R"([cavity]
omega_c_MHz = 9750
kappa_c_MHz = 5.4
kappa_e_ratio = 0.99
)";

} // namespace

TEST(WorkbenchSimulate, ZeroNoiseMatchesTheModel)
{
    const auto dir = scratch("sim0");
    const auto o = run_config(dir, "[run]\ncommand = simulate\n" + lipc_cavity +
                                       "[spins]\ng_c_MHz = 0.71\ngamma_s_MHz = 0.14\nB_r_G = 3469.2\n"
                                       "[grid]\nfield_min_G = 3468.2\nfield_max_G = 3470.2\nfield_count = 11\n"
                                       "freq_min_MHz = 9740\nfreq_max_MHz = 9760\nfreq_count = 51\n"
                                       "[io]\nprefix = s\n");
    ASSERT_EQ(o.code, 0) << o.err;
    const auto map = io::read_spectrum_csv(dir / "s_map.csv");
    const auto c = wb::parse_config("[run]\ncommand = simulate\n" + lipc_cavity +
                                    "[spins]\ng_c_MHz = 0.71\ngamma_s_MHz = 0.14\nB_r_G = 3469.2\n");
    const auto direct = simulate_map(c.cavity(), wb::spins_of(c), map.field_axis, map.frequency_axis);
    EXPECT_EQ(map.power, direct.power);
    EXPECT_TRUE(fs::exists(dir / "s_truth.json"));
    EXPECT_TRUE(fs::exists(dir / "s_map.svg"));
    EXPECT_TRUE(fs::exists(dir / "s_track.csv"));
    const auto report = read_json(dir / "s_report.json");
    EXPECT_EQ(row(report, "minima_on_resonance")["value"], 2.0);
}

TEST(WorkbenchSimulate, SameSeedGivesByteIdenticalOutputs)
{
    const auto a = scratch("seed_a"), b = scratch("seed_b");
    ASSERT_EQ(run_config(a, branches_ini).code, 0);
    ASSERT_EQ(run_config(b, branches_ini).code, 0);
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        const auto name = entry.path().filename();
        ASSERT_TRUE(fs::exists(b / name)) << name;
        auto text_a = io::read_text_file(a / name), text_b = io::read_text_file(b / name);
        if (name == "br_manifest.json") {
            // the config path differs between the two directories
            auto ja = nlohmann::json::parse(text_a), jb = nlohmann::json::parse(text_b);
            ja["config"].erase("path");
            jb["config"].erase("path");
            EXPECT_EQ(ja, jb);
        } else {
            EXPECT_EQ(text_a, text_b) << name;
        }
        ++compared;
    }
    EXPECT_GE(compared, 6u);
}

TEST(WorkbenchSimulate, SeedOverrideChangesTheData)
{
    const auto a = scratch("ovr_a"), b = scratch("ovr_b");
    ASSERT_EQ(run_config(a, branches_ini).code, 0);
    ASSERT_EQ(run_config(b, branches_ini, 99).code, 0);
    EXPECT_NE(io::read_text_file(a / "br_track.csv"), io::read_text_file(b / "br_track.csv"));
    const auto m = read_json(b / "br_manifest.json");
    EXPECT_EQ(m["seed"], 99);
    EXPECT_EQ(m["seed_source"], "command line");
}

TEST(WorkbenchFitBranches, NoisyStrongCouplingRecoversCouplingWithinThreePercent)
{
    const auto dir = scratch("branches");
    const auto o = run_config(dir, branches_ini);
    ASSERT_EQ(o.code, 0) << o.err;
    const auto report = read_json(dir / "br_report.json");
    const double g = row(report, "g_c")["value"];
    EXPECT_NEAR(g / 5.9, 1.0, 0.03);
    EXPECT_TRUE(row(report, "g_c")["uncertainty"].is_number());
    EXPECT_NE(o.out.find("g_c"), std::string::npos);
}

TEST(WorkbenchThresholdScan, LipcParametersMergeNearPointSixFour)
{
    const auto dir = scratch("scan");
    const auto o = run_config(dir, "[run]\ncommand = threshold-scan\n" + lipc_cavity +
                                       "[spins]\ngamma_s_MHz = 0.14\n[io]\nprefix = t\n");
    ASSERT_EQ(o.code, 0) << o.err;
    const double ratio = row(read_json(dir / "t_report.json"), "critical_ratio")["value"];
    EXPECT_GE(ratio, 0.62);
    EXPECT_LE(ratio, 0.66);
}

TEST(WorkbenchThresholdScan, MatchedCouplingAgreesWithClosedForm)
{
    const auto dir = scratch("scan_matched");
    const auto o = run_config(dir, "[run]\ncommand = threshold-scan\n[cavity]\nomega_c_MHz = 9750\n"
                                   "kappa_c_MHz = 5.4\nkappa_e_ratio = 1\n[spins]\ngamma_s_MHz = 0.14\n"
                                   "[io]\nprefix = t\n");
    ASSERT_EQ(o.code, 0) << o.err;
    const auto report = read_json(dir / "t_report.json");
    const double numeric = row(report, "critical_ratio")["value"];
    const double closed = row(report, "closed_form_ratio")["value"];
    EXPECT_NEAR(numeric, closed, 1e-3 * closed);
    const auto scan = io::read_table_csv(dir / "t_scan.csv");
    EXPECT_EQ(scan.rows(), 32u);
}

TEST(WorkbenchNscale, DpphPointsGiveSingleSpinCoupling)
{
    const auto dir = scratch("nscale");
    const auto o = run_config(dir, "[run]\ncommand = nscale\n[nscale]\nN = 7.8e14, 3.1e15, 1.2e16, 1.9e16\n"
                                   "g_c_MHz = 1.15, 2.0, 4.9, 5.9\n");
    ASSERT_EQ(o.code, 0) << o.err;
    const auto report = read_json(dir / "nscale_report.json");
    const auto& gs = row(report, "g_s");
    EXPECT_EQ(gs["unit"], "Hz");
    EXPECT_NEAR(gs["value"].get<double>(), 0.043, 0.003);
    EXPECT_NE(o.out.find("0.0428"), std::string::npos) << o.out;
}

TEST(WorkbenchChain, WeakCouplingTrackGivesSingleBranchFit)
{
    const auto dir = scratch("chain");
    const auto sim = run_config(dir, "[run]\ncommand = simulate\n" + lipc_cavity +
                                         "[spins]\ng_c_MHz = 0.085\ngamma_s_MHz = 0.14\nB_r_G = 3469.2\n"
                                         "[grid]\nfield_min_G = 3468.2\nfield_max_G = 3470.2\nfield_count = 81\n"
                                         "freq_min_MHz = 9740\nfreq_max_MHz = 9760\nfreq_count = 801\n"
                                         "[fit]\nexpect_branches = 1\n[io]\nprefix = weak\n");
    ASSERT_EQ(sim.code, 0) << sim.err;
    const auto track = io::read_track_csv(dir / "weak_track.csv");
    EXPECT_EQ(track.count(BranchTag::single), track.size());

    const auto fit = run_config(dir, "[run]\ncommand = fit-dispersive\n[io]\ntrack = weak_track.csv\nprefix = fd\n");
    ASSERT_EQ(fit.code, 0) << fit.err;
    const auto report = read_json(dir / "fd_report.json");
    EXPECT_GT(row(report, "g_c")["value"].get<double>(), 0.0);
    const auto m = read_json(dir / "fd_manifest.json");
    ASSERT_EQ(m["inputs"].size(), 1u);
    EXPECT_EQ(m["inputs"][0]["sha256"], wb::sha256_hex(io::read_text_file(dir / "weak_track.csv")));
}

TEST(WorkbenchManifest, HashesMatchTheFilesOnDisk)
{
    const auto dir = scratch("manifest");
    ASSERT_EQ(run_config(dir, branches_ini).code, 0);
    const auto m = read_json(dir / "br_manifest.json");
    EXPECT_EQ(m["command"], "fit-branches");
    EXPECT_EQ(m["config"]["sha256"], wb::sha256_hex(io::read_text_file(dir / "run.ini")));
    EXPECT_EQ(m["seed"], 20110401);
    EXPECT_EQ(m["exit_code"], 0);
    EXPECT_TRUE(m["versions"].contains("eigen"));
    ASSERT_GE(m["outputs"].size(), 4u);
    for (const auto& f : m["outputs"])
        EXPECT_EQ(f["sha256"], wb::sha256_hex(io::read_text_file(dir / f["path"].get<std::string>())))
            << f["path"];
    EXPECT_EQ(m.dump().find("time"), std::string::npos);
}

TEST(WorkbenchExitCodes, ConfigDataAndFitErrors)
{
    const auto dir = scratch("exit");
    EXPECT_EQ(run_config(dir, "[run]\ncommand = simulate\n[grid]\nbogus = 1\n").code, wb::exit_config);
    EXPECT_EQ(run_config(dir, "[run]\ncommand = simulate\n[cavity]\nkappa_c_MHz = 1\n").code, wb::exit_config);
    EXPECT_EQ(run_config(dir, "[run]\ncommand = fit-dispersive\n[io]\ntrack = missing.csv\n").code,
              wb::exit_data);
    io::write_text_file(dir / "ragged.csv", "# scale: linear\nfield_G/freq_MHz,9750,9751\n3470,1\n");
    EXPECT_EQ(run_config(dir, "[run]\ncommand = fit-map\n[io]\ninput = ragged.csv\n").code, wb::exit_data);

    // With the coupling underflowing, gamma_s has no effect on the model.
    io::write_text_file(dir / "m.csv", "# scale: linear\nfield_G/freq_MHz,9749,9750,9751\n"
                                       "3469,0.5,0.1,0.5\n3470,0.5,0.1,0.5\n3471,0.5,0.1,0.5\n");
    const auto o = run_config(dir, "[run]\ncommand = fit-map\n" + lipc_cavity +
                                       "[spins]\ng_c_MHz = 1e-300\ngamma_s_MHz = 0.14\nB_r_G = 3470\n"
                                       "[io]\ninput = m.csv\nprefix = singular\n"
                                       "[fit]\ninitial = config\nfreeze = g_c, omega_c, kappa_c, kappa_e, B_r\n");
    EXPECT_EQ(o.code, wb::exit_fit) << o.err;
    const auto m = read_json(dir / "singular_manifest.json");
    EXPECT_EQ(m["exit_code"], wb::exit_fit);
    EXPECT_TRUE(m.contains("error"));
}

TEST(WorkbenchCli, EverySampleConfigRuns)
{
    const auto dir = scratch("cli_all");
    std::vector<fs::path> configs;
    for (const auto& entry : fs::directory_iterator(CAVSPIN_CONFIG_DIR))
        if (entry.path().extension() == ".ini")
            configs.push_back(entry.path());
    std::sort(configs.begin(), configs.end());
    ASSERT_GE(configs.size(), 8u);
    for (const auto& path : configs) {
        const auto c = wb::load_config(path);
        const auto log = dir / (path.stem().string() + ".log");
        const int code = run_cli(std::string(wb::to_string(c.command)) + " --config " + path.string() + " --out " +
                                     dir.string() + " --quiet",
                                 log);
        EXPECT_EQ(code, 0) << path << "\n" << io::read_text_file(log);
        EXPECT_TRUE(fs::exists(dir / (c.prefix + "_manifest.json"))) << path;
    }
}

TEST(WorkbenchCli, ArgumentErrorsExitWithTwo)
{
    const auto dir = scratch("cli_args");
    io::write_text_file(dir / "scan.ini", "[run]\ncommand = threshold-scan\n" + lipc_cavity +
                                              "[spins]\ngamma_s_MHz = 0.14\n");
    EXPECT_EQ(run_cli("", dir / "a.log"), 2);
    EXPECT_EQ(run_cli("threshold-scan", dir / "b.log"), 2);
    EXPECT_EQ(run_cli("no-such-command --config " + (dir / "scan.ini").string(), dir / "c.log"), 2);
    EXPECT_EQ(run_cli("simulate --config " + (dir / "scan.ini").string(), dir / "d.log"), 2);
    EXPECT_EQ(run_cli("threshold-scan --config " + (dir / "missing.ini").string(), dir / "e.log"), 2);
    EXPECT_EQ(run_cli("threshold-scan --config " + (dir / "scan.ini").string() + " --out " + dir.string(),
                      dir / "f.log"),
              0);
    EXPECT_NE(io::read_text_file(dir / "f.log").find("critical_ratio"), std::string::npos);
    EXPECT_EQ(run_cli("threshold-scan -q -c " + (dir / "scan.ini").string() + " -o " + dir.string(), dir / "g.log"),
              0);
    EXPECT_EQ(io::read_text_file(dir / "g.log"), "");
    EXPECT_EQ(run_cli("--version", dir / "h.log"), 0);
    EXPECT_NE(io::read_text_file(dir / "h.log").find("0.1.0"), std::string::npos);
}
