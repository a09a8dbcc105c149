#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "eetsim/experiment.hpp"

using namespace eetsim;
namespace ex = eetsim::experiment;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("eetsim_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

io::Table series(std::vector<double> t, std::vector<double> v, const std::string& name = "P1") {
    io::Table tb;
    tb.add_column("t_ms", std::move(t));
    tb.add_column(name, std::move(v));
    return tb;
}

ex::ExperimentConfig small_ramsey(const fs::path& out) {
    return ex::parse_config({{"kind", "ramsey"},
                             {"preset", "ramsey_figure"},
                             {"params", {{"M", 40}, {"t_max_ms", 0.4}}},
                             {"master_seed", 3},
                             {"output_dir", out.string()}});
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(EETSIM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST(Compare, SelfIsZero) {
    auto a = series({0, 1, 2, 3}, {0.1, 0.4, 0.2, 0.9});
    auto r = ex::compare_tables(a, a, 0.0);
    EXPECT_EQ(r.max_deviation, 0.0);
    EXPECT_EQ(r.rms_deviation, 0.0);
    EXPECT_EQ(r.grid_size, 4u);
    EXPECT_FALSE(r.interpolated);
    EXPECT_TRUE(r.pass);
}

TEST(Compare, ConstantOffset) {
    auto a = series({0, 1, 2}, {0.1, 0.4, 0.2});
    auto b = series({0, 1, 2}, {0.2, 0.5, 0.3});
    auto r = ex::compare_tables(a, b, 0.05);
    EXPECT_NEAR(r.max_deviation, 0.1, 1e-15);
    EXPECT_NEAR(r.rms_deviation, 0.1, 1e-15);
    EXPECT_FALSE(r.pass);
    EXPECT_TRUE(ex::compare_tables(a, b, 0.1 + 1e-12).pass);
}

TEST(Compare, LinearInterpolationIsExactOnLines) {
    auto a = series({0.05, 0.5, 1.25}, {0.1, 1.0, 2.5});
    std::vector<double> t, v;
    for (int i = 0; i <= 20; ++i) {
        t.push_back(0.1 * i);
        v.push_back(2.0 * 0.1 * i);
    }
    auto r = ex::compare_tables(a, series(t, v));
    EXPECT_TRUE(r.interpolated);
    EXPECT_EQ(r.grid_size, 3u);
    EXPECT_LT(r.max_deviation, 1e-14);
}

TEST(Compare, OnlySharedColumnsAndOverlap) {
    io::Table a = series({0, 1, 2, 3}, {0, 0, 0, 0});
    a.add_column("P2", {1, 1, 1, 1});
    io::Table b = series({1, 2}, {0.5, 0.5}, "P2");
    auto r = ex::compare_tables(a, b);
    ASSERT_EQ(r.columns.size(), 1u);
    EXPECT_EQ(r.columns[0], "P2");
    EXPECT_EQ(r.grid_size, 2u);
    EXPECT_DOUBLE_EQ(r.max_deviation, 0.5);
}

TEST(Compare, Errors) {
    auto a = series({0, 1}, {0, 0});
    EXPECT_THROW(ex::compare_tables(a, series({0, 1}, {0, 0}, "Q")), std::invalid_argument);
    EXPECT_THROW(ex::compare_tables(a, series({5, 6}, {0, 0})), std::invalid_argument);
    io::Table other;
    other.add_column("time", {0, 1});
    other.add_column("P1", {0, 0});
    EXPECT_THROW(ex::compare_tables(a, other), std::invalid_argument);
    EXPECT_THROW(ex::compare_series("/nonexistent/a.csv", "/nonexistent/b.csv"), ex::IoError);
}

TEST(Presets, AllLoad) {
    for (const auto& name : ex::preset_names()) EXPECT_NO_THROW(ex::load_preset(name)) << name;
    EXPECT_THROW(ex::load_preset("fmo7"), ex::ConfigError);
}

TEST(Presets, TetramersInNmrUnits) {
    const double k = 2 * constants::pi;
    const auto m = ex::tetramer_setup(ex::load_preset("methods_tetramer"));
    EXPECT_NEAR(m.h.elements(0, 0).real(), k * 650, 1e-9);
    EXPECT_NEAR(m.h.elements(1, 2).real(), k * 6.5950, 1e-9);
    EXPECT_NEAR(m.bath.lambda[0], k * 0.01, 1e-12);
    EXPECT_NEAR(m.bath.gamma[3], k * 45, 1e-9);
    EXPECT_EQ(m.noise.profile.J, 2000);

    const auto t = ex::tetramer_setup(ex::load_preset("maintext_tetramer"));
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(t.h.elements(i, i).real(), m.h.elements(i, i).real(), 1e-9);
    EXPECT_NEAR(t.h.elements(0, 1).real(), k * 6.3, 1e-9);
    EXPECT_NEAR(t.bath.lambda[0], m.bath.lambda[0], 1e-12);
    EXPECT_NEAR(t.bath.gamma[0], m.bath.gamma[0], 1e-9);
    EXPECT_NEAR(t.bath.temperature, 5e-5, 1e-15);
    EXPECT_NEAR(t.noise.profile.omega0, m.noise.profile.omega0, 1e-12);
    EXPECT_EQ(t.noise.profile.J, m.noise.profile.J);
    // the NMR-table couplings are close to, not equal to, the scaled wavenumber couplings
    EXPECT_NEAR(t.h.elements(0, 3).real() / m.h.elements(0, 3).real(), 0.25 / 0.2370, 1e-9);
}

TEST(Config, Validation) {
    using json = ex::json;
    EXPECT_THROW(ex::parse_config(json{{"kind", "nope"}, {"preset", "methods_tetramer"}}), ex::ConfigError);
    EXPECT_THROW(ex::parse_config(json{{"kind", "eet_dynamics"}}), ex::ConfigError);
    EXPECT_THROW(ex::parse_config(json{{"kind", "eet_dynamics"}, {"preset", "nope"}}), ex::ConfigError);
    EXPECT_THROW(ex::parse_config(json{{"kind", "ensemble_sweep"}, {"preset", "methods_tetramer"}, {"M_list", {100, 50}}}),
                 ex::ConfigError);
    EXPECT_THROW(ex::parse_config(json{{"kind", "ramsey"}, {"preset", "ramsey_figure"}, {"tolerance", -1}}),
                 ex::ConfigError);
    auto c = ex::parse_config(json{{"kind", "eet_dynamics"},
                                   {"preset", "methods_tetramer"},
                                   {"params", {{"bath", {{"gamma", -1.0}}}}}});
    EXPECT_THROW(ex::tetramer_setup(c.params), ex::ConfigError);
    c = ex::parse_config(json{{"kind", "eet_dynamics"}, {"preset", "methods_tetramer"}, {"params", {{"t_step_ms", 0.003}}}});
    EXPECT_THROW(ex::tetramer_setup(c.params), ex::ConfigError);
    c = ex::parse_config(json{{"kind", "eet_dynamics"}, {"preset", "methods_tetramer"}, {"params", {{"initial_site", 5}}}});
    EXPECT_THROW(ex::tetramer_setup(c.params), ex::ConfigError);
}

TEST(Config, OverridesMergeIntoPreset) {
    auto c = ex::parse_config({{"kind", "eet_dynamics"},
                               {"preset", "methods_tetramer"},
                               {"params", {{"M", 7}, {"bath", {{"lambda", 0.02}}}}}});
    EXPECT_EQ(c.params["M"], 7);
    EXPECT_EQ(c.params["bath"]["lambda"], 0.02);
    EXPECT_EQ(c.params["bath"]["gamma"], 45.0);
}

TEST(Run, CostTableBundle) {
    const auto out = scratch("cost");
    auto c = ex::parse_config({{"kind", "cost_table"}, {"params", {{"sites", 4}, {"k", 1}, {"max_depth", 8}}}});
    ex::RunOptions ro;
    ro.output_dir = out.string();
    const auto r = ex::run_experiment(c, ro);
    EXPECT_EQ(r.exit_code, ex::exit_ok);
    const auto t = io::read_csv((out / "cost.csv").string());
    ASSERT_EQ(t.rows(), 9u);
    EXPECT_EQ(t.column("depth")[4], 4.0);
    EXPECT_EQ(t.column("count")[4], 70.0);
    EXPECT_EQ(t.column("enumerated")[4], 70.0);
    for (std::size_t i = 0; i < t.rows(); ++i) EXPECT_LE(t.column("count")[i], t.column("stirling_bound")[i]);

    const auto m = ex::json::parse(slurp(out / "manifest.json"));
    for (const char* key : {"config", "config_hash", "master_seed", "version", "libraries", "runtime_s", "outputs"})
        EXPECT_TRUE(m.contains(key)) << key;
    // the config echo alone reproduces the run
    const auto again = ex::parse_config(m["config"]);
    EXPECT_EQ(again.echo().dump(), c.echo().dump());
    EXPECT_TRUE(fs::exists(out / "plot.py"));
}

TEST(Run, RamseyIsDeterministicAcrossThreadCounts) {
    const auto o1 = scratch("ramsey1"), o2 = scratch("ramsey2");
    ex::RunOptions r1, r2;
    r1.output_dir = o1.string();
    r1.threads = 1;
    r2.output_dir = o2.string();
    r2.threads = 3;
    const auto a = ex::run_experiment(small_ramsey(o1), r1);
    const auto b = ex::run_experiment(small_ramsey(o2), r2);
    ASSERT_EQ(a.exit_code, ex::exit_ok);
    ASSERT_EQ(b.exit_code, ex::exit_ok);
    for (const char* f : {"simulated.csv", "analytic.csv", "decay.csv", "report.json"})
        EXPECT_EQ(slurp(o1 / f), slurp(o2 / f)) << f;
    EXPECT_EQ(ex::json::parse(slurp(o1 / "manifest.json"))["config_hash"],
              ex::json::parse(slurp(o2 / "manifest.json"))["config_hash"]);
}

TEST(Run, EveryCsvRoundTrips) {
    const auto out = scratch("roundtrip");
    const auto r = ex::run_experiment(small_ramsey(out));
    ASSERT_EQ(r.exit_code, ex::exit_ok);
    int n = 0;
    for (const auto& f : r.files) {
        if (fs::path(f).extension() != ".csv") continue;
        const auto t = io::read_csv((out / f).string());
        std::ostringstream os;
        io::write_table(os, t);
        EXPECT_EQ(os.str(), slurp(out / f)) << f;
        ++n;
    }
    EXPECT_GE(n, 3);
}

TEST(Run, EetDynamicsBundle) {
    const auto out = scratch("eet");
    auto c = ex::parse_config({{"kind", "eet_dynamics"},
                               {"preset", "methods_tetramer"},
                               {"params", {{"M", 16}, {"t_max_ms", 0.2}, {"heom", {{"depth", 2}}}}},
                               {"tolerance", 0.5},
                               {"output_dir", out.string()}});
    const auto r = ex::run_experiment(c);
    ASSERT_EQ(r.exit_code, ex::exit_ok) << r.error;
    const auto h = io::read_csv((out / "heom.csv").string());
    const auto e = io::read_csv((out / "ensemble.csv").string());
    EXPECT_EQ(h.header, (std::vector<std::string>{"t_ms", "P1", "P2", "P3", "P4"}));
    EXPECT_EQ(e.header, (std::vector<std::string>{"t_ms", "P1", "P1_se", "P2", "P2_se", "P3", "P3_se", "P4", "P4_se"}));
    EXPECT_EQ(h.rows(), 11u);
    const auto cmp = r.report["comparison"];
    EXPECT_EQ(cmp["grid_size"], 11);
    EXPECT_EQ(cmp["pass"], cmp["max_deviation"].get<double>() <= 0.5);
    // same numbers as the library comparison of the two files
    EXPECT_DOUBLE_EQ(ex::compare_series((out / "heom.csv").string(), (out / "ensemble.csv").string()).max_deviation,
                     cmp["max_deviation"].get<double>());

    c.tolerance = 0.0;
    EXPECT_EQ(ex::run_experiment(c).exit_code, ex::exit_comparison);
}

TEST(Run, NoiselessSweepMatchesUnitaryHeom) {
    const auto out = scratch("sweep0");
    auto c = ex::parse_config({{"kind", "ensemble_sweep"},
                               {"preset", "methods_tetramer"},
                               {"params", {{"t_max_ms", 0.5}, {"bath", {{"lambda", 0.0}}}, {"noise", {{"alpha", 0.0}}}}},
                               {"M_list", {1}},
                               {"output_dir", out.string()}});
    const auto r = ex::run_experiment(c);
    ASSERT_EQ(r.exit_code, ex::exit_ok) << r.error;
    EXPECT_LT(r.report["rows"][0]["max_deviation"].get<double>(), 1e-7);
    const auto t = io::read_csv((out / "sweep.csv").string());
    EXPECT_EQ(t.header, (std::vector<std::string>{"M", "max_deviation", "rms_deviation"}));
}

TEST(Run, SweepTrendStatistic) {
    const auto out = scratch("sweep");
    auto c = ex::parse_config({{"kind", "ensemble_sweep"},
                               {"preset", "methods_tetramer"},
                               {"params", {{"t_max_ms", 0.4}, {"heom", {{"depth", 2}}}}},
                               {"M_list", {4, 64}},
                               {"seeds", 3},
                               {"output_dir", out.string()}});
    const auto r = ex::run_experiment(c);
    ASSERT_EQ(r.exit_code, ex::exit_ok) << r.error;
    ASSERT_EQ(r.report["rows"].size(), 2u);
    EXPECT_EQ(r.report["rows"][0]["per_seed_max_deviation"].size(), 3u);
    EXPECT_LT(r.report["rows"][1]["max_deviation"].get<double>(), r.report["rows"][0]["max_deviation"].get<double>());
    EXPECT_EQ(r.report["trend"]["spearman_M_vs_deviation"].get<double>(), -1.0);
    EXPECT_TRUE(r.report["trend"]["monotone_decreasing"].get<bool>());
    EXPECT_EQ(io::read_csv((out / "sweep_seeds.csv").string()).rows(), 6u);
}

TEST(Run, GrapeDesignReachesTarget) {
    const auto out = scratch("grape");
    auto c = ex::parse_config({{"kind", "grape_design"}, {"preset", "chloroform"}, {"output_dir", out.string()}});
    const auto r = ex::run_experiment(c);
    ASSERT_EQ(r.exit_code, ex::exit_ok) << r.error;
    EXPECT_GE(r.report["fidelity"].get<double>(), 0.99);
    const auto p = grape::load_pulse((out / "pulse.csv").string());
    EXPECT_NEAR(grape::fidelity(grape::cnot(), p, grape::chloroform()), r.report["fidelity"].get<double>(), 1e-12);
    const auto tr = io::read_csv((out / "fidelity.csv").string());
    EXPECT_EQ(tr.rows(), static_cast<std::size_t>(r.report["iterations"].get<int>()) + 1);
}

TEST(Run, ErrorClasses) {
    auto c = ex::parse_config({{"kind", "cost_table"}, {"params", {{"sites", 2}, {"k", 1}, {"max_depth", 2}}}});
    ex::RunOptions ro;
    ro.output_dir = "/proc/eetsim_cannot_write_here";
    EXPECT_THROW(ex::run_experiment(c, ro), ex::IoError);

    // a hierarchy over the ADO budget is a solver failure, recorded in the manifest
    const auto out = scratch("solver");
    auto s = ex::parse_config({{"kind", "eet_dynamics"},
                               {"preset", "methods_tetramer"},
                               {"params", {{"M", 1}, {"t_max_ms", 0.02}, {"heom", {{"depth", 400}}}}},
                               {"output_dir", out.string()}});
    const auto r = ex::run_experiment(s);
    EXPECT_EQ(r.exit_code, ex::exit_solver);
    EXPECT_FALSE(r.error.empty());
    EXPECT_EQ(ex::json::parse(slurp(out / "manifest.json"))["exit_status"], ex::exit_solver);

    const auto bad = scratch("badparams");
    auto b = ex::parse_config({{"kind", "ramsey"},
                               {"preset", "ramsey_figure"},
                               {"params", {{"omega_L", -1}}},
                               {"output_dir", bad.string()}});
    EXPECT_THROW(ex::run_experiment(b), ex::ConfigError);
}

TEST(Cli, VerbsAndExitCodes) {
    const auto dir = scratch("verbs");
    fs::create_directories(dir);
    EXPECT_EQ(run_cli("cost --sites 4 --k 1 --depth 8"), 0);
    EXPECT_EQ(run_cli("frobnicate"), ex::exit_config);

    io::write_csv((dir / "a.csv").string(), series({0, 1, 2}, {0.1, 0.4, 0.2}));
    io::write_csv((dir / "b.csv").string(), series({0, 1, 2}, {0.2, 0.5, 0.3}));
    io::write_csv((dir / "q.csv").string(), series({0, 1, 2}, {0.2, 0.5, 0.3}, "Q"));
    const std::string a = (dir / "a.csv").string(), b = (dir / "b.csv").string(), q = (dir / "q.csv").string();
    EXPECT_EQ(run_cli("compare " + a + " " + a + " --tol 0"), 0);
    EXPECT_EQ(run_cli("compare " + a + " " + b + " --tol 0.05"), ex::exit_comparison);
    EXPECT_EQ(run_cli("compare " + a + " " + b + " --tol 0.11"), 0);
    EXPECT_EQ(run_cli("compare " + a + " " + q + " --tol 1"), ex::exit_config);
    EXPECT_EQ(run_cli("compare " + a + " " + (dir / "missing.csv").string() + " --tol 1"), ex::exit_io);

    std::ofstream(dir / "bad.json") << R"({"kind": "eet_dynamics", "preset": "no_such_preset"})";
    EXPECT_EQ(run_cli("run " + (dir / "bad.json").string()), ex::exit_config);
    std::ofstream(dir / "cost.json") << R"({"kind": "cost_table", "params": {"sites": 4, "k": 1, "max_depth": 4}})";
    EXPECT_EQ(run_cli("run " + (dir / "cost.json").string() + " -o /proc/eetsim_nope"), ex::exit_io);

    // default output directory from the environment
    const std::string env_out = (dir / "from_env").string();
    const std::string cmd = "EETSIM_OUTPUT_DIR=" + env_out + " " + EETSIM_CLI_PATH + " run " +
                            (dir / "cost.json").string() + " > /dev/null 2>&1";
    EXPECT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(fs::path(env_out) / "cost.csv"));
}
