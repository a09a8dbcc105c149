// experiment.hpp: config-driven experiment runner, presets, series comparison
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/version.hpp>
#include <json.hpp>

#include "eetsim.hpp"

#ifndef EETSIM_PRESET_DIR
#define EETSIM_PRESET_DIR "presets"
#endif

namespace eetsim::experiment {

using json = nlohmann::json;

inline constexpr const char* version = "0.1.0";

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_solver = 3, exit_comparison = 4, exit_io = 5 };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ----- comparison -----

struct ComparisonReport {
    std::vector<std::string> columns;
    std::vector<double> max_abs;     // per shared column
    double max_deviation{0.0};
    double rms_deviation{0.0};
    std::size_t grid_size{0};
    bool interpolated{false};
    double tolerance{std::numeric_limits<double>::infinity()};
    bool pass{true};

    json to_json() const {
        json j;
        j["columns"] = columns;
        j["max_abs_deviation"] = max_abs;
        j["max_deviation"] = max_deviation;
        j["rms_deviation"] = rms_deviation;
        j["grid_size"] = grid_size;
        j["interpolated"] = interpolated;
        j["tolerance"] = std::isfinite(tolerance) ? json(tolerance) : json(nullptr);
        j["pass"] = pass;
        return j;
    }
};

// Deviations of b from a on a's time grid (first column). b is interpolated linearly when
// the grids differ; points of a outside b's time range are skipped.
inline ComparisonReport compare_tables(const io::Table& a, const io::Table& b,
                                       double tolerance = std::numeric_limits<double>::infinity()) {
    if (a.header.empty() || b.header.empty()) throw std::invalid_argument("compare: empty table");
    if (a.header[0] != b.header[0])
        throw std::invalid_argument("compare: time columns differ ('" + a.header[0] + "' vs '" + b.header[0] + "')");
    ComparisonReport r;
    r.tolerance = tolerance;
    std::vector<std::pair<int, int>> idx;
    for (std::size_t i = 1; i < a.header.size(); ++i) {
        const int k = b.find(a.header[i]);
        if (k > 0) {
            r.columns.push_back(a.header[i]);
            idx.emplace_back(static_cast<int>(i), k);
        }
    }
    if (idx.empty()) throw std::invalid_argument("compare: no shared value columns");
    const auto& ta = a.columns[0];
    const auto& tb = b.columns[0];
    if (ta.empty() || tb.empty()) throw std::invalid_argument("compare: empty series");
    for (std::size_t i = 1; i < tb.size(); ++i)
        if (!(tb[i] > tb[i - 1])) throw std::invalid_argument("compare: time column of b not increasing");

    bool same = ta.size() == tb.size();
    for (std::size_t i = 0; same && i < ta.size(); ++i)
        same = std::abs(ta[i] - tb[i]) <= 1e-12 * std::max(1.0, std::abs(ta[i]));
    r.interpolated = !same;

    r.max_abs.assign(idx.size(), 0.0);
    double ss = 0.0;
    std::size_t nvals = 0;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        std::size_t lo = i;
        double w = 0.0;
        if (!same) {
            const double t = ta[i];
            if (t < tb.front() - 1e-12 || t > tb.back() + 1e-12) continue;
            auto it = std::upper_bound(tb.begin(), tb.end(), t);
            lo = it == tb.begin() ? 0 : static_cast<std::size_t>(it - tb.begin()) - 1;
            if (lo + 1 >= tb.size()) lo = tb.size() >= 2 ? tb.size() - 2 : 0;
            w = tb.size() >= 2 ? std::clamp((t - tb[lo]) / (tb[lo + 1] - tb[lo]), 0.0, 1.0) : 0.0;
        }
        for (std::size_t c = 0; c < idx.size(); ++c) {
            const auto& vb = b.columns[idx[c].second];
            const double bv = w == 0.0 ? vb[lo] : (1.0 - w) * vb[lo] + w * vb[lo + 1];
            const double d = std::abs(a.columns[idx[c].first][i] - bv);
            r.max_abs[c] = std::max(r.max_abs[c], d);
            ss += d * d;
            ++nvals;
        }
        ++r.grid_size;
    }
    if (r.grid_size == 0) throw std::invalid_argument("compare: grids do not overlap");
    r.max_deviation = *std::max_element(r.max_abs.begin(), r.max_abs.end());
    r.rms_deviation = std::sqrt(ss / double(nvals));
    r.pass = r.max_deviation <= tolerance;
    return r;
}

inline ComparisonReport compare_series(const std::string& a_path, const std::string& b_path,
                                       double tolerance = std::numeric_limits<double>::infinity()) {
    io::Table a, b;
    try {
        a = io::read_csv(a_path);
        b = io::read_csv(b_path);
    } catch (const std::exception& e) {
        throw IoError(e.what());
    }
    return compare_tables(a, b, tolerance);
}

// ----- presets and config -----

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"methods_tetramer", "maintext_tetramer", "ramsey_figure", "chloroform"};
    return names;
}

inline std::string preset_dir() {
    if (const char* d = std::getenv("EETSIM_PRESET_DIR"); d && *d) return d;
    return EETSIM_PRESET_DIR;
}

inline json load_preset(const std::string& name) {
    const auto& names = preset_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) throw ConfigError("unknown preset '" + name + "'");
    const std::string path = preset_dir() + "/" + name + ".json";
    std::ifstream f(path);
    if (!f) throw ConfigError("preset file not found: " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("preset " + name + ": " + e.what());
    }
}

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds{"eet_dynamics", "ramsey", "grape_design", "ensemble_sweep", "cost_table"};
    return kinds;
}

struct ExperimentConfig {
    std::string kind;
    std::string preset;                 // empty for inline parameters
    json params = json::object();       // preset merged with overrides
    std::uint64_t master_seed{1};
    std::string output_dir;
    std::optional<double> tolerance;
    unsigned threads{0};                // 0 = hardware concurrency
    std::vector<std::size_t> M_list;    // ensemble_sweep
    int seeds{1};                       // ensemble_sweep: master_seed, master_seed + 1, ...
    std::optional<double> min_improved_fraction;

    json echo() const {
        json j;
        j["kind"] = kind;
        if (!preset.empty()) j["preset"] = preset;
        j["params"] = params;
        j["master_seed"] = master_seed;
        if (tolerance) j["tolerance"] = *tolerance;
        if (!M_list.empty()) j["M_list"] = M_list;
        if (kind == "ensemble_sweep") j["seeds"] = seeds;
        if (min_improved_fraction) j["min_improved_fraction"] = *min_improved_fraction;
        return j;
    }
};

namespace detail {

inline double num(const json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("missing parameter '" + key + "'");
    if (!j[key].is_number()) throw ConfigError("parameter '" + key + "' must be a number");
    const double v = j[key].get<double>();
    if (!std::isfinite(v)) throw ConfigError("parameter '" + key + "' must be finite");
    return v;
}
inline double num_or(const json& j, const std::string& key, double fallback) {
    return j.contains(key) ? num(j, key) : fallback;
}
inline double positive(const json& j, const std::string& key) {
    const double v = num(j, key);
    if (!(v > 0)) throw ConfigError("parameter '" + key + "' must be > 0");
    return v;
}
inline double nonnegative(const json& j, const std::string& key) {
    const double v = num(j, key);
    if (!(v >= 0)) throw ConfigError("parameter '" + key + "' must be >= 0");
    return v;
}
inline long integer(const json& j, const std::string& key, long lo) {
    const double v = num(j, key);
    if (v != std::floor(v) || v < double(lo)) throw ConfigError("parameter '" + key + "' must be an integer >= " + std::to_string(lo));
    return static_cast<long>(v);
}
inline const json& section(const json& j, const std::string& key) {
    if (!j.contains(key) || !j[key].is_object()) throw ConfigError("missing section '" + key + "'");
    return j[key];
}
inline std::string text_or(const json& j, const std::string& key, const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_string()) throw ConfigError("parameter '" + key + "' must be a string");
    return j[key].get<std::string>();
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    using namespace detail;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    c.kind = text_or(j, "kind", "");
    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end())
        throw ConfigError("unknown or missing experiment kind '" + c.kind + "'");
    if (j.contains("preset")) {
        c.preset = text_or(j, "preset", "");
        c.params = load_preset(c.preset);
    }
    if (j.contains("params")) {
        if (!j["params"].is_object()) throw ConfigError("'params' must be an object");
        c.params.merge_patch(j["params"]);
    }
    if (c.kind != "cost_table" && c.preset.empty() && !j.contains("params"))
        throw ConfigError("config needs a preset or inline params");
    if (j.contains("master_seed")) {
        if (!j["master_seed"].is_number_integer() || j["master_seed"].get<long long>() < 0)
            throw ConfigError("master_seed must be a nonnegative integer");
        c.master_seed = j["master_seed"].get<std::uint64_t>();
    }
    c.output_dir = text_or(j, "output_dir", "");
    if (j.contains("tolerance")) c.tolerance = nonnegative(j, "tolerance");
    if (j.contains("threads")) c.threads = static_cast<unsigned>(integer(j, "threads", 0));
    if (j.contains("M_list")) {
        if (!j["M_list"].is_array() || j["M_list"].empty()) throw ConfigError("M_list must be a nonempty array");
        for (const auto& m : j["M_list"]) {
            if (!m.is_number_integer() || m.get<long long>() < 1) throw ConfigError("M_list entries must be integers >= 1");
            c.M_list.push_back(m.get<std::size_t>());
        }
    }
    if (j.contains("seeds")) c.seeds = static_cast<int>(integer(j, "seeds", 1));
    if (j.contains("min_improved_fraction")) c.min_improved_fraction = nonnegative(j, "min_improved_fraction");
    if (c.kind == "ensemble_sweep") {
        if (c.M_list.empty()) throw ConfigError("ensemble_sweep needs M_list");
        for (std::size_t i = 1; i < c.M_list.size(); ++i)
            if (c.M_list[i] <= c.M_list[i - 1]) throw ConfigError("M_list must be increasing");
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(j);
}

// ----- physical setups -----

// frequency converter for the preset's "unit": "kHz" (cyclic), "cm-1", or "rad/ms"
struct UnitReader {
    std::string unit{"kHz"};

    double frequency(double v) const {
        if (unit == "kHz") return khz(v);
        if (unit == "cm-1") return UnitScaler{}.wavenumber_to_nmr(v);
        if (unit == "rad/ms") return v;
        throw ConfigError("unknown unit '" + unit + "'");
    }
    double temperature(double kelvin) const { return unit == "cm-1" ? UnitScaler{}.temperature_to_nmr(kelvin) : kelvin; }
};

inline std::vector<double> time_grid(double t_max, double t_step) {
    const long n = std::lround(t_max / t_step);
    std::vector<double> g(static_cast<std::size_t>(n) + 1);
    for (long i = 0; i <= n; ++i) g[static_cast<std::size_t>(i)] = double(i) * t_step;
    return g;
}

struct NoiseSetup {
    NoiseProfile profile;
    Sampling sampling{Sampling::step_average};
};

// Debye comb for (lambda, gamma, T); lambda = 0 or alpha = 0 gives a silent comb
inline NoiseSetup noise_setup(const json& p, const UnitReader& u) {
    using namespace detail;
    const auto& bath = section(p, "bath");
    const auto& nz = section(p, "noise");
    const double lambda = u.frequency(nonnegative(bath, "lambda"));
    const double gamma = u.frequency(positive(bath, "gamma"));
    const double T = u.temperature(positive(bath, "temperature_K"));
    const double w0 = u.frequency(positive(nz, "omega0"));
    const double wJ = u.frequency(positive(nz, "omega_J"));
    const double alpha = nonnegative(nz, "alpha");
    const double ratio = wJ / w0;
    const long J = std::lround(ratio);
    if (J < 1 || std::abs(ratio - double(J)) > 1e-6 * ratio) throw ConfigError("omega_J must be an integer multiple of omega0");
    NoiseSetup s;
    const std::string samp = text_or(nz, "sampling", "step_average");
    if (samp == "step_average") s.sampling = Sampling::step_average;
    else if (samp == "point") s.sampling = Sampling::point;
    else throw ConfigError("unknown sampling '" + samp + "'");
    if (lambda == 0.0 || alpha == 0.0) {
        s.profile = NoiseProfile{w0, static_cast<int>(J), 1.0, std::vector<double>(static_cast<std::size_t>(J), 0.0)};
    } else {
        try {
            s.profile = modulation_profile(Debye{lambda, gamma}, T, w0, static_cast<int>(J), alpha);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    return s;
}

struct TetramerSetup {
    HamiltonianMatrix h;
    heom::BathParams bath;
    NoiseSetup noise;
    NoiseMapping mapping{NoiseMapping::paired};
    double dt{0.004};
    std::vector<double> grid;
    int initial_site{1};
    int depth{3};
    double step_scale{0.5};
    std::size_t M{150};
};

inline TetramerSetup tetramer_setup(const json& p) {
    using namespace detail;
    TetramerSetup s;
    const UnitReader u{text_or(p, "unit", "kHz")};
    if (!p.contains("site_energies") || !p["site_energies"].is_array() || p["site_energies"].empty())
        throw ConfigError("missing site_energies");
    std::vector<double> e;
    for (const auto& v : p["site_energies"]) {
        if (!v.is_number()) throw ConfigError("site_energies must be numbers");
        e.push_back(u.frequency(v.get<double>()));
    }
    const int n = static_cast<int>(e.size());
    CouplingMap cm;
    if (p.contains("couplings")) {
        for (const auto& c : p["couplings"]) {
            if (!c.is_array() || c.size() != 3 || !c[0].is_number_integer() || !c[1].is_number_integer() || !c[2].is_number())
                throw ConfigError("couplings entries must be [i, j, value]");
            cm[{c[0].get<int>(), c[1].get<int>()}] = u.frequency(c[2].get<double>());
        }
    }
    try {
        s.h = build_exciton_hamiltonian(e, cm, UnitTag::NMR_angular);
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
    }
    const auto& bath = section(p, "bath");
    s.bath = heom::BathParams::uniform(n, u.frequency(nonnegative(bath, "lambda")), u.frequency(positive(bath, "gamma")),
                                       u.temperature(positive(bath, "temperature_K")));
    s.noise = noise_setup(p, u);
    try {
        s.mapping = noise_mapping_from_string(text_or(section(p, "noise"), "mapping", "paired"));
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
    }
    if (s.mapping == NoiseMapping::single) throw ConfigError("mapping 'single' is for one-qubit setups");
    s.dt = positive(p, "dt_ms");
    const double t_step = positive(p, "t_step_ms");
    const double k = t_step / s.dt;
    if (std::abs(k - std::round(k)) > 1e-6 * k) throw ConfigError("t_step_ms must be a multiple of dt_ms");
    s.grid = time_grid(positive(p, "t_max_ms"), t_step);
    s.initial_site = static_cast<int>(integer(p, "initial_site", 1));
    if (s.initial_site > n) throw ConfigError("initial_site outside 1.." + std::to_string(n));
    const json heom_sec = p.contains("heom") ? p["heom"] : json::object();
    s.depth = static_cast<int>(heom_sec.contains("depth") ? integer(heom_sec, "depth", 0) : 3);
    s.step_scale = heom_sec.contains("step_scale") ? positive(heom_sec, "step_scale") : 0.5;
    s.M = static_cast<std::size_t>(p.contains("M") ? integer(p, "M", 1) : 150);
    return s;
}

// ----- artifact bundle -----

struct RunOptions {
    std::optional<unsigned> threads;         // overrides the config
    std::optional<std::string> output_dir;   // overrides the config and the environment
};

struct RunOutcome {
    int exit_code{exit_ok};
    std::string output_dir;
    std::vector<std::string> files;
    json report;
    std::string error;
};

inline std::string default_output_dir() {
    if (const char* d = std::getenv("EETSIM_OUTPUT_DIR"); d && *d) return d;
    return "eetsim_out";
}

// FNV-1a, 64 bit
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

namespace detail {

struct Bundle {
    std::filesystem::path dir;
    std::vector<std::string> files;

    void csv(const std::string& name, const io::Table& t) {
        try {
            io::write_csv((dir / name).string(), t);
        } catch (const std::exception& e) {
            throw IoError(e.what());
        }
        files.push_back(name);
    }
    void text(const std::string& name, const std::string& body) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!(f << body)) throw IoError("cannot write " + (dir / name).string());
        files.push_back(name);
    }
};

inline const char* plot_stub = R"(# Plotting stub: python3 plot.py [file.csv ...]
# Plots every column of each CSV against its first column.
import csv
import pathlib
import sys

import matplotlib.pyplot as plt

here = pathlib.Path(__file__).parent
paths = [pathlib.Path(p) for p in sys.argv[1:]] or sorted(here.glob("*.csv"))
for path in paths:
    with open(path) as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    header, data = rows[0], [[float(x) for x in r] for r in rows[1:]]
    if not data:
        continue
    fig, ax = plt.subplots()
    for c in range(1, len(header)):
        if header[c].endswith("_se"):
            continue
        ax.plot([r[0] for r in data], [r[c] for r in data], label=header[c])
    ax.set_xlabel(header[0])
    ax.legend()
    ax.set_title(path.stem)
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)
)";

inline io::Table population_table(const std::vector<double>& t, const Eigen::MatrixXd& mean, const Eigen::MatrixXd* se) {
    io::Table tb;
    tb.add_column("t_ms", t);
    for (Eigen::Index c = 0; c < mean.cols(); ++c) {
        const std::string name = "P" + std::to_string(c + 1);
        std::vector<double> v(static_cast<std::size_t>(mean.rows()));
        for (Eigen::Index r = 0; r < mean.rows(); ++r) v[static_cast<std::size_t>(r)] = mean(r, c);
        tb.add_column(name, v);
        if (se) {
            for (Eigen::Index r = 0; r < mean.rows(); ++r) v[static_cast<std::size_t>(r)] = (*se)(r, c);
            tb.add_column(name + "_se", v);
        }
    }
    return tb;
}

inline json heom_diagnostics(const heom::HeomResult& r, int depth) {
    return {{"depth", depth}, {"n_ados", r.n_ados}, {"step_ms", r.step}, {"max_trace_error", r.max_trace_error},
            {"max_hermiticity_error", r.max_hermiticity_error}, {"warnings", r.warnings}};
}

inline heom::HeomResult run_heom(const TetramerSetup& s) {
    heom::PropagateOptions o;
    o.step_scale = s.step_scale;
    return heom::heom_propagate(s.h, s.bath, site_projector(s.initial_site, static_cast<int>(s.h.dim())), s.grid, s.depth, o);
}

inline EnsembleResult run_ensemble(const TetramerSetup& s, std::size_t M, std::uint64_t seed, unsigned threads) {
    EnsembleOptions o;
    o.mapping = s.mapping;
    o.sampling = s.noise.sampling;
    o.threads = threads;
    return ensemble_average(s.h, s.noise.profile, M, s.dt, s.grid, encode_site(s.initial_site, static_cast<int>(s.h.dim())),
                            seed, o);
}

inline double tol_or_inf(const ExperimentConfig& c) {
    return c.tolerance ? *c.tolerance : std::numeric_limits<double>::infinity();
}

// Spearman rank correlation, average ranks for ties
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> o(v.size());
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = i;
        std::sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < o.size();) {
            std::size_t j = i;
            while (j + 1 < o.size() && v[o[j + 1]] == v[o[i]]) ++j;
            for (std::size_t k = i; k <= j; ++k) r[o[k]] = 0.5 * double(i + j);
            i = j + 1;
        }
        return r;
    };
    if (x.size() < 2) return 0.0;
    const auto rx = ranks(x), ry = ranks(y);
    const double n = double(x.size()), m = (n - 1) / 2;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - m) * (ry[i] - m);
        sxx += (rx[i] - m) * (rx[i] - m);
        syy += (ry[i] - m) * (ry[i] - m);
    }
    return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

// ----- experiment kinds -----

inline bool eet_dynamics(const ExperimentConfig& c, unsigned threads, Bundle& out, json& report) {
    const auto s = tetramer_setup(c.params);
    const auto h = run_heom(s);
    const auto e = run_ensemble(s, s.M, c.master_seed, threads);
    const auto ht = population_table(h.t, h.populations, nullptr);
    const auto et = population_table(e.t, e.mean, &e.stderr_);
    out.csv("heom.csv", ht);
    out.csv("ensemble.csv", et);
    const auto cmp = compare_tables(ht, et, tol_or_inf(c));
    report["comparison"] = cmp.to_json();
    report["heom"] = heom_diagnostics(h, s.depth);
    report["ensemble"] = {{"M", e.M}, {"mapping", to_string(s.mapping)}, {"master_seed", e.master_seed},
                          {"max_standard_error", e.stderr_.maxCoeff()}};
    return cmp.pass;
}

inline bool ensemble_sweep(const ExperimentConfig& c, unsigned threads, Bundle& out, json& report) {
    const auto s = tetramer_setup(c.params);
    const auto h = run_heom(s);
    const auto ht = population_table(h.t, h.populations, nullptr);
    out.csv("heom.csv", ht);
    const std::size_t nm = c.M_list.size();
    std::vector<std::vector<double>> dev(nm), rms(nm);
    io::Table per_seed;
    std::vector<double> ps_m, ps_seed, ps_dev, ps_rms;
    for (std::size_t i = 0; i < nm; ++i)
        for (int k = 0; k < c.seeds; ++k) {
            const std::uint64_t seed = c.master_seed + static_cast<std::uint64_t>(k);
            const auto e = run_ensemble(s, c.M_list[i], seed, threads);
            const auto cmp = compare_tables(ht, population_table(e.t, e.mean, nullptr));
            dev[i].push_back(cmp.max_deviation);
            rms[i].push_back(cmp.rms_deviation);
            ps_m.push_back(double(c.M_list[i]));
            ps_seed.push_back(double(seed));
            ps_dev.push_back(cmp.max_deviation);
            ps_rms.push_back(cmp.rms_deviation);
        }
    auto mean = [](const std::vector<double>& v) {
        double a = 0;
        for (double x : v) a += x;
        return a / double(v.size());
    };
    std::vector<double> m_col, dev_col, rms_col;
    for (std::size_t i = 0; i < nm; ++i) {
        m_col.push_back(double(c.M_list[i]));
        dev_col.push_back(mean(dev[i]));
        rms_col.push_back(mean(rms[i]));
    }
    io::Table tb;
    tb.add_column("M", m_col);
    tb.add_column("max_deviation", dev_col);
    tb.add_column("rms_deviation", rms_col);
    out.csv("sweep.csv", tb);
    per_seed.add_column("M", ps_m);
    per_seed.add_column("seed", ps_seed);
    per_seed.add_column("max_deviation", ps_dev);
    per_seed.add_column("rms_deviation", ps_rms);
    out.csv("sweep_seeds.csv", per_seed);

    bool monotone = true;
    for (std::size_t i = 1; i < nm; ++i) monotone = monotone && dev_col[i] < dev_col[i - 1];
    int improved = 0;
    for (int k = 0; k < c.seeds; ++k) improved += dev[nm - 1][static_cast<std::size_t>(k)] < dev[0][static_cast<std::size_t>(k)];
    const double frac = nm > 1 ? double(improved) / double(c.seeds) : 0.0;
    const double tol = tol_or_inf(c);
    bool pass = dev_col.back() <= tol;
    if (c.min_improved_fraction && nm > 1) pass = pass && frac >= *c.min_improved_fraction;
    report["heom"] = heom_diagnostics(h, s.depth);
    report["mapping"] = to_string(s.mapping);
    report["rows"] = json::array();
    for (std::size_t i = 0; i < nm; ++i)
        report["rows"].push_back({{"M", c.M_list[i]}, {"max_deviation", dev_col[i]}, {"rms_deviation", rms_col[i]},
                                  {"per_seed_max_deviation", dev[i]}});
    report["trend"] = {{"spearman_M_vs_deviation", spearman(m_col, dev_col)},
                       {"monotone_decreasing", monotone},
                       {"fraction_of_seeds_improved", frac},
                       {"seeds", c.seeds}};
    report["tolerance"] = std::isfinite(tol) ? json(tol) : json(nullptr);
    report["pass"] = pass;
    return pass;
}

inline bool ramsey(const ExperimentConfig& c, unsigned threads, Bundle& out, json& report) {
    using namespace detail;
    const json& p = c.params;
    const UnitReader u{text_or(p, "unit", "kHz")};
    const auto ns = noise_setup(p, u);
    const double omega_L = u.frequency(positive(p, "omega_L"));
    const double dt = positive(p, "dt_ms");
    const double t_step = positive(p, "t_step_ms");
    if (std::abs(t_step / dt - std::round(t_step / dt)) > 1e-6 * t_step / dt)
        throw ConfigError("t_step_ms must be a multiple of dt_ms");
    const double t_max = positive(p, "t_max_ms");
    const auto& bath = section(p, "bath");
    const double lambda = u.frequency(nonnegative(bath, "lambda"));
    const double gamma = u.frequency(positive(bath, "gamma"));
    const double T = u.temperature(positive(bath, "temperature_K"));
    const double se_factor = num_or(p, "se_factor", 3.0);

    RamseyConfig rc;
    rc.omega_L = omega_L;
    rc.t_grid = time_grid(t_max, t_step);
    rc.dt = dt;
    rc.M = static_cast<std::size_t>(p.contains("M") ? integer(p, "M", 1) : 500);
    rc.source = ns.profile;
    RamseyOptions ro;
    ro.sampling = ns.sampling;
    ro.threads = threads;
    const auto sim = ramsey_simulate(rc, ns.profile, c.master_seed, ro);
    const auto comb = ramsey_analytic(rc);
    const auto chi_v = decay_exponent(rc);
    std::vector<double> re_g(rc.t_grid.size(), 0.0), line(rc.t_grid.size(), 0.0);
    if (lambda > 0) {
        RamseyConfig lc = rc;
        lc.source = make_lineshape(lambda, gamma, T, t_max);
        re_g = decay_exponent(lc);
        line = ramsey_analytic(lc);
    } else {
        for (std::size_t i = 0; i < line.size(); ++i) line[i] = 0.5 * (1 + std::cos(omega_L * rc.t_grid[i]));
    }

    io::Table st, at, xt;
    st.add_column("t_ms", sim.t);
    st.add_column("P0", sim.mean);
    st.add_column("P0_se", sim.stderr_);
    at.add_column("t_ms", rc.t_grid);
    at.add_column("P0", comb);
    at.add_column("P0_lineshape", line);
    xt.add_column("t_ms", rc.t_grid);
    xt.add_column("chi", chi_v);
    xt.add_column("re_g", re_g);
    out.csv("simulated.csv", st);
    out.csv("analytic.csv", at);
    out.csv("decay.csv", xt);

    const auto cmp = compare_tables(at, st, tol_or_inf(c));
    double mean_se = 0;
    for (double v : sim.stderr_) mean_se += v;
    mean_se /= double(sim.stderr_.size());
    const bool se_ok = cmp.rms_deviation <= se_factor * mean_se;
    report["comparison"] = cmp.to_json();
    report["rms_deviation"] = cmp.rms_deviation;
    report["mean_standard_error"] = mean_se;
    report["se_factor"] = se_factor;
    report["se_check"] = se_ok;
    report["M"] = sim.M;
    if (const auto t2 = fit_t2(ns.profile)) report["T2_ms"] = *t2;
    if (lambda > 0) {
        if (const auto w = decay_window(ns.profile, t_max)) {
            double worst = 0;
            for (std::size_t i = 0; i < rc.t_grid.size(); ++i)
                if (rc.t_grid[i] >= w->first && rc.t_grid[i] <= w->second && re_g[i] > 0)
                    worst = std::max(worst, std::abs(chi_v[i] / re_g[i] - 1.0));
            report["decay_window_ms"] = {w->first, w->second};
            report["max_relative_chi_vs_re_g"] = worst;
        }
    }
    try {
        const auto env = extract_envelope(sim.t, sim.mean, omega_L);
        out.csv("envelope.csv", envelope_table(env));
        report["envelope"] = {{"amplitude", env.amplitude}, {"decay_time_ms", env.decay_time}, {"fit_ok", env.fit_ok}};
    } catch (const std::invalid_argument& e) {
        report["envelope"] = {{"error", e.what()}};
    }
    return cmp.pass && se_ok;
}

inline bool grape_design(const ExperimentConfig& c, unsigned threads, Bundle& out, json& report) {
    (void)threads;
    using namespace detail;
    const json& p = c.params;
    if (!p.contains("shifts_hz") || !p["shifts_hz"].is_array()) throw ConfigError("missing shifts_hz");
    std::vector<double> shifts;
    for (const auto& v : p["shifts_hz"]) {
        if (!v.is_number()) throw ConfigError("shifts_hz must be numbers");
        shifts.push_back(v.get<double>());
    }
    std::map<std::pair<int, int>, double> jc;
    if (p.contains("couplings_hz"))
        for (const auto& v : p["couplings_hz"]) {
            if (!v.is_array() || v.size() != 3) throw ConfigError("couplings_hz entries must be [k, l, J]");
            jc[{v[0].get<int>(), v[1].get<int>()}] = v[2].get<double>();
        }
    grape::SpinSystem sys;
    try {
        sys = grape::make_spin_system(shifts, jc);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const Eigen::Index dim = sys.h_int.dim();
    const int L = static_cast<int>(integer(p, "segments", 1));
    const double dt = positive(p, "duration_ms") / L;
    grape::OptimizeOptions o;
    o.epsilon0 = num_or(p, "epsilon0", o.epsilon0);
    o.max_iter = static_cast<int>(p.contains("max_iter") ? integer(p, "max_iter", 1) : o.max_iter);
    o.target_fidelity = num_or(p, "target_fidelity", o.target_fidelity);
    if (!(o.target_fidelity > 0 && o.target_fidelity <= 1)) throw ConfigError("target_fidelity must be in (0, 1]");
    const std::string mode = text_or(p, "gradient", "first_order");
    if (mode == "first_order") o.mode = grape::GradientMode::first_order;
    else if (mode == "exact") o.mode = grape::GradientMode::exact;
    else throw ConfigError("unknown gradient mode '" + mode + "'");
    o.seed = c.master_seed;

    const std::string target_name = text_or(p, "target", "cnot");
    rng::SplitMix64 tg{c.master_seed};
    cmat target;
    if (target_name == "cnot") {
        if (sys.n_qubits != 2) throw ConfigError("cnot target needs two spins");
        target = grape::cnot();
    } else if (target_name == "identity") {
        target = cmat::Identity(dim, dim);
    } else if (target_name == "random") {
        target = grape::random_unitary(dim, tg);
    } else {
        throw ConfigError("unknown target '" + target_name + "'");
    }
    const auto r = grape::optimize(target, sys, L, dt, o);
    grape::save_pulse((out.dir / "pulse.csv").string(), r.pulse);
    out.files.push_back("pulse.csv");
    io::Table ft;
    std::vector<double> it(r.fidelity_trace.size());
    for (std::size_t i = 0; i < it.size(); ++i) it[i] = double(i);
    ft.add_column("iteration", it);
    ft.add_column("fidelity", r.fidelity_trace);
    out.csv("fidelity.csv", ft);
    bool pass = r.fidelity() >= o.target_fidelity;
    report["target"] = target_name;
    report["fidelity"] = r.fidelity();
    report["iterations"] = r.iterations;
    report["status"] = grape::to_string(r.status);
    report["segments"] = L;
    report["dt_ms"] = dt;
    report["gradient"] = mode;

    const long n_random = p.contains("random_targets") ? integer(p, "random_targets", 0) : 0;
    if (n_random > 0) {
        rng::SplitMix64 rg{rng::derive(c.master_seed, 1)};
        std::vector<double> idx, fid, its;
        for (long i = 0; i < n_random; ++i) {
            const cmat tu = grape::random_unitary(dim, rg);
            auto oi = o;
            oi.seed = static_cast<std::uint64_t>(i) + 1;
            const auto ri = grape::optimize(tu, sys, L, dt, oi);
            idx.push_back(double(i));
            fid.push_back(ri.fidelity());
            its.push_back(double(ri.iterations));
        }
        io::Table rt;
        rt.add_column("index", idx);
        rt.add_column("fidelity", fid);
        rt.add_column("iterations", its);
        out.csv("random_targets.csv", rt);
        auto sorted = fid;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        report["random_targets"] = {{"count", n}, {"median_fidelity", median}, {"min_fidelity", sorted.front()}};
        pass = pass && median >= o.target_fidelity;
    }
    report["pass"] = pass;
    return pass;
}

inline io::Table cost_table(int sites, int k, int max_depth) {
    std::vector<double> d, count, bound, exact, enumerated;
    for (int depth = 0; depth <= max_depth; ++depth) {
        const auto ce = heom::cost_estimate(sites, k, depth);
        d.push_back(depth);
        count.push_back(ce.count);
        bound.push_back(ce.stirling_bound);
        exact.push_back(ce.overflow ? 0.0 : 1.0);
        double en = -1;
        if (!ce.overflow && ce.count <= 1e6) en = double(heom::build_hierarchy(sites * k, depth).size());
        enumerated.push_back(en);
    }
    io::Table t;
    t.add_column("depth", d);
    t.add_column("count", count);
    t.add_column("stirling_bound", bound);
    t.add_column("exact", exact);
    t.add_column("enumerated", enumerated);
    return t;
}

inline bool cost(const ExperimentConfig& c, Bundle& out, json& report) {
    const json& p = c.params;
    const int sites = static_cast<int>(integer(p, "sites", 1));
    const int k = static_cast<int>(integer(p, "k", 1));
    const int depth = static_cast<int>(integer(p, "max_depth", 0));
    const auto t = cost_table(sites, k, depth);
    out.csv("cost.csv", t);
    bool ok = true;
    const auto &cnt = t.column("count"), &bnd = t.column("stirling_bound"), &en = t.column("enumerated");
    for (std::size_t i = 0; i < t.rows(); ++i) {
        ok = ok && cnt[i] <= bnd[i] * (1 + 1e-12);
        if (en[i] >= 0) ok = ok && en[i] == cnt[i];
    }
    report["sites"] = sites;
    report["k"] = k;
    report["max_depth"] = depth;
    report["counts_within_bound_and_enumeration"] = ok;
    return ok;
}

}  // namespace detail

// Runs one experiment and writes its bundle (CSVs, report.json, manifest.json, plot.py).
// Config and output-directory problems throw ConfigError / IoError; solver exceptions are
// caught, recorded in the manifest and reported as exit_solver.
inline RunOutcome run_experiment(const ExperimentConfig& c, const RunOptions& ro = {}) {
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    RunOutcome res;
    res.output_dir = ro.output_dir ? *ro.output_dir : (!c.output_dir.empty() ? c.output_dir : default_output_dir());
    const unsigned threads = ro.threads ? *ro.threads : c.threads;
    detail::Bundle out{res.output_dir, {}};
    std::error_code ec;
    fs::create_directories(out.dir, ec);
    if (ec || !fs::is_directory(out.dir)) throw IoError("cannot create output directory " + res.output_dir);
    {
        std::ofstream probe(out.dir / "manifest.json", std::ios::binary);
        if (!probe) throw IoError("output directory not writable: " + res.output_dir);
    }

    json report = json::object();
    report["kind"] = c.kind;
    bool pass = false;
    try {
        if (c.kind == "eet_dynamics") pass = detail::eet_dynamics(c, threads, out, report);
        else if (c.kind == "ensemble_sweep") pass = detail::ensemble_sweep(c, threads, out, report);
        else if (c.kind == "ramsey") pass = detail::ramsey(c, threads, out, report);
        else if (c.kind == "grape_design") pass = detail::grape_design(c, threads, out, report);
        else pass = detail::cost(c, out, report);
        res.exit_code = pass ? exit_ok : exit_comparison;
    } catch (const ConfigError&) {
        fs::remove(out.dir / "manifest.json", ec);
        throw;
    } catch (const IoError&) {
        throw;
    } catch (const std::exception& e) {
        res.exit_code = exit_solver;
        res.error = e.what();
        report["error"] = res.error;
    }
    report["exit_status"] = res.exit_code;
    out.text("report.json", report.dump(2) + "\n");
    out.text("plot.py", detail::plot_stub);

    const json echo = c.echo();
    json manifest;
    manifest["tool"] = "eetsim";
    manifest["version"] = version;
    manifest["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                           std::to_string(EIGEN_MINOR_VERSION)},
                             {"boost", BOOST_LIB_VERSION},
                             {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                   std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                   std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
#ifdef __VERSION__
    manifest["compiler"] = __VERSION__;
#endif
    manifest["config"] = echo;
    manifest["config_hash"] = "fnv1a64:" + hex64(fnv1a(echo.dump()));
    manifest["master_seed"] = c.master_seed;
    manifest["threads"] = resolve_threads(threads);
    manifest["outputs"] = out.files;
    manifest["exit_status"] = res.exit_code;
    if (!res.error.empty()) manifest["error"] = res.error;
    manifest["runtime_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    {
        std::ofstream f(out.dir / "manifest.json", std::ios::binary);
        if (!(f << manifest.dump(2) << "\n")) throw IoError("cannot write manifest in " + res.output_dir);
    }
    res.files = out.files;
    res.files.push_back("manifest.json");
    res.report = std::move(report);
    return res;
}

}  // namespace eetsim::experiment
