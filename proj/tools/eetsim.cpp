// eetsim command-line front end: run, compare, sweep, cost
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eetsim/experiment.hpp"

namespace ex = eetsim::experiment;

namespace {

int report_outcome(const ex::RunOutcome& r) {
    std::cout << r.report.dump(2) << "\n";
    std::cerr << "outputs in " << r.output_dir << " (exit " << r.exit_code << ")\n";
    if (!r.error.empty()) std::cerr << "solver failure: " << r.error << "\n";
    return r.exit_code;
}

std::vector<std::size_t> parse_m_list(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& tok : eetsim::io::split(s, ',')) {
        std::size_t pos = 0;
        long v = -1;
        try {
            v = std::stol(tok, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != tok.size() || v < 1) throw ex::ConfigError("--m expects a comma list of integers >= 1, got '" + s + "'");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"eetsim: exciton energy transfer simulations on a qubit register"};
    app.require_subcommand(1);

    unsigned threads = 0;
    bool threads_set = false;
    std::string output;

    auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
    std::string run_cfg;
    run->add_option("config", run_cfg, "config file")->required();

    auto* sweep = app.add_subcommand("sweep", "ensemble-size sweep against the HEOM reference");
    std::string sweep_cfg, m_list;
    int seeds = 0;
    sweep->add_option("config", sweep_cfg, "config file")->required();
    sweep->add_option("--m", m_list, "comma-separated ensemble sizes, e.g. 50,100,500");
    sweep->add_option("--seeds", seeds, "number of master seeds per ensemble size");

    for (auto* sc : {run, sweep}) {
        sc->add_option("--threads", threads, "worker threads (0 = all cores); results do not depend on it");
        sc->add_option("-o,--output", output, "output directory (default: config, then $EETSIM_OUTPUT_DIR)");
    }

    auto* cmp = app.add_subcommand("compare", "compare two CSV series");
    std::string a_path, b_path;
    double tol = std::numeric_limits<double>::infinity();
    cmp->add_option("a", a_path, "reference CSV")->required();
    cmp->add_option("b", b_path, "CSV interpolated onto the reference grid")->required();
    cmp->add_option("--tol", tol, "max absolute deviation tolerated")->required();

    auto* cost = app.add_subcommand("cost", "hierarchy size table for depths 0..D");
    int sites = 4, k = 1, depth = 8;
    cost->add_option("--sites", sites, "number of sites N")->required()->check(CLI::NonNegativeNumber);
    cost->add_option("--k", k, "exponentials per bath K")->required()->check(CLI::NonNegativeNumber);
    cost->add_option("--depth", depth, "maximum depth D")->required()->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : ex::exit_config;
    }
    threads_set = run->count("--threads") + sweep->count("--threads") > 0;

    try {
        ex::RunOptions ro;
        if (threads_set) ro.threads = threads;
        if (!output.empty()) ro.output_dir = output;

        if (*run) return report_outcome(ex::run_experiment(ex::load_config(run_cfg), ro));

        if (*sweep) {
            auto c = ex::load_config(sweep_cfg);
            c.kind = "ensemble_sweep";
            if (!m_list.empty()) c.M_list = parse_m_list(m_list);
            if (seeds > 0) c.seeds = seeds;
            if (c.M_list.empty()) throw ex::ConfigError("sweep needs --m or M_list in the config");
            for (std::size_t i = 1; i < c.M_list.size(); ++i)
                if (c.M_list[i] <= c.M_list[i - 1]) throw ex::ConfigError("ensemble sizes must be increasing");
            if (c.preset.empty() && c.params.empty()) throw ex::ConfigError("sweep needs a tetramer preset or params");
            return report_outcome(ex::run_experiment(c, ro));
        }

        if (*cmp) {
            ex::ComparisonReport r;
            try {
                r = ex::compare_series(a_path, b_path, tol);
            } catch (const std::invalid_argument& e) {
                std::cerr << "error: " << e.what() << "\n";
                return ex::exit_config;
            }
            std::cout << r.to_json().dump(2) << "\n";
            return r.pass ? ex::exit_ok : ex::exit_comparison;
        }

        if (*cost) {
            eetsim::io::write_table(std::cout, ex::detail::cost_table(sites, k, depth));
            return ex::exit_ok;
        }
    } catch (const ex::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return ex::exit_config;
    } catch (const ex::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return ex::exit_io;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return ex::exit_solver;
    }
    return ex::exit_ok;
}
