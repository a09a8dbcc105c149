// ramsey.hpp: analytic and simulated Ramsey fringes, envelope extraction
#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "io.hpp"
#include "lineshape.hpp"
#include "spectral.hpp"
#include "trajectory.hpp"

namespace eetsim {

struct RamseyConfig {
    double omega_L{0.0};        // rad/ms
    std::vector<double> t_grid; // ms
    double dt{0.02};            // ms
    std::size_t M{1};
    std::variant<NoiseProfile, LineshapeParams> source;
};

// decay exponent D(t) with envelope exp(-2 D): chi for a comb, Re g for a lineshape
inline std::vector<double> decay_exponent(const RamseyConfig& c) {
    if (const auto* p = std::get_if<NoiseProfile>(&c.source)) return chi(*p, c.t_grid);
    const auto& lp = std::get<LineshapeParams>(c.source);
    std::vector<double> d(c.t_grid.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = lineshape_g(lp, c.t_grid[i]).real();
    return d;
}

// P0(t) = 1/2 [1 + cos(w_L t) exp(-2 chi)]  or  P1(t) = 1/2 [1 + exp(-2 Re g) cos(w_L t)]
inline std::vector<double> ramsey_analytic(const RamseyConfig& c) {
    const auto d = decay_exponent(c);
    std::vector<double> p(d.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.5 * (1.0 + std::cos(c.omega_L * c.t_grid[i]) * std::exp(-2.0 * d[i]));
    return p;
}

struct RamseySeries {
    std::vector<double> t, mean, stderr_;
    std::size_t M{0};
};

struct RamseyOptions {
    Sampling sampling{Sampling::step_average};
    unsigned threads{1};
};

// Prepare exp(i pi X/4)|0>, evolve under (w_L/2 + n(t)) Z with n = (b1 - b2)/2 from two
// independent streams, close with exp(-i pi X/4), record the |0> population.
inline RamseySeries ramsey_simulate(const RamseyConfig& c, const NoiseProfile& profile, std::uint64_t master_seed,
                                    const RamseyOptions& opt = {}) {
    if (c.M < 1) throw std::invalid_argument("ramsey_simulate: M must be >= 1");
    if (c.t_grid.empty()) throw std::invalid_argument("ramsey_simulate: empty grid");
    const auto record = grid_steps(c.t_grid, c.dt);
    const std::size_t steps = record.back();
    const Eigen::Index nt = static_cast<Eigen::Index>(c.t_grid.size());
    cmat h0 = cmat::Zero(2, 2);
    h0(0, 0) = 0.5 * c.omega_L;
    h0(1, 1) = -0.5 * c.omega_L;
    const HamiltonianMatrix base(h0, UnitTag::NMR_angular);

    auto one = [&](std::size_t m) {
        const auto s = make_schedule(base, profile, NoiseMapping::paired, c.dt, steps, trajectory_seed(master_seed, m),
                                     opt.sampling);
        const auto& n = s.terms[0].coeff;
        Eigen::MatrixXd out(nt, 1);
        double phi = 0.0;  // integral of (w_L/2 + n)
        std::size_t ri = 0;
        for (std::size_t i = 0;; ++i) {
            while (ri < record.size() && record[ri] == i) {
                const double c2 = std::cos(phi);
                out(static_cast<Eigen::Index>(ri++), 0) = c2 * c2;
            }
            if (i == steps) break;
            phi += (0.5 * c.omega_L + n[i]) * c.dt;
        }
        return out;
    };
    auto st = ensemble_reduce(c.M, opt.threads, nt, 1, one);
    RamseySeries r;
    r.t = c.t_grid;
    r.M = c.M;
    r.mean.assign(st.mean.data(), st.mean.data() + nt);
    r.stderr_.assign(st.stderr_.data(), st.stderr_.data() + nt);
    return r;
}

// ----- envelope -----

struct Envelope {
    std::vector<double> t, value;
    double amplitude{0.0};
    double decay_time{0.0};  // ms; envelope ~ amplitude * exp(-t / decay_time)
    bool fit_ok{false};
};

struct EnvelopeOptions {
    double window{0.0};        // ms; 0 = half a fringe period
    int min_samples{7};
    double fit_floor{0.02};    // envelope samples below this are left out of the decay fit
};

namespace detail {

// least-squares fit of (a0 + a1 x + a2 x^2) cos + (b0 + b1 x + b2 x^2) sin over samples [lo, hi);
// returns the magnitude at time tc
inline double local_envelope(const std::vector<double>& t, const std::vector<double>& s, double w, std::size_t lo,
                             std::size_t hi, double tm, double tc) {
    const Eigen::Index n = static_cast<Eigen::Index>(hi - lo);
    const double scale = std::max(t[hi - 1] - t[lo], 1e-300);
    Eigen::MatrixXd A(n, 6);
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double tk = t[lo + static_cast<std::size_t>(k)];
        const double x = (tk - tm) / scale;
        const double co = std::cos(w * tk), si = std::sin(w * tk);
        A.row(k) << co, x * co, x * x * co, si, x * si, x * x * si;
        y(k) = s[lo + static_cast<std::size_t>(k)];
    }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    const double x = (tc - tm) / scale;
    const double a = c(0) + x * (c(1) + x * c(2));
    const double b = c(3) + x * (c(4) + x * c(5));
    return std::hypot(a, b);
}

}  // namespace detail

// Demodulates P(t) = 1/2 [1 + E(t) cos(w_L t + phase)] and returns E(t).
inline Envelope extract_envelope(const std::vector<double>& t, const std::vector<double>& P, double omega_L,
                                 const EnvelopeOptions& opt = {}) {
    if (t.size() != P.size()) throw std::invalid_argument("extract_envelope: size mismatch");
    if (t.size() < 2 || omega_L <= 0.0) throw std::invalid_argument("extract_envelope: fewer than 3 fringe periods");
    const double periods = (t.back() - t.front()) * omega_L / (2.0 * constants::pi);
    if (periods < 3.0) throw std::invalid_argument("extract_envelope: fewer than 3 fringe periods");
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1])) throw std::invalid_argument("extract_envelope: times must increase");
    const std::size_t n = t.size();
    const std::size_t need = static_cast<std::size_t>(std::max(opt.min_samples, 6));
    if (n < need) throw std::invalid_argument("extract_envelope: too few samples");
    const double half = (opt.window > 0.0 ? opt.window : constants::pi / omega_L) / 2.0;

    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = 2.0 * P[i] - 1.0;

    Envelope e;
    e.t = t;
    e.value.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lo = i, hi = i + 1;
        while (lo > 0 && t[i] - t[lo - 1] <= half * (1 + 1e-12)) --lo;
        while (hi < n && t[hi] - t[i] <= half * (1 + 1e-12)) ++hi;
        // widen symmetrically, then one-sided at the edges
        while (hi - lo < need) {
            const bool can_lo = lo > 0, can_hi = hi < n;
            if (can_lo && (!can_hi || t[i] - t[lo - 1] <= t[hi] - t[i])) --lo;
            else ++hi;
        }
        const double tm = 0.5 * (t[lo] + t[hi - 1]);
        e.value[i] = detail::local_envelope(t, s, omega_L, lo, hi, tm, t[i]);
    }

    // exponential fit: log-linear start, then Gauss-Newton on the magnitude
    std::vector<std::size_t> use;
    for (std::size_t i = 0; i < n; ++i)
        if (e.value[i] > opt.fit_floor) use.push_back(i);
    if (use.size() >= 3) {
        Eigen::MatrixXd A(static_cast<Eigen::Index>(use.size()), 2);
        Eigen::VectorXd y(A.rows());
        for (Eigen::Index k = 0; k < A.rows(); ++k) {
            const double w = e.value[use[k]];
            A.row(k) << w, w * t[use[k]];
            y(k) = w * std::log(e.value[use[k]]);
        }
        Eigen::Vector2d c = A.colPivHouseholderQr().solve(y);
        double amp = std::exp(c(0)), rate = -c(1);
        for (int it = 0; it < 30; ++it) {
            Eigen::MatrixXd J(A.rows(), 2);
            Eigen::VectorXd r(A.rows());
            for (Eigen::Index k = 0; k < A.rows(); ++k) {
                const double tk = t[use[k]], ex = std::exp(-rate * tk);
                r(k) = e.value[use[k]] - amp * ex;
                J.row(k) << ex, -amp * tk * ex;
            }
            const Eigen::Vector2d d = J.colPivHouseholderQr().solve(r);
            amp += d(0);
            rate += d(1);
            if (d.norm() < 1e-13 * (1 + std::abs(amp) + std::abs(rate))) break;
        }
        if (std::isfinite(amp) && std::isfinite(rate) && rate > 0) {
            e.amplitude = amp;
            e.decay_time = 1.0 / rate;
            e.fit_ok = true;
        }
    }
    return e;
}

// interval [T2, t at which exp(-2 chi) = e^-5], the part of the decay where the fringe is resolvable
inline std::optional<std::pair<double, double>> decay_window(const NoiseProfile& p, double t_max) {
    const auto t2 = fit_t2(p);
    if (!t2) return std::nullopt;
    const double dt = *t2 / 200.0;
    for (double t = *t2; t <= t_max; t += dt)
        if (2.0 * chi(p, t) >= 5.0) return std::make_pair(*t2, t);
    return std::make_pair(*t2, t_max);
}

// ----- CSV -----

inline io::Table ramsey_table(const RamseySeries& r) {
    io::Table tb;
    tb.header = {"t_ms", "P0_mean", "P0_se"};
    tb.columns = {r.t, r.mean, r.stderr_};
    return tb;
}

inline io::Table ramsey_table(const std::vector<double>& t, const std::vector<double>& P) {
    io::Table tb;
    tb.header = {"t_ms", "P0"};
    tb.columns = {t, P};
    return tb;
}

inline io::Table envelope_table(const Envelope& e) {
    io::Table tb;
    tb.header = {"t_ms", "envelope"};
    tb.columns = {e.t, e.value};
    tb.comments.push_back("amplitude=" + io::fmt17(e.amplitude) + " decay_time_ms=" + io::fmt17(e.decay_time));
    return tb;
}

}  // namespace eetsim
