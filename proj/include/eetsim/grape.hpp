// grape.hpp: gradient ascent pulse engineering for piecewise-constant x/y controls
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "io.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace eetsim::grape {

struct ControlPulse {
    int n_qubits{1};
    int L{1};
    double dt{0.05};       // ms per segment
    Eigen::MatrixXd ux;    // n_qubits x L, rad/ms
    Eigen::MatrixXd uy;

    static ControlPulse zeros(int n_qubits, int L, double dt) {
        return {n_qubits, L, dt, Eigen::MatrixXd::Zero(n_qubits, L), Eigen::MatrixXd::Zero(n_qubits, L)};
    }
    double duration() const { return L * dt; }
    bool finite() const { return ux.allFinite() && uy.allFinite(); }
};

struct SpinSystem {
    int n_qubits{1};
    HamiltonianMatrix h_int;
};

// H = sum_k pi w_k Z_k + sum_{k<l} (pi J_kl / 2) Z_k Z_l with w, J in Hz; result in rad/ms
inline SpinSystem make_spin_system(const std::vector<double>& shifts_hz,
                                   const std::map<std::pair<int, int>, double>& couplings_hz = {}) {
    const int n = static_cast<int>(shifts_hz.size());
    if (n < 1) throw std::invalid_argument("spin system needs at least one spin");
    const Eigen::Index dim = Eigen::Index{1} << n;
    cmat h = cmat::Zero(dim, dim);
    const double pi = constants::pi;
    for (int k = 0; k < n; ++k) h += pi * shifts_hz[k] * 1e-3 * embed(pauli::z(), k, n);
    for (const auto& [kl, J] : couplings_hz) {
        auto [k, l] = kl;  // 1-based
        if (k < 1 || l < 1 || k > n || l > n || k == l) throw std::invalid_argument("bad coupling pair");
        h += 0.5 * pi * J * 1e-3 * embed(pauli::z(), k - 1, n) * embed(pauli::z(), l - 1, n);
    }
    return {n, HamiltonianMatrix(h, UnitTag::NMR_angular)};
}

inline SpinSystem chloroform() { return make_spin_system({3206.5, 7787.9}, {{{1, 2}, 215.1}}); }

inline cmat cnot(int n_qubits = 2) {
    if (n_qubits != 2) throw std::invalid_argument("cnot is a two-qubit gate");
    cmat u = cmat::Zero(4, 4);
    u(0, 0) = u(1, 1) = 1;
    u(2, 3) = u(3, 2) = 1;
    return u;
}

// Haar-random unitary by QR of a complex Gaussian matrix
inline cmat random_unitary(Eigen::Index dim, rng::SplitMix64& g) {
    cmat z(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) z(i, j) = cplx(g.normal(), g.normal()) / std::sqrt(2.0);
    Eigen::HouseholderQR<cmat> qr(z);
    cmat q = qr.householderQ();
    cmat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < dim; ++i) {
        const cplx d = r(i, i);
        q.col(i) *= d / std::abs(d);
    }
    return q;
}

namespace detail {
struct Controls {
    std::vector<cmat> x, y;
    explicit Controls(int n) {
        for (int k = 0; k < n; ++k) {
            x.push_back(embed(pauli::x(), k, n));
            y.push_back(embed(pauli::y(), k, n));
        }
    }
};

inline void check(const ControlPulse& p, const SpinSystem& s) {
    if (p.n_qubits != s.n_qubits || p.ux.rows() != p.n_qubits || p.uy.rows() != p.n_qubits || p.ux.cols() != p.L ||
        p.uy.cols() != p.L || p.L < 1 || !(p.dt > 0))
        throw std::invalid_argument("pulse and spin system are inconsistent");
}

inline cmat segment_hamiltonian(const ControlPulse& p, const SpinSystem& s, const Controls& c, int j) {
    cmat h = s.h_int.elements;
    for (int k = 0; k < p.n_qubits; ++k) h += p.ux(k, j) * c.x[k] + p.uy(k, j) * c.y[k];
    return h;
}
}  // namespace detail

inline std::vector<cmat> segment_propagators(const ControlPulse& p, const SpinSystem& s) {
    detail::check(p, s);
    detail::Controls c(p.n_qubits);
    std::vector<cmat> u(p.L);
    for (int j = 0; j < p.L; ++j) u[j] = expm_hermitian(detail::segment_hamiltonian(p, s, c, j), p.dt);
    return u;
}

// U_T = U_L ... U_2 U_1
inline cmat compile_propagator(const ControlPulse& p, const SpinSystem& s) {
    const auto u = segment_propagators(p, s);
    cmat U = cmat::Identity(s.h_int.dim(), s.h_int.dim());
    for (const auto& uj : u) U = (uj * U).eval();
    return U;
}

// |Tr(U_D^dagger U_T)| / 2^n
inline double fidelity(const cmat& target, const cmat& U) {
    if (target.rows() != U.rows() || target.cols() != U.cols()) throw std::invalid_argument("fidelity: dimension mismatch");
    return std::abs((target.adjoint() * U).trace()) / double(U.rows());
}

inline double fidelity(const cmat& target, const ControlPulse& p, const SpinSystem& s) {
    return fidelity(target, compile_propagator(p, s));
}

enum class GradientMode { first_order, exact };

struct Gradient {
    Eigen::MatrixXd gx, gy;   // dF/du, n_qubits x L
    double fidelity{0.0};
    bool ill_conditioned{false};

    double norm() const { return std::sqrt(gx.squaredNorm() + gy.squaredNorm()); }
};

// first_order: dU_j ~ -i dt sigma U_j. exact: Frechet derivative of the matrix exponential
// in the eigenbasis of the segment Hamiltonian.
inline Gradient gradient(const ControlPulse& p, const cmat& target, const SpinSystem& s,
                         GradientMode mode = GradientMode::exact) {
    detail::check(p, s);
    detail::Controls ctl(p.n_qubits);
    const Eigen::Index dim = s.h_int.dim();
    const int L = p.L;
    std::vector<Eigen::SelfAdjointEigenSolver<cmat>> es(L);
    std::vector<cmat> U(L);
    for (int j = 0; j < L; ++j) {
        es[j].compute(detail::segment_hamiltonian(p, s, ctl, j));
        const cvec ph = (-I1 * p.dt * es[j].eigenvalues().cast<cplx>()).array().exp();
        U[j] = es[j].eigenvectors() * ph.asDiagonal() * es[j].eigenvectors().adjoint();
    }
    // forward X_j = U_j ... U_1 (X[0] = I); backward P_j = U_D^dag U_L ... U_{j+1}
    std::vector<cmat> X(L + 1), P(L + 1);
    X[0] = cmat::Identity(dim, dim);
    for (int j = 0; j < L; ++j) X[j + 1] = U[j] * X[j];
    P[L] = target.adjoint();
    for (int j = L - 1; j >= 0; --j) P[j] = P[j + 1] * U[j];
    const cplx z = (P[L] * X[L]).trace();

    Gradient g{Eigen::MatrixXd::Zero(p.n_qubits, L), Eigen::MatrixXd::Zero(p.n_qubits, L), std::abs(z) / double(dim),
               false};
    if (std::abs(z) < 1e-10 * double(dim)) {
        g.ill_conditioned = true;
        return g;
    }
    const cplx zc = std::conj(z) / (std::abs(z) * double(dim));
    for (int j = 0; j < L; ++j) {
        // dz = Tr(W dU_j), W = X_{j} P_{j+1} with X, P indexed by segment boundaries
        const cmat W = X[j] * P[j + 1];
        if (mode == GradientMode::first_order) {
            const cmat WU = U[j] * W;  // Tr(W (-i dt s) U) = -i dt Tr(s U W)
            for (int k = 0; k < p.n_qubits; ++k) {
                g.gx(k, j) = (zc * (-I1 * p.dt) * (ctl.x[k] * WU).trace()).real();
                g.gy(k, j) = (zc * (-I1 * p.dt) * (ctl.y[k] * WU).trace()).real();
            }
            continue;
        }
        const cmat& V = es[j].eigenvectors();
        const Eigen::VectorXd& E = es[j].eigenvalues();
        cmat G(dim, dim);
        for (Eigen::Index a = 0; a < dim; ++a)
            for (Eigen::Index b = 0; b < dim; ++b) {
                const cplx la = -I1 * p.dt * E(a), lb = -I1 * p.dt * E(b);
                const cplx d = la - lb;
                G(a, b) = std::abs(d) < 1e-8 ? std::exp(0.5 * (la + lb)) * (1.0 + d * d / 24.0)
                                             : (std::exp(la) - std::exp(lb)) / d;
            }
        const cmat Wt = V.adjoint() * W * V;
        auto contrib = [&](const cmat& sigma) {
            const cmat S = (-I1 * p.dt) * (V.adjoint() * sigma * V);
            // Tr(Wt (G o S)) = sum_ab Wt(b, a) G(a, b) S(a, b)
            return (zc * (Wt.transpose().array() * G.array() * S.array()).sum()).real();
        };
        for (int k = 0; k < p.n_qubits; ++k) {
            g.gx(k, j) = contrib(ctl.x[k]);
            g.gy(k, j) = contrib(ctl.y[k]);
        }
    }
    return g;
}

// ----- optimizer -----

enum class OptimizeStatus { reached_target, max_iter, stalled };

inline std::string to_string(OptimizeStatus s) {
    switch (s) {
        case OptimizeStatus::reached_target: return "reached_target";
        case OptimizeStatus::max_iter: return "max_iter";
        case OptimizeStatus::stalled: return "stalled";
    }
    return "?";
}

struct OptimizeOptions {
    double epsilon0{0.1};
    int max_iter{2000};
    double target_fidelity{0.99};
    int patience{200};            // accepted iterations without 1e-9 progress before declaring a stall
    int max_halvings{40};
    std::uint64_t seed{1};
    double init_amplitude{2.0 * constants::pi * 0.1};  // rad/ms
    std::optional<double> amplitude_cap;
    GradientMode mode{GradientMode::first_order};
};

struct OptimizeResult {
    ControlPulse pulse;
    std::vector<double> fidelity_trace;  // fidelity after each accepted step, starting with the initial guess
    OptimizeStatus status{OptimizeStatus::max_iter};
    int iterations{0};
    double fidelity() const { return fidelity_trace.back(); }
};

inline ControlPulse random_pulse(int n_qubits, int L, double dt, double amplitude, std::uint64_t seed) {
    auto p = ControlPulse::zeros(n_qubits, L, dt);
    rng::SplitMix64 g{seed};
    for (int j = 0; j < L; ++j)
        for (int k = 0; k < n_qubits; ++k) {
            p.ux(k, j) = g.uniform(-amplitude, amplitude);
            p.uy(k, j) = g.uniform(-amplitude, amplitude);
        }
    return p;
}

inline OptimizeResult optimize(const cmat& target, const SpinSystem& sys, int L, double dt, const OptimizeOptions& o = {},
                               std::optional<ControlPulse> initial = std::nullopt) {
    if (!(o.target_fidelity > 0 && o.target_fidelity <= 1)) throw std::invalid_argument("target fidelity must be in (0, 1]");
    ControlPulse u = initial ? *initial : random_pulse(sys.n_qubits, L, dt, o.init_amplitude, o.seed);
    detail::check(u, sys);
    auto clamp = [&](ControlPulse& p) {
        if (!o.amplitude_cap) return;
        const double c = *o.amplitude_cap;
        p.ux = p.ux.cwiseMax(-c).cwiseMin(c);
        p.uy = p.uy.cwiseMax(-c).cwiseMin(c);
    };
    clamp(u);
    OptimizeResult res;
    double F = fidelity(target, u, sys);
    res.fidelity_trace.push_back(F);
    double eps = o.epsilon0;
    int since_progress = 0;
    double last_mark = F;
    for (int it = 0; it < o.max_iter; ++it) {
        res.iterations = it;
        if (F >= o.target_fidelity) {
            res.pulse = u;
            res.status = OptimizeStatus::reached_target;
            return res;
        }
        const Gradient g = gradient(u, target, sys, o.mode);
        if (g.ill_conditioned) {
            // step off the zero-overlap point along a fixed random direction
            auto kick = random_pulse(sys.n_qubits, L, dt, o.init_amplitude, o.seed + 1000003ULL * (it + 1));
            u.ux += kick.ux;
            u.uy += kick.uy;
            F = fidelity(target, u, sys);
            continue;
        }
        bool accepted = false;
        for (int h = 0; h <= o.max_halvings; ++h) {
            ControlPulse trial = u;
            trial.ux += eps * g.gx;
            trial.uy += eps * g.gy;
            clamp(trial);
            const double Ft = fidelity(target, trial, sys);
            if (Ft > F) {
                u = std::move(trial);
                F = Ft;
                eps *= 1.2;
                accepted = true;
                break;
            }
            eps *= 0.5;
        }
        if (!accepted) {
            res.pulse = u;
            res.status = OptimizeStatus::stalled;
            res.iterations = it + 1;
            return res;
        }
        res.fidelity_trace.push_back(F);
        if (F - last_mark > 1e-9) {
            last_mark = F;
            since_progress = 0;
        } else if (++since_progress >= o.patience) {
            res.pulse = u;
            res.status = OptimizeStatus::stalled;
            res.iterations = it + 1;
            return res;
        }
    }
    res.iterations = o.max_iter;
    res.pulse = u;
    res.status = F >= o.target_fidelity ? OptimizeStatus::reached_target : OptimizeStatus::max_iter;
    return res;
}

// ----- pulse files -----
// "# L=<L>,dt_ms=<dt>,n_qubits=<n>" then "segment,qubit,u_x_rad_per_ms,u_y_rad_per_ms"

inline void save_pulse(const std::string& path, const ControlPulse& p) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << "# L=" << p.L << ",dt_ms=" << io::fmt17(p.dt) << ",n_qubits=" << p.n_qubits << '\n';
    f << "segment,qubit,u_x_rad_per_ms,u_y_rad_per_ms\n";
    for (int j = 0; j < p.L; ++j)
        for (int k = 0; k < p.n_qubits; ++k)
            f << j << ',' << k << ',' << io::fmt17(p.ux(k, j)) << ',' << io::fmt17(p.uy(k, j)) << '\n';
}

inline ControlPulse load_pulse(const std::string& path) {
    auto t = io::read_csv(path);
    if (t.comments.empty()) throw std::runtime_error("pulse file lacks the L/dt/n_qubits header");
    int L = -1, n = -1;
    double dt = -1;
    for (const auto& kv : io::split(t.comments.front(), ',')) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        std::string key = kv.substr(0, eq);
        key.erase(0, key.find_first_not_of(' '));
        const std::string val = kv.substr(eq + 1);
        if (key == "L") L = std::stoi(val);
        else if (key == "dt_ms") dt = std::stod(val);
        else if (key == "n_qubits") n = std::stoi(val);
    }
    if (L < 1 || n < 1 || !(dt > 0)) throw std::runtime_error("bad pulse header in " + path);
    auto p = ControlPulse::zeros(n, L, dt);
    const auto &seg = t.column("segment"), &q = t.column("qubit"), &x = t.column("u_x_rad_per_ms"),
               &y = t.column("u_y_rad_per_ms");
    if (seg.size() != static_cast<std::size_t>(L * n)) throw std::runtime_error("pulse row count mismatch");
    for (std::size_t r = 0; r < seg.size(); ++r) {
        const int j = int(seg[r]), k = int(q[r]);
        if (j < 0 || j >= L || k < 0 || k >= n) throw std::runtime_error("pulse index out of range");
        p.ux(k, j) = x[r];
        p.uy(k, j) = y[r];
    }
    return p;
}

}  // namespace eetsim::grape
