// trajectory.hpp: noisy piecewise-constant propagation and ensemble averages
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"
#include "noise.hpp"
#include "io.hpp"
#include "parallel.hpp"

namespace eetsim {

// How independent noise streams enter the diagonal of H.
//  paired            two streams; 4 levels: n1 = (b1+b2)/2 on Z1, n2 = (b1-b2)/2 on Z2;
//                    2 levels: (b1-b2)/2 on Z
//  independent_sites one stream per level on |k><k|
//  single            one stream on Z of a single qubit (2 levels only)
enum class NoiseMapping { paired, independent_sites, single };

inline std::string to_string(NoiseMapping m) {
    switch (m) {
        case NoiseMapping::paired: return "paired";
        case NoiseMapping::independent_sites: return "independent_sites";
        case NoiseMapping::single: return "single";
    }
    return "?";
}

inline NoiseMapping noise_mapping_from_string(const std::string& s) {
    if (s == "paired") return NoiseMapping::paired;
    if (s == "independent_sites") return NoiseMapping::independent_sites;
    if (s == "single") return NoiseMapping::single;
    throw std::invalid_argument("unknown noise mapping: " + s);
}

inline int stream_count(NoiseMapping m, Eigen::Index dim) {
    switch (m) {
        case NoiseMapping::paired:
            if (dim != 2 && dim != 4) throw std::invalid_argument("paired mapping needs 2 or 4 levels");
            return 2;
        case NoiseMapping::independent_sites: return static_cast<int>(dim);
        case NoiseMapping::single:
            if (dim != 2) throw std::invalid_argument("single mapping needs 2 levels");
            return 1;
    }
    return 0;
}

// diagonal Pauli-Z pattern with a per-step coefficient series
struct ZTerm {
    rvec pattern;
    std::vector<double> coeff;  // rad/ms, one per step
};

struct PiecewiseHamiltonianSchedule {
    HamiltonianMatrix base;
    double dt{0.02};  // ms
    std::size_t steps{0};
    std::vector<ZTerm> terms;
};

inline std::vector<ZTerm> map_streams(NoiseMapping m, Eigen::Index dim, const std::vector<std::vector<double>>& b) {
    std::vector<ZTerm> out;
    const std::size_t L = b.empty() ? 0 : b[0].size();
    if (m == NoiseMapping::paired && dim == 4) {
        rvec z1(4), z2(4);
        z1 << 1, 1, -1, -1;
        z2 << 1, -1, 1, -1;
        ZTerm t1{z1, std::vector<double>(L)}, t2{z2, std::vector<double>(L)};
        for (std::size_t i = 0; i < L; ++i) {
            t1.coeff[i] = 0.5 * (b[0][i] + b[1][i]);
            t2.coeff[i] = 0.5 * (b[0][i] - b[1][i]);
        }
        out = {t1, t2};
    } else if (m == NoiseMapping::paired) {
        rvec z(2);
        z << 1, -1;
        ZTerm t{z, std::vector<double>(L)};
        for (std::size_t i = 0; i < L; ++i) t.coeff[i] = 0.5 * (b[0][i] - b[1][i]);
        out = {t};
    } else if (m == NoiseMapping::single) {
        rvec z(2);
        z << 1, -1;
        out = {ZTerm{z, b[0]}};
    } else {
        for (Eigen::Index k = 0; k < dim; ++k) out.push_back({rvec::Unit(dim, k), b[k]});
    }
    return out;
}

inline std::uint64_t stream_seed(std::uint64_t trajectory_seed, int stream) {
    return rng::derive(trajectory_seed, static_cast<std::uint64_t>(stream));
}

inline PiecewiseHamiltonianSchedule make_schedule(const HamiltonianMatrix& h, const NoiseProfile& profile,
                                                  NoiseMapping mapping, double dt, std::size_t steps,
                                                  std::uint64_t trajectory_seed,
                                                  Sampling mode = Sampling::step_average) {
    if (h.unit != UnitTag::NMR_angular) throw std::invalid_argument("schedule expects an NMR_angular Hamiltonian");
    const int ns = stream_count(mapping, h.dim());
    std::vector<std::vector<double>> b(ns);
    for (int s = 0; s < ns; ++s) {
        auto r = realize(profile, stream_seed(trajectory_seed, s));
        b[s] = synthesize_uniform(r, 0.0, dt, steps, mode);
    }
    return {h, dt, steps, map_streams(mapping, h.dim(), b)};
}

namespace detail {

// Steps the state and calls emit(row, psi, rho) at each recorded step; only one of psi
// and rho is meaningful, according to pure.
template <int D, class Emit>
void propagate_impl(const PiecewiseHamiltonianSchedule& s, const cmat& state0, const std::vector<std::size_t>& record,
                    double* norm_drift, Emit&& emit_row) {
    using Mat = Eigen::Matrix<cplx, D, D>;
    using Vec = Eigen::Matrix<cplx, D, 1>;
    using RVec = Eigen::Matrix<double, D, 1>;
    const Eigen::Index dim = s.base.dim();
    const bool pure = state0.cols() == 1;
    const Mat H0 = s.base.elements;
    Eigen::SelfAdjointEigenSolver<Mat> es(dim);
    Vec psi;
    Mat rho;
    if (pure) psi = state0;
    else rho = state0;
    std::size_t ri = 0;
    auto emit = [&](std::size_t step) {
        while (ri < record.size() && record[ri] == step) emit_row(static_cast<Eigen::Index>(ri++), psi, rho, pure);
    };
    emit(0);
    RVec diag(dim);
    Mat Hi(dim, dim);
    Vec ph(dim);
    for (std::size_t i = 0; i < s.steps; ++i) {
        diag.setZero();
        for (const auto& t : s.terms) diag += t.coeff[i] * t.pattern;
        Hi = H0;
        Hi.diagonal() += diag.template cast<cplx>();
        es.compute(Hi);
        for (Eigen::Index d = 0; d < dim; ++d) ph(d) = std::polar(1.0, -es.eigenvalues()(d) * s.dt);
        if (pure) {
            Vec c = es.eigenvectors().adjoint() * psi;
            psi.noalias() = es.eigenvectors() * ph.cwiseProduct(c);
        } else {
            const Mat U = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
            rho = (U * rho * U.adjoint()).eval();
        }
        emit(i + 1);
    }
    if (norm_drift) *norm_drift = pure ? std::abs(psi.squaredNorm() - 1.0) : std::abs(rho.trace() - 1.0);
}

inline std::vector<std::size_t> check_inputs(const PiecewiseHamiltonianSchedule& s, const cmat& state0,
                                             std::vector<std::size_t> record) {
    const Eigen::Index dim = s.base.dim();
    if (state0.rows() != dim || (state0.cols() != 1 && state0.cols() != dim))
        throw std::invalid_argument("propagate_trajectory: state dimension mismatch");
    const bool pure = state0.cols() == 1;
    const double nrm = pure ? state0.squaredNorm() : state0.trace().real();
    if (std::abs(nrm - 1.0) > 1e-10) throw std::invalid_argument("propagate_trajectory: state not normalized");
    if (!pure && hermiticity_error(state0) > 1e-10)
        throw std::invalid_argument("propagate_trajectory: density matrix not Hermitian");
    for (const auto& t : s.terms)
        if (t.coeff.size() < s.steps || t.pattern.size() != dim)
            throw std::invalid_argument("propagate_trajectory: noise term shorter than schedule");
    if (record.empty())
        for (std::size_t i = 0; i <= s.steps; ++i) record.push_back(i);
    for (std::size_t i = 0; i < record.size(); ++i)
        if (record[i] > s.steps || (i && record[i] < record[i - 1]))
            throw std::invalid_argument("propagate_trajectory: record steps must be sorted and <= steps");
    return record;
}

template <class Emit>
void dispatch(const PiecewiseHamiltonianSchedule& s, const cmat& state0, const std::vector<std::size_t>& record,
              double* norm_drift, Emit&& emit) {
    switch (s.base.dim()) {
        case 2: return propagate_impl<2>(s, state0, record, norm_drift, emit);
        case 4: return propagate_impl<4>(s, state0, record, norm_drift, emit);
        default: return propagate_impl<Eigen::Dynamic>(s, state0, record, norm_drift, emit);
    }
}

}  // namespace detail

// Populations at the requested step indices (0 = initial state). state0 is a column
// (pure state) or a density matrix.
inline Eigen::MatrixXd propagate_trajectory(const PiecewiseHamiltonianSchedule& s, const cmat& state0,
                                            std::vector<std::size_t> record = {}, double* norm_drift = nullptr) {
    record = detail::check_inputs(s, state0, std::move(record));
    const Eigen::Index dim = s.base.dim();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(record.size()), dim);
    detail::dispatch(s, state0, record, norm_drift, [&](Eigen::Index r, const auto& psi, const auto& rho, bool pure) {
        for (Eigen::Index d = 0; d < dim; ++d) out(r, d) = pure ? std::norm(psi(d)) : rho(d, d).real();
    });
    return out;
}

// <O> at the requested step indices
inline std::vector<cplx> propagate_expectation(const PiecewiseHamiltonianSchedule& s, const cmat& state0,
                                               const cmat& observable, std::vector<std::size_t> record = {}) {
    record = detail::check_inputs(s, state0, std::move(record));
    if (observable.rows() != s.base.dim() || observable.cols() != s.base.dim())
        throw std::invalid_argument("propagate_expectation: observable dimension mismatch");
    std::vector<cplx> out(record.size());
    detail::dispatch(s, state0, record, nullptr, [&](Eigen::Index r, const auto& psi, const auto& rho, bool pure) {
        out[static_cast<std::size_t>(r)] = pure ? cplx((psi.adjoint() * observable * psi)(0))
                                                : cplx((observable * rho).trace());
    });
    return out;
}

// ----- ensembles -----

struct EnsembleOptions {
    NoiseMapping mapping{NoiseMapping::paired};
    Sampling sampling{Sampling::step_average};
    unsigned threads{1};
    std::string audit_path;  // if set, dump (trajectory, stream, seed, psi_j...) rows
};

struct EnsembleResult {
    std::vector<double> t;
    Eigen::MatrixXd mean;    // rows = grid points, cols = levels
    Eigen::MatrixXd stderr_; // standard error of the mean
    std::size_t M{0};
    std::uint64_t master_seed{0};
};

inline std::uint64_t trajectory_seed(std::uint64_t master_seed, std::size_t index) {
    return rng::derive(master_seed, index);
}

// grid points as step indices on the dt lattice starting at 0
inline std::vector<std::size_t> grid_steps(const std::vector<double>& t_grid, double dt) {
    std::vector<std::size_t> k(t_grid.size());
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        const double x = t_grid[i] / dt;
        const double r = std::round(x);
        if (r < 0 || std::abs(x - r) > 1e-6) throw std::invalid_argument("t_grid point not on the dt lattice");
        k[i] = static_cast<std::size_t>(r);
        if (i && k[i] <= k[i - 1]) throw std::invalid_argument("t_grid must be increasing");
    }
    return k;
}

namespace detail {
struct Moments {
    Eigen::MatrixXd s1, s2;
    void add(const Moments& o) {
        s1 += o.s1;
        s2 += o.s2;
    }
};

// pairwise sum of parts[lo, hi)
inline Moments pairwise(std::vector<Moments>& parts, std::size_t lo, std::size_t hi) {
    if (hi - lo == 1) return parts[lo];
    const std::size_t mid = lo + (hi - lo) / 2;
    Moments a = pairwise(parts, lo, mid);
    a.add(pairwise(parts, mid, hi));
    return a;
}
}  // namespace detail

struct SampleStats {
    Eigen::MatrixXd mean, stderr_;
};

// Mean and standard error of fn(0..M-1), each a rows x cols matrix. Samples are processed
// in fixed chunks reduced by a pairwise tree; chunk sums are merged by a binary-counter
// pairwise scheme, so the result depends only on fn and M, never on the thread count.
// after_chunk(first, n) runs serially after each chunk.
template <class Fn, class After>
SampleStats ensemble_reduce(std::size_t M, unsigned threads, Eigen::Index rows, Eigen::Index cols, Fn&& fn,
                            After&& after_chunk) {
    if (M < 1) throw std::invalid_argument("ensemble_reduce: M must be >= 1");
    constexpr std::size_t chunk = 32;
    std::vector<detail::Moments> stack;
    std::vector<bool> used;
    auto push = [&](detail::Moments m) {
        std::size_t k = 0;
        while (k < stack.size() && used[k]) {
            stack[k].add(m);
            m = std::move(stack[k]);
            used[k] = false;
            ++k;
        }
        if (k == stack.size()) {
            stack.push_back(std::move(m));
            used.push_back(true);
        } else {
            stack[k] = std::move(m);
            used[k] = true;
        }
    };
    std::vector<detail::Moments> parts(chunk);
    for (std::size_t c0 = 0; c0 < M; c0 += chunk) {
        const std::size_t n = std::min(chunk, M - c0);
        parallel_for(n, threads, [&](std::size_t i) {
            Eigen::MatrixXd x = fn(c0 + i);
            if (x.rows() != rows || x.cols() != cols) throw std::logic_error("ensemble_reduce: sample shape");
            parts[i].s2 = x.cwiseProduct(x);
            parts[i].s1 = std::move(x);
        });
        after_chunk(c0, n);
        push(detail::pairwise(parts, 0, n));
    }
    detail::Moments tot;
    bool first = true;
    for (std::size_t k = 0; k < stack.size(); ++k) {
        if (!used[k]) continue;
        if (first) tot = stack[k];
        else tot.add(stack[k]);
        first = false;
    }
    SampleStats st;
    const double m = static_cast<double>(M);
    st.mean = tot.s1 / m;
    if (M > 1) {
        Eigen::MatrixXd var = (tot.s2 - tot.s1.cwiseProduct(tot.s1) / m) / (m - 1);
        st.stderr_ = (var.cwiseMax(0.0) / m).cwiseSqrt();
    } else {
        st.stderr_ = Eigen::MatrixXd::Zero(rows, cols);
    }
    return st;
}

template <class Fn>
SampleStats ensemble_reduce(std::size_t M, unsigned threads, Eigen::Index rows, Eigen::Index cols, Fn&& fn) {
    return ensemble_reduce(M, threads, rows, cols, std::forward<Fn>(fn), [](std::size_t, std::size_t) {});
}

inline EnsembleResult ensemble_average(const HamiltonianMatrix& h, const NoiseProfile& profile, std::size_t M, double dt,
                                       const std::vector<double>& t_grid, const cmat& state0, std::uint64_t master_seed,
                                       const EnsembleOptions& opt = {}) {
    if (M < 1) throw std::invalid_argument("ensemble_average: M must be >= 1");
    if (t_grid.empty()) throw std::invalid_argument("ensemble_average: empty grid");
    const auto record = grid_steps(t_grid, dt);
    const std::size_t steps = record.back();
    const Eigen::Index dim = h.dim();
    const Eigen::Index nt = static_cast<Eigen::Index>(t_grid.size());

    std::ofstream audit;
    if (!opt.audit_path.empty()) {
        audit.open(opt.audit_path);
        if (!audit) throw std::runtime_error("cannot open audit file " + opt.audit_path);
        audit << "trajectory,stream,seed";
        for (int j = 1; j <= profile.J; ++j) audit << ",psi_" << j;
        audit << '\n';
    }
    auto one = [&](std::size_t m) {
        const auto sched = make_schedule(h, profile, opt.mapping, dt, steps, trajectory_seed(master_seed, m), opt.sampling);
        return propagate_trajectory(sched, state0, record);
    };
    auto dump = [&](std::size_t c0, std::size_t n) {
        if (!audit) return;
        const int ns = stream_count(opt.mapping, dim);
        for (std::size_t i = c0; i < c0 + n; ++i)
            for (int s = 0; s < ns; ++s) {
                const auto seed = stream_seed(trajectory_seed(master_seed, i), s);
                const auto r = realize(profile, seed);
                audit << i << ',' << s << ',' << seed;
                for (double v : r.psi) audit << ',' << io::fmt17(v);
                audit << '\n';
            }
    };
    auto st = ensemble_reduce(M, opt.threads, nt, dim, one, dump);

    EnsembleResult r;
    r.t = t_grid;
    r.M = M;
    r.master_seed = master_seed;
    r.mean = std::move(st.mean);
    r.stderr_ = std::move(st.stderr_);
    return r;
}

}  // namespace eetsim
