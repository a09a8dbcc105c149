// heom.hpp: high-temperature hierarchical equations of motion, one Debye bath per site
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"

namespace eetsim::heom {

// ----- hierarchy -----

struct HierarchyBudgetError : std::runtime_error {
    std::uint64_t count;
    HierarchyBudgetError(std::uint64_t c, std::uint64_t budget)
        : std::runtime_error("hierarchy needs " + std::to_string(c) + " ADOs, budget is " + std::to_string(budget)),
          count(c) {}
};

struct SolverError : std::runtime_error {
    double t_reached;
    SolverError(const std::string& what, double t) : std::runtime_error(what), t_reached(t) {}
};

// binomial(n, k) exactly, or nullopt on 64-bit overflow
inline std::optional<std::uint64_t> binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;  // exact: r * (n-k+i) is divisible by i at every step
        if (r > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
    }
    return static_cast<std::uint64_t>(r);
}

struct HierarchyIndexSet {
    int n_modes{1};
    int depth{0};
    std::vector<std::vector<int>> indices;  // ordered by level, then lexicographic (descending)
    std::vector<int> plus;                  // [a * n_modes + j] -> index of n + e_j, or -1
    std::vector<int> minus;                 // [a * n_modes + j] -> index of n - e_j, or -1

    std::size_t size() const { return indices.size(); }
    int level(std::size_t a) const { return std::accumulate(indices[a].begin(), indices[a].end(), 0); }
};

inline constexpr std::uint64_t default_ado_budget = 2'000'000;

inline HierarchyIndexSet build_hierarchy(int n_modes, int depth, std::uint64_t budget = default_ado_budget) {
    if (n_modes < 1 || depth < 0) throw std::invalid_argument("build_hierarchy: need n_modes >= 1, depth >= 0");
    auto c = binomial(static_cast<std::uint64_t>(n_modes) + depth, static_cast<std::uint64_t>(depth));
    if (!c || *c > budget) throw HierarchyBudgetError(c.value_or(std::numeric_limits<std::uint64_t>::max()), budget);
    HierarchyIndexSet hs{n_modes, depth, {}, {}, {}};
    hs.indices.reserve(*c);
    std::vector<int> cur(n_modes, 0);
    // all compositions with total exactly `lvl`, lexicographically descending
    auto rec = [&](auto&& self, int pos, int left) -> void {
        if (pos == n_modes - 1) {
            cur[pos] = left;
            hs.indices.push_back(cur);
            return;
        }
        for (int v = left; v >= 0; --v) {
            cur[pos] = v;
            self(self, pos + 1, left - v);
        }
    };
    for (int lvl = 0; lvl <= depth; ++lvl) rec(rec, 0, lvl);
    std::map<std::vector<int>, int> pos;
    for (std::size_t a = 0; a < hs.indices.size(); ++a) pos.emplace(hs.indices[a], static_cast<int>(a));
    hs.plus.assign(hs.size() * n_modes, -1);
    hs.minus.assign(hs.size() * n_modes, -1);
    for (std::size_t a = 0; a < hs.size(); ++a) {
        auto n = hs.indices[a];
        for (int j = 0; j < n_modes; ++j) {
            ++n[j];
            if (auto it = pos.find(n); it != pos.end()) hs.plus[a * n_modes + j] = it->second;
            n[j] -= 2;
            if (n[j] >= 0) hs.minus[a * n_modes + j] = pos.at(n);
            ++n[j];
        }
    }
    return hs;
}

// ----- bath and propagation -----

struct BathParams {
    std::vector<double> lambda;  // rad/ms, per site
    std::vector<double> gamma;   // rad/ms, per site
    double temperature{1.0};     // K

    static BathParams uniform(int n_sites, double lambda, double gamma, double temperature) {
        return {std::vector<double>(n_sites, lambda), std::vector<double>(n_sites, gamma), temperature};
    }
    double thermal() const { return thermal_frequency(temperature); }
    // beta' gamma_j < 1 for every site
    bool high_temperature_ok() const {
        const double Tp = thermal();
        return std::all_of(gamma.begin(), gamma.end(), [Tp](double g) { return g / Tp < 1.0; });
    }
};

struct PropagateOptions {
    double step_scale{0.5};         // fraction of the step bound actually used
    bool keep_density{false};       // store sigma(0) on the grid
    std::uint64_t budget{default_ado_budget};
};

struct HeomResult {
    std::vector<double> t;
    Eigen::MatrixXd populations;    // rows = grid points, cols = levels
    std::vector<cmat> density;      // sigma(0, t) if requested
    double max_trace_error{0.0};
    double max_hermiticity_error{0.0};
    double step{0.0};
    std::size_t n_ados{0};
    std::vector<std::string> warnings;
};

// step bound min(0.02 / max|eig(H)|, 0.1 / gamma_max, 0.1 / (depth gamma_max)) for the centered H
inline double step_bound(const cmat& h_centered, const BathParams& bath, int depth) {
    Eigen::SelfAdjointEigenSolver<cmat> es(h_centered, Eigen::EigenvaluesOnly);
    const double wmax = es.eigenvalues().cwiseAbs().maxCoeff();
    const double gmax = bath.gamma.empty() ? 0.0 : *std::max_element(bath.gamma.begin(), bath.gamma.end());
    double h = std::numeric_limits<double>::infinity();
    if (wmax > 0) h = std::min(h, 0.02 / wmax);
    if (gmax > 0) {
        h = std::min(h, 0.1 / gmax);
        if (depth > 0) h = std::min(h, 0.1 / (depth * gmax));
    }
    return h;
}

namespace detail {

template <int D>
struct Kernel {
    using Mat = Eigen::Matrix<cplx, D, D>;
    const HierarchyIndexSet& hs;
    Mat H;
    std::vector<double> damp;               // sum_j n_j gamma_j per ADO
    std::vector<cplx> th_row, th_col;       // Theta_j row / column factors
    std::vector<int> nj;                    // n_j per (ADO, site)
    int dim;

    Kernel(const HierarchyIndexSet& h, const cmat& Hc, const BathParams& bath) : hs(h), H(Hc), dim(int(Hc.rows())) {
        const int m = hs.n_modes;
        const double Tp = bath.thermal();
        damp.assign(hs.size(), 0.0);
        nj.assign(hs.size() * m, 0);
        for (std::size_t a = 0; a < hs.size(); ++a)
            for (int j = 0; j < m; ++j) {
                nj[a * m + j] = hs.indices[a][j];
                damp[a] += hs.indices[a][j] * bath.gamma[j];
            }
        for (int j = 0; j < m; ++j) {
            const double l = bath.lambda[j], g = bath.gamma[j];
            th_row.push_back(cplx(l * g, 2.0 * l * Tp));   // 2i lambda T' + lambda gamma
            th_col.push_back(cplx(l * g, -2.0 * l * Tp));  // -2i lambda T' + lambda gamma
        }
    }

    void rhs(const std::vector<Mat>& in, std::vector<Mat>& out) const {
        const int m = hs.n_modes;
        for (std::size_t a = 0; a < hs.size(); ++a) {
            Mat& o = out[a];
            o.noalias() = H * in[a];
            o.noalias() -= in[a] * H;
            o *= cplx(0, -1);
            o -= damp[a] * in[a];
            for (int j = 0; j < m; ++j) {
                if (int p = hs.plus[a * m + j]; p >= 0) {
                    // i [V_j, sigma]
                    o.row(j) += I1 * in[p].row(j);
                    o.col(j) -= I1 * in[p].col(j);
                }
                if (int q = hs.minus[a * m + j]; q >= 0) {
                    const double n = nj[a * m + j];
                    o.row(j) += (n * th_row[j]) * in[q].row(j);
                    o.col(j) += (n * th_col[j]) * in[q].col(j);
                }
            }
        }
    }
};

template <int D>
HeomResult propagate_impl(const cmat& Hc, const BathParams& bath, const cmat& rho0, const std::vector<double>& t_grid,
                          const HierarchyIndexSet& hs, double hstep, const PropagateOptions& opt) {
    using Mat = typename Kernel<D>::Mat;
    const Eigen::Index dim = Hc.rows();
    Kernel<D> ker(hs, Hc, bath);
    const std::size_t na = hs.size();
    auto zero = [&] { return std::vector<Mat>(na, Mat::Zero(dim, dim)); };
    std::vector<Mat> y = zero(), k = zero(), acc = zero(), tmp = zero();
    y[0] = rho0;

    HeomResult res;
    res.t = t_grid;
    res.populations.resize(static_cast<Eigen::Index>(t_grid.size()), dim);
    res.step = hstep;
    res.n_ados = na;
    auto record = [&](std::size_t i, double t) {
        const cmat s0 = y[0];
        for (Eigen::Index d = 0; d < dim; ++d) res.populations(static_cast<Eigen::Index>(i), d) = s0(d, d).real();
        if (!s0.allFinite()) throw SolverError("non-finite density matrix", t);
        res.max_trace_error = std::max(res.max_trace_error, std::abs(s0.trace() - 1.0));
        res.max_hermiticity_error = std::max(res.max_hermiticity_error, hermiticity_error(s0));
        if (opt.keep_density) res.density.push_back(s0);
    };

    auto axpy = [na](std::vector<Mat>& dst, const std::vector<Mat>& a, double c, const std::vector<Mat>& b) {
        for (std::size_t i = 0; i < na; ++i) dst[i] = a[i] + c * b[i];
    };
    auto add = [na](std::vector<Mat>& dst, double c, const std::vector<Mat>& b) {
        for (std::size_t i = 0; i < na; ++i) dst[i] += c * b[i];
    };

    double t = t_grid.empty() ? 0.0 : t_grid.front();
    if (!t_grid.empty() && t_grid.front() != 0.0) throw std::invalid_argument("heom: t_grid must start at 0");
    if (!t_grid.empty()) record(0, t);
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
        const double span = t_grid[i] - t_grid[i - 1];
        if (!(span > 0)) throw std::invalid_argument("heom: t_grid must be increasing");
        const long n = std::max(1L, static_cast<long>(std::ceil(span / hstep - 1e-9)));
        const double h = span / n;
        for (long s = 0; s < n; ++s) {
            acc = y;
            ker.rhs(y, k);
            add(acc, h / 6, k);
            axpy(tmp, y, h / 2, k);
            ker.rhs(tmp, k);
            add(acc, h / 3, k);
            axpy(tmp, y, h / 2, k);
            ker.rhs(tmp, k);
            add(acc, h / 3, k);
            axpy(tmp, y, h, k);
            ker.rhs(tmp, k);
            add(acc, h / 6, k);
            std::swap(y, acc);
        }
        t = t_grid[i];
        record(i, t);
    }
    return res;
}

}  // namespace detail

inline HeomResult heom_propagate(const HamiltonianMatrix& h, const BathParams& bath, const cmat& rho0,
                                 const std::vector<double>& t_grid, int depth, const PropagateOptions& opt = {}) {
    if (h.unit != UnitTag::NMR_angular) throw std::invalid_argument("heom_propagate expects an NMR_angular Hamiltonian");
    const Eigen::Index dim = h.dim();
    if (static_cast<Eigen::Index>(bath.lambda.size()) != dim || static_cast<Eigen::Index>(bath.gamma.size()) != dim)
        throw std::invalid_argument("heom_propagate: need one bath per site");
    if (rho0.rows() != dim || rho0.cols() != dim) throw std::invalid_argument("heom_propagate: rho0 dimension");
    if (hermiticity_error(rho0) > 1e-12 || std::abs(rho0.trace() - 1.0) > 1e-12)
        throw std::invalid_argument("heom_propagate: rho0 must be Hermitian with unit trace");
    Eigen::SelfAdjointEigenSolver<cmat> es(rho0, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12) throw std::invalid_argument("heom_propagate: rho0 not positive");

    // the identity offset only adds a global phase
    const cmat Hc = h.elements - (h.elements.trace() / double(dim)) * cmat::Identity(dim, dim);
    const auto hs = build_hierarchy(static_cast<int>(dim), depth, opt.budget);
    const double hstep = opt.step_scale * step_bound(Hc, bath, depth);

    HeomResult r;
    switch (dim) {
        case 2: r = detail::propagate_impl<2>(Hc, bath, rho0, t_grid, hs, hstep, opt); break;
        case 4: r = detail::propagate_impl<4>(Hc, bath, rho0, t_grid, hs, hstep, opt); break;
        default: r = detail::propagate_impl<Eigen::Dynamic>(Hc, bath, rho0, t_grid, hs, hstep, opt);
    }
    if (!bath.high_temperature_ok())
        r.warnings.push_back("high-temperature condition gamma/T' < 1 violated; truncated hierarchy may be inaccurate");
    return r;
}

inline double max_population_difference(const HeomResult& a, const HeomResult& b) {
    return (a.populations - b.populations).cwiseAbs().maxCoeff();
}

struct DepthSearch {
    int depth{0};
    double residual{0.0};          // max difference between depth and depth + 1
    bool converged{false};
    std::vector<double> differences;  // differences[d] = |P_d - P_{d+1}|_max
};

inline DepthSearch converged_depth(const HamiltonianMatrix& h, const BathParams& bath, const cmat& rho0,
                                   const std::vector<double>& t_grid, double tol, int min_depth = 0,
                                   int max_depth = 8, const PropagateOptions& opt = {}) {
    if (!(tol > 0)) throw std::invalid_argument("converged_depth: tol must be > 0");
    DepthSearch out;
    HeomResult prev = heom_propagate(h, bath, rho0, t_grid, min_depth, opt);
    for (int d = min_depth; d < max_depth; ++d) {
        HeomResult next;
        try {
            next = heom_propagate(h, bath, rho0, t_grid, d + 1, opt);
        } catch (const HierarchyBudgetError&) {
            break;
        }
        const double diff = max_population_difference(prev, next);
        out.differences.push_back(diff);
        out.depth = d;
        out.residual = diff;
        if (diff < tol) {
            out.converged = true;
            return out;
        }
        prev = std::move(next);
    }
    if (!out.differences.empty()) {
        auto it = std::min_element(out.differences.begin(), out.differences.end());
        out.depth = min_depth + static_cast<int>(it - out.differences.begin());
        out.residual = *it;
    }
    return out;
}

// ----- cost -----

struct CostEstimate {
    double count{1.0};
    std::optional<std::uint64_t> exact;  // empty on 64-bit overflow
    bool overflow{false};
    double stirling_bound{1.0};
};

// ADO count (depth + KN)! / (depth! (KN)!) and a Stirling-type upper bound built from
// sqrt(2 pi) n^{n+1/2} e^{-n} <= n! <= e n^{n+1/2} e^{-n}:
//   count <= (e / 2 pi) sqrt(n / (a b)) (1 + b/a)^a (1 + a/b)^b,  a = depth, b = KN, n = a + b.
inline CostEstimate cost_estimate(int n_levels, int k_exponentials, int depth) {
    if (n_levels < 0 || k_exponentials < 0 || depth < 0) throw std::invalid_argument("cost_estimate: negative input");
    const double a = depth, b = double(n_levels) * k_exponentials, n = a + b;
    CostEstimate c;
    c.exact = binomial(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(a));
    c.overflow = !c.exact.has_value();
    c.count = c.exact ? double(*c.exact) : std::exp(std::lgamma(n + 1) - std::lgamma(a + 1) - std::lgamma(b + 1));
    if (a == 0 || b == 0) {
        c.stirling_bound = 1.0;
    } else {
        const double lg = std::log(std::exp(1.0) / (2.0 * constants::pi)) + 0.5 * std::log(n / (a * b)) +
                          a * std::log1p(b / a) + b * std::log1p(a / b);
        c.stirling_bound = std::exp(lg);
    }
    return c;
}

}  // namespace eetsim::heom
