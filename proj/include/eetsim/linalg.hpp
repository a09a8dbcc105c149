// linalg.hpp: dense complex matrix helpers (Pauli algebra, Hermitian exponentials)
#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>

namespace eetsim {

using cplx = std::complex<double>;
using cmat = Eigen::MatrixXcd;
using cvec = Eigen::VectorXcd;
using rvec = Eigen::VectorXd;

inline constexpr cplx I1{0.0, 1.0};

namespace pauli {
inline cmat id() { return cmat::Identity(2, 2); }
inline cmat x() { cmat m(2, 2); m << 0, 1, 1, 0; return m; }
inline cmat y() { cmat m(2, 2); m << 0, -I1, I1, 0; return m; }
inline cmat z() { cmat m(2, 2); m << 1, 0, 0, -1; return m; }
// 0 = I, 1 = X, 2 = Y, 3 = Z
inline cmat by_index(int k) {
    switch (k) {
        case 0: return id();
        case 1: return x();
        case 2: return y();
        case 3: return z();
    }
    throw std::invalid_argument("pauli index out of range");
}
}  // namespace pauli

inline cmat kron(const cmat& a, const cmat& b) {
    cmat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// single-qubit operator `op` on qubit q (0 = leftmost / most significant) of n qubits
inline cmat embed(const cmat& op, int q, int n) {
    cmat out = cmat::Identity(1, 1);
    for (int k = 0; k < n; ++k) out = kron(out, k == q ? op : pauli::id());
    return out;
}

inline double hermiticity_error(const cmat& m) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline bool is_hermitian(const cmat& m, double rel_tol = 1e-12) {
    if (m.rows() != m.cols()) return false;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return hermiticity_error(m) <= rel_tol * scale;
}

// exp(-i H t) for Hermitian H
inline cmat expm_hermitian(const cmat& h, double t) {
    Eigen::SelfAdjointEigenSolver<cmat> es(h);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    const cvec ph = (-I1 * t * es.eigenvalues().cast<cplx>()).array().exp();
    return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace eetsim
