// pauli.hpp: decomposition of 2^n-level Hamiltonians onto Pauli strings
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"

namespace eetsim {

struct PauliTerm {
    double coefficient{0.0};  // rad/ms
    std::string label;        // one of I/X/Y/Z per qubit, qubit 1 first
};

struct PauliTermSum {
    int n_qubits{1};
    std::vector<PauliTerm> terms;

    // coefficient of a given string, 0 if absent
    double coefficient(const std::string& label) const {
        for (const auto& t : terms)
            if (t.label == label) return t.coefficient;
        return 0.0;
    }
};

namespace detail {
inline int pauli_index(char c) {
    switch (c) {
        case 'I': return 0;
        case 'X': return 1;
        case 'Y': return 2;
        case 'Z': return 3;
    }
    throw std::invalid_argument(std::string("bad Pauli label ") + c);
}
}  // namespace detail

inline cmat pauli_string_matrix(const std::string& label) {
    cmat out = cmat::Identity(1, 1);
    for (char c : label) out = kron(out, pauli::by_index(detail::pauli_index(c)));
    return out;
}

// Coefficients c_s = Tr(P_s H) / 2^n. Terms below drop_tol * ||H||_max are
// dropped, except the identity offset which is always reported.
inline PauliTermSum pauli_decompose(const HamiltonianMatrix& h, int n_qubits, double drop_tol = 1e-14) {
    if (n_qubits < 1 || n_qubits > 10) throw std::invalid_argument("n_qubits out of range");
    const Eigen::Index dim = Eigen::Index{1} << n_qubits;
    if (h.dim() != dim)
        throw std::invalid_argument("dimension " + std::to_string(h.dim()) + " is not 2^" +
                                    std::to_string(n_qubits));
    const double scale = std::max(1.0, h.elements.cwiseAbs().maxCoeff());
    static const char labels[4] = {'I', 'X', 'Y', 'Z'};
    PauliTermSum out{n_qubits, {}};
    const long n_strings = 1L << (2 * n_qubits);
    for (long s = 0; s < n_strings; ++s) {
        std::string label(n_qubits, 'I');
        long r = s;
        for (int q = n_qubits - 1; q >= 0; --q) {
            label[q] = labels[r & 3];
            r >>= 2;
        }
        const cplx c = (pauli_string_matrix(label) * h.elements).trace() / double(dim);
        if (s == 0 || std::abs(c.real()) > drop_tol * scale) out.terms.push_back({c.real(), label});
    }
    return out;
}

inline HamiltonianMatrix reconstruct(const PauliTermSum& p, UnitTag unit = UnitTag::NMR_angular) {
    const Eigen::Index dim = Eigen::Index{1} << p.n_qubits;
    cmat h = cmat::Zero(dim, dim);
    for (const auto& t : p.terms) {
        if (static_cast<int>(t.label.size()) != p.n_qubits)
            throw std::invalid_argument("Pauli label length mismatch");
        h += t.coefficient * pauli_string_matrix(t.label);
    }
    return HamiltonianMatrix(h, unit);
}

}  // namespace eetsim
