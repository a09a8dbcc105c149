// model.hpp: exciton Hamiltonians, EET -> NMR scaling, site encoding, population readout
#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "linalg.hpp"
#include "units.hpp"

namespace eetsim {

// Dense Hermitian operator on the single-excitation space. Entries are cm^-1
// for EET_wavenumber and rad/ms for NMR_angular.
struct HamiltonianMatrix {
    cmat elements;
    UnitTag unit{UnitTag::NMR_angular};

    HamiltonianMatrix() = default;
    HamiltonianMatrix(cmat m, UnitTag u) : elements(std::move(m)), unit(u) {
        if (elements.rows() < 1 || elements.rows() != elements.cols())
            throw std::invalid_argument("Hamiltonian must be square with dim >= 1");
        if (!is_hermitian(elements))
            throw std::invalid_argument("Hamiltonian is not Hermitian");
    }
    Eigen::Index dim() const { return elements.rows(); }
};

// 1-based site pair -> coupling value
using CouplingMap = std::map<std::pair<int, int>, double>;

inline HamiltonianMatrix build_exciton_hamiltonian(const std::vector<double>& site_energies,
                                                   const CouplingMap& couplings,
                                                   UnitTag unit = UnitTag::EET_wavenumber) {
    const int n = static_cast<int>(site_energies.size());
    if (n < 1) throw std::invalid_argument("need at least one site");
    cmat h = cmat::Zero(n, n);
    for (int i = 0; i < n; ++i) h(i, i) = site_energies[i];
    for (const auto& [ij, v] : couplings) {
        auto [i, j] = ij;
        if (i < 1 || j < 1 || i > n || j > n)
            throw std::invalid_argument("coupling index outside 1.." + std::to_string(n));
        if (i == j) throw std::invalid_argument("coupling on the diagonal");
        auto rev = couplings.find({j, i});
        if (rev != couplings.end() && rev->second != v)
            throw std::invalid_argument("coupling map not symmetric");
        h(i - 1, j - 1) = v;
        h(j - 1, i - 1) = v;
    }
    return HamiltonianMatrix(h, unit);
}

inline HamiltonianMatrix scale_to_nmr(const HamiltonianMatrix& h, const UnitScaler& s = {}) {
    if (h.unit != UnitTag::EET_wavenumber)
        throw std::invalid_argument("scale_to_nmr expects an EET_wavenumber Hamiltonian");
    return HamiltonianMatrix(h.elements * s.wavenumber_to_nmr(1.0), UnitTag::NMR_angular);
}

inline HamiltonianMatrix scale_to_eet(const HamiltonianMatrix& h, const UnitScaler& s = {}) {
    if (h.unit != UnitTag::NMR_angular)
        throw std::invalid_argument("scale_to_eet expects an NMR_angular Hamiltonian");
    return HamiltonianMatrix(h.elements * s.nmr_to_wavenumber(1.0), UnitTag::EET_wavenumber);
}

// site i (1-based) -> computational basis vector, |1> = |00>, |2> = |01>, ...
inline cvec encode_site(int i, int n_sites = 4) {
    if (i < 1 || i > n_sites) throw std::out_of_range("site index out of range");
    cvec v = cvec::Zero(n_sites);
    v(i - 1) = 1.0;
    return v;
}

inline cmat site_projector(int i, int n_sites = 4) {
    cvec v = encode_site(i, n_sites);
    return v * v.adjoint();
}

// two-qubit populations from <Z (x) I>, <I (x) Z>, <Z (x) Z>
inline std::array<double, 4> populations_from_expectations(double zI, double iZ, double zZ) {
    return {(1 + zI + iZ + zZ) / 4, (1 + zI - iZ - zZ) / 4,
            (1 - zI + iZ - zZ) / 4, (1 - zI - iZ + zZ) / 4};
}

}  // namespace eetsim
