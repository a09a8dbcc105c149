// lineshape.hpp: Drude-Lorentz lineshape function g(t) by Matsubara expansion
#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/polygamma.hpp>

#include "units.hpp"

namespace eetsim {

struct LineshapeParams {
    double lambda{0.0};      // rad/ms
    double Lambda{1.0};      // cutoff, rad/ms
    double temperature{1.0}; // K
    int n_matsubara{0};
    bool tail_remainder{true};  // add the asymptotic sum of the terms n > n_matsubara
};

namespace detail {
// e^{-x} + x - 1 without cancellation at small x
inline double exm1_plus(double x) {
    if (std::abs(x) < 1e-3) return x * x * (0.5 - x * (1.0 / 6 - x * (1.0 / 24 - x / 120)));
    return std::expm1(-x) + x;
}

inline void check_pole(double beta, double Lambda) {
    const double h = 0.5 * beta * Lambda;
    if (std::abs(std::sin(h)) < 1e-10 * std::max(1.0, h))
        throw std::domain_error("lineshape: beta*Lambda = 2*pi*k hits a pole of cot(beta*Lambda/2) "
                                "and the k-th Matsubara term; shift the temperature slightly");
}

inline double matsubara_term(double lambda, double Lambda, double beta, int n, double t) {
    const double nu = 2.0 * constants::pi * n / beta;
    return 4.0 * lambda * Lambda / beta * exm1_plus(nu * t) / (nu * (nu * nu - Lambda * Lambda));
}
// sum_{n>N} of the Matsubara terms once nu_{N+1} t >> 1 and nu_{N+1} >> Lambda, where each
// term is (4 lambda Lambda / beta)(t / nu^2 - 1/nu^3 + Lambda^2 t / nu^4); zero otherwise
inline double matsubara_remainder(double lambda, double Lambda, double beta, int N, double t) {
    const double c = 2.0 * constants::pi / beta;
    const double nu = c * (N + 1);
    if (N < 1 || nu * t < 40.0 || nu < 10.0 * Lambda) return 0.0;
    const double x = N + 1.0;
    const double s2 = boost::math::trigamma(x);
    const double s3 = -0.5 * boost::math::polygamma(2, x);
    const double s4 = boost::math::polygamma(3, x) / 6.0;
    return 4.0 * lambda * Lambda / beta *
           (t * s2 / (c * c) - s3 / (c * c * c) + Lambda * Lambda * t * s4 / (c * c * c * c));
}
}  // namespace detail

inline std::complex<double> lineshape_g(const LineshapeParams& p, double t) {
    if (t < 0) throw std::domain_error("lineshape_g: t must be >= 0");
    if (!(p.Lambda > 0) || !(p.lambda >= 0)) throw std::invalid_argument("lineshape_g: need Lambda > 0, lambda >= 0");
    const double beta = 1.0 / thermal_frequency(p.temperature);
    detail::check_pole(beta, p.Lambda);
    const double e = detail::exm1_plus(p.Lambda * t);
    const double a = p.lambda / p.Lambda;
    double re = a / std::tan(0.5 * beta * p.Lambda) * e;
    for (int n = 1; n <= p.n_matsubara; ++n) re += detail::matsubara_term(p.lambda, p.Lambda, beta, n, t);
    if (p.tail_remainder) re += detail::matsubara_remainder(p.lambda, p.Lambda, beta, p.n_matsubara, t);
    return {re, -a * e};
}

inline std::vector<std::complex<double>> lineshape_g(const LineshapeParams& p, const std::vector<double>& t) {
    std::vector<std::complex<double>> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = lineshape_g(p, t[i]);
    return out;
}

// Smallest n whose last term contributes < rel_tol of Re g at t_max and whose dropped
// tail, estimated as n times the last term (terms fall off as 1/n^2), is below 10 rel_tol.
// At low temperature the cap is reached; lineshape_g then relies on the remainder.
inline int choose_matsubara(const LineshapeParams& p, double t_max, double rel_tol = 1e-8, int cap = 10000) {
    if (!(t_max > 0)) return 0;
    const double beta = 1.0 / thermal_frequency(p.temperature);
    detail::check_pole(beta, p.Lambda);
    double re = p.lambda / p.Lambda / std::tan(0.5 * beta * p.Lambda) * detail::exm1_plus(p.Lambda * t_max);
    for (int n = 1; n <= cap; ++n) {
        const double term = detail::matsubara_term(p.lambda, p.Lambda, beta, n, t_max);
        re += term;
        if (std::abs(term) < rel_tol * std::abs(re) && n * std::abs(term) < 10.0 * rel_tol * std::abs(re)) return n;
    }
    return cap;
}

inline LineshapeParams make_lineshape(double lambda, double Lambda, double temperature_K, double t_max) {
    LineshapeParams p{lambda, Lambda, temperature_K, 0};
    p.n_matsubara = choose_matsubara(p, t_max);
    return p;
}

}  // namespace eetsim
