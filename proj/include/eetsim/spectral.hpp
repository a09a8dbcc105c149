// spectral.hpp: bath spectral densities, modulation profiles and the comb integral chi(t)
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "io.hpp"
#include "units.hpp"

namespace eetsim {

// ----- spectral density variants (frequencies in rad/ms) -----

struct Debye {
    double lambda{0.0};
    double gamma{1.0};
};
struct OhmicStep { double alpha{1.0}; };
struct White { double alpha{1.0}; };
struct OneOverF { double alpha{1.0}; };
struct OneOverFSquared { double alpha{1.0}; };
struct B777 {
    double S0{0.5}, s1{0.8}, s2{0.5};
    double Omega1{1.0}, Omega2{1.0};
};
struct Tabulated {
    std::vector<double> omega;
    std::vector<double> value;
};

using SpectralDensitySpec = std::variant<Debye, OhmicStep, White, OneOverF, OneOverFSquared, B777, Tabulated>;

inline void validate(const SpectralDensitySpec& spec) {
    std::visit([](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Debye>) {
            if (!(s.lambda > 0) || !(s.gamma > 0)) throw std::invalid_argument("Debye needs lambda, gamma > 0");
        } else if constexpr (std::is_same_v<T, B777>) {
            if (!(s.Omega1 > 0) || !(s.Omega2 > 0)) throw std::invalid_argument("B777 needs Omega1, Omega2 > 0");
        } else if constexpr (std::is_same_v<T, Tabulated>) {
            if (s.omega.size() != s.value.size() || s.omega.size() < 2)
                throw std::invalid_argument("tabulated spectrum needs >= 2 (omega, J) samples");
            for (std::size_t i = 0; i < s.omega.size(); ++i) {
                if (s.omega[i] < 0 || s.value[i] < 0) throw std::invalid_argument("tabulated samples must be >= 0");
                if (i && !(s.omega[i] > s.omega[i - 1]))
                    throw std::invalid_argument("tabulated omega must be strictly increasing");
            }
        }
    }, spec);
}

// exponent p of a power-law variant, S(omega) ~ omega^p
inline std::optional<int> power_law_exponent(const SpectralDensitySpec& spec) {
    if (std::holds_alternative<OhmicStep>(spec)) return 1;
    if (std::holds_alternative<White>(spec)) return 0;
    if (std::holds_alternative<OneOverF>(spec)) return -1;
    if (std::holds_alternative<OneOverFSquared>(spec)) return -2;
    return std::nullopt;
}

inline double spectral_density(const SpectralDensitySpec& spec, double w) {
    if (!(w >= 0)) throw std::domain_error("spectral_density: omega must be >= 0");
    return std::visit([w](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Debye>) {
            return 2.0 * s.lambda * s.gamma * w / (w * w + s.gamma * s.gamma);
        } else if constexpr (std::is_same_v<T, OhmicStep>) {
            return s.alpha * w;
        } else if constexpr (std::is_same_v<T, White>) {
            return s.alpha;
        } else if constexpr (std::is_same_v<T, OneOverF> || std::is_same_v<T, OneOverFSquared>) {
            if (w == 0) throw std::domain_error("spectral_density: 1/f^p diverges at omega = 0");
            return std::is_same_v<T, OneOverF> ? s.alpha / w : s.alpha / (w * w);
        } else if constexpr (std::is_same_v<T, B777>) {
            constexpr double fact7 = 5040.0;
            auto term = [w](double si, double om) {
                return si / (fact7 * 2.0 * std::pow(om, 4)) * w * w * w * std::exp(-std::sqrt(w / om));
            };
            return s.S0 / (s.s1 + s.s2) * (term(s.s1, s.Omega1) + term(s.s2, s.Omega2));
        } else {
            const auto& x = s.omega;
            if (w < x.front() || w > x.back()) return 0.0;
            auto it = std::upper_bound(x.begin(), x.end(), w);
            if (it == x.end()) return s.value.back();
            const std::size_t k = static_cast<std::size_t>(it - x.begin());
            const double f = (w - x[k - 1]) / (x[k] - x[k - 1]);
            return (1 - f) * s.value[k - 1] + f * s.value[k];
        }
    }, spec);
}

inline Tabulated load_tabulated(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    // header optional: peek the first non-comment line
    std::string first;
    std::streampos start = f.tellg();
    while (std::getline(f, first) && (first.empty() || first[0] == '#')) start = f.tellg();
    bool has_header = !first.empty() && !(std::isdigit(static_cast<unsigned char>(first[0])) ||
                                          first[0] == '-' || first[0] == '.' || first[0] == '+');
    f.clear();
    f.seekg(start);
    auto t = io::read_table(f, has_header);
    if (t.columns.size() != 2) throw std::runtime_error("tabulated spectrum needs two columns");
    Tabulated tab{t.columns[0], t.columns[1]};
    validate(tab);
    return tab;
}

// meV -> rad/ms through wavenumbers and the EET -> NMR scaler
inline double mev_to_nmr(double mev, const UnitScaler& s = {}) {
    constexpr double cm_per_mev = 8.065544;
    return s.wavenumber_to_nmr(mev * cm_per_mev);
}

// coth(x/2) with the small-argument series 2/x + x/6
inline double coth_half(double x) {
    if (x < 1e-8) return 2.0 / x + x / 6.0;
    return 1.0 / std::tanh(0.5 * x);
}

// ----- noise profiles -----

enum class NoiseChannel { dephasing, amplitude };

struct NoiseProfile {
    double omega0{1.0};            // rad/ms
    int J{1};                      // number of comb lines, omega_j = j * omega0
    double alpha{1.0};
    std::vector<double> F;         // F(omega_j), j = 1..J
    NoiseChannel channel{NoiseChannel::dephasing};

    double omega(int j) const { return j * omega0; }  // j is 1-based
    double omega_max() const { return J * omega0; }

    void check() const {
        if (!(omega0 > 0) || J < 1 || static_cast<int>(F.size()) != J)
            throw std::invalid_argument("inconsistent NoiseProfile");
        for (double f : F)
            if (!std::isfinite(f) || f < 0) throw std::invalid_argument("NoiseProfile weights must be finite, >= 0");
    }
    // per-line amplitude of beta: alpha*F*omega (dephasing) or alpha*F (amplitude)
    double line_amplitude(int j) const {
        const double w = channel == NoiseChannel::dephasing ? omega(j) : 1.0;
        return alpha * F[j - 1] * w;
    }
};

// Weights F so that alpha^2 F^2 = (2/pi) omega0 J(w) coth(beta w/2) / w^2, which makes
// chi(t) the comb Riemann sum of Re g(t). Power-law variants use the fixed exponents
// F = w^(p/2 - 1) (dephasing) or w^(p/2) (amplitude) and ignore temperature.
inline NoiseProfile modulation_profile(const SpectralDensitySpec& spec, double temperature_K, double omega0,
                                       int J, double alpha, NoiseChannel channel = NoiseChannel::dephasing) {
    if (!(temperature_K > 0)) throw std::invalid_argument("modulation_profile: temperature must be > 0");
    if (!(omega0 > 0) || J < 1) throw std::invalid_argument("modulation_profile: need omega0 > 0, J >= 1");
    if (!(alpha >= 0)) throw std::invalid_argument("modulation_profile: alpha must be >= 0");
    validate(spec);
    NoiseProfile p{omega0, J, alpha, std::vector<double>(J), channel};
    const double Tp = thermal_frequency(temperature_K);
    if (auto pw = power_law_exponent(spec)) {
        const double e = channel == NoiseChannel::dephasing ? *pw / 2.0 - 1.0 : *pw / 2.0;
        for (int j = 1; j <= J; ++j) p.F[j - 1] = std::pow(p.omega(j), e);
        return p;
    }
    if (!(alpha > 0)) throw std::invalid_argument("modulation_profile: alpha must be > 0 for thermal spectra");
    const double k = std::sqrt(2.0 / constants::pi) / alpha;
    for (int j = 1; j <= J; ++j) {
        const double w = p.omega(j);
        const double ct = coth_half(w / Tp);
        double f;
        if (const auto* d = std::get_if<Debye>(&spec)) {
            f = k * std::sqrt(2.0 * d->lambda * d->gamma * omega0 * ct / (w * (w * w + d->gamma * d->gamma)));
        } else {
            f = k * std::sqrt(spectral_density(spec, w) * omega0 * ct / (w * w));
        }
        p.F[j - 1] = channel == NoiseChannel::dephasing ? f : f * w;
    }
    return p;
}

// arbitrary-spectrum route for any J(w), independent of the dedicated Debye branch
inline NoiseProfile modulation_profile_general(const SpectralDensitySpec& spec, double temperature_K,
                                               double omega0, int J, double alpha) {
    if (!(temperature_K > 0) || !(alpha > 0)) throw std::invalid_argument("need temperature, alpha > 0");
    NoiseProfile p{omega0, J, alpha, std::vector<double>(J), NoiseChannel::dephasing};
    const double Tp = thermal_frequency(temperature_K);
    for (int j = 1; j <= J; ++j) {
        const double w = p.omega(j);
        p.F[j - 1] = std::sqrt((2.0 / constants::pi) * spectral_density(spec, w) * omega0 *
                               coth_half(w / Tp) / (w * w)) / alpha;
    }
    return p;
}

// chi(t) = alpha^2 sum_j F_j^2 sin^2(omega_j t / 2)
inline double chi(const NoiseProfile& p, double t) {
    if (t < 0) throw std::domain_error("chi: t must be >= 0");
    double s = 0.0;
    for (int j = 1; j <= p.J; ++j) {
        const double sn = std::sin(0.5 * p.omega(j) * t);
        s += p.F[j - 1] * p.F[j - 1] * sn * sn;
    }
    return p.alpha * p.alpha * s;
}

inline std::vector<double> chi(const NoiseProfile& p, const std::vector<double>& t) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = chi(p, t[i]);
    return out;
}

inline double chi_bound(const NoiseProfile& p) {
    double s = 0.0;
    for (double f : p.F) s += f * f;
    return p.alpha * p.alpha * s;
}

// one-sided comb line heights (alpha/2)^2 [omega_j F_j]^2
inline std::vector<double> psd_comb_heights(const NoiseProfile& p) {
    std::vector<double> h(p.J);
    for (int j = 1; j <= p.J; ++j) {
        const double a = p.line_amplitude(j);
        h[j - 1] = 0.25 * a * a;
    }
    return h;
}

// <beta(t + tau) beta(t)> = (alpha/2)^2 sum_j [omega_j F_j]^2 2 cos(omega_j tau)
inline double autocorrelation(const NoiseProfile& p, double tau) {
    double s = 0.0;
    const auto h = psd_comb_heights(p);
    for (int j = 1; j <= p.J; ++j) s += h[j - 1] * 2.0 * std::cos(p.omega(j) * tau);
    return s;
}

// smallest t with 2 chi(t) = 1; nullopt if chi never reaches 1/2 within one comb period
inline std::optional<double> fit_t2(const NoiseProfile& p) {
    const double S = chi_bound(p);
    if (!(2.0 * S > 1.0)) return std::nullopt;
    double lip = 0.0;  // bound on |chi'|
    for (int j = 1; j <= p.J; ++j) lip += p.F[j - 1] * p.F[j - 1] * p.omega(j);
    lip *= 0.5 * p.alpha * p.alpha;
    const double period = 2.0 * constants::pi / p.omega0;
    const double hmin = constants::pi / p.omega_max() / 64.0;
    auto f = [&](double t) { return 2.0 * chi(p, t) - 1.0; };
    double t0 = 0.0, f0 = -1.0;
    while (t0 < period) {
        const double t1 = t0 + std::max(-f0 / (2.0 * lip), hmin);
        const double f1 = f(t1);
        if (f1 >= 0) {
            if (f1 == 0) return t1;
            std::uintmax_t iters = 200;
            auto r = boost::math::tools::toms748_solve(
                f, t0, t1, f0, f1, [](double a, double b) { return std::abs(b - a) < 1e-10; }, iters);
            return 0.5 * (r.first + r.second);
        }
        t0 = t1;
        f0 = f1;
    }
    return std::nullopt;
}

// ----- audit CSV -----

inline io::Table profile_table(const NoiseProfile& p) {
    io::Table t;
    std::vector<double> j(p.J), w(p.J);
    for (int k = 1; k <= p.J; ++k) {
        j[k - 1] = k;
        w[k - 1] = p.omega(k);
    }
    t.comments.push_back(" alpha=" + io::fmt17(p.alpha) + " omega0=" + io::fmt17(p.omega0) + " channel=" +
                         (p.channel == NoiseChannel::dephasing ? "dephasing" : "amplitude"));
    t.add_column("j", j);
    t.add_column("omega_j", w);
    t.add_column("F_j", p.F);
    return t;
}

inline void save_profile(const std::string& path, const NoiseProfile& p) { io::write_csv(path, profile_table(p)); }

inline NoiseProfile load_profile(const std::string& path) {
    auto t = io::read_csv(path);
    NoiseProfile p;
    p.F = t.column("F_j");
    p.J = static_cast<int>(p.F.size());
    const auto& w = t.column("omega_j");
    if (w.empty()) throw std::runtime_error("empty profile " + path);
    p.omega0 = w.front();
    for (const auto& c : t.comments) {
        auto pos = c.find("alpha=");
        if (pos != std::string::npos) p.alpha = std::stod(c.substr(pos + 6));
        if (c.find("channel=amplitude") != std::string::npos) p.channel = NoiseChannel::amplitude;
    }
    p.check();
    return p;
}

}  // namespace eetsim
