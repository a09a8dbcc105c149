// noise.hpp: phase-randomized comb signals beta(t) synthesized from a NoiseProfile
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "rng.hpp"
#include "spectral.hpp"

namespace eetsim {

// One draw of the random phases psi_j for a profile.
struct NoiseRealization {
    const NoiseProfile* profile{nullptr};  // non-owning
    std::vector<double> psi;
    std::uint64_t seed{0};
};

inline NoiseRealization realize(const NoiseProfile& p, std::uint64_t seed) {
    p.check();
    NoiseRealization r{&p, std::vector<double>(p.J), seed};
    for (int j = 0; j < p.J; ++j) r.psi[j] = 2.0 * constants::pi * rng::to_unit(rng::at(seed, j));
    return r;
}

// point value: alpha sum F w cos(w t + psi) (dephasing) or alpha sum F sin(w t + psi) (amplitude)
inline double noise_value(const NoiseRealization& r, double t) {
    const NoiseProfile& p = *r.profile;
    const bool deph = p.channel == NoiseChannel::dephasing;
    double s = 0.0;
    for (int j = 1; j <= p.J; ++j) {
        const double ph = p.omega(j) * t + r.psi[j - 1];
        s += p.F[j - 1] * (deph ? p.omega(j) * std::cos(ph) : std::sin(ph));
    }
    return p.alpha * s;
}

// time average of beta over [t, t + dt]
inline double noise_step_average(const NoiseRealization& r, double t, double dt) {
    const NoiseProfile& p = *r.profile;
    const bool deph = p.channel == NoiseChannel::dephasing;
    double s = 0.0;
    for (int j = 1; j <= p.J; ++j) {
        const double w = p.omega(j), a = w * t + r.psi[j - 1], b = a + w * dt;
        // integral of w cos = sin difference; integral of sin = -cos difference / w
        s += p.F[j - 1] * (deph ? (std::sin(b) - std::sin(a)) : (std::cos(a) - std::cos(b)) / w);
    }
    return p.alpha * s / dt;
}

enum class Sampling { point, step_average };

inline std::vector<double> sample_noise(const NoiseProfile& p, std::uint64_t seed, const std::vector<double>& t_grid) {
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1])) throw std::invalid_argument("sample_noise: grid must be increasing");
    auto r = realize(p, seed);
    std::vector<double> out(t_grid.size());
    for (std::size_t i = 0; i < t_grid.size(); ++i) out[i] = noise_value(r, t_grid[i]);
    return out;
}

// FFT length N with omega0 * dt * N = 2 pi, or 0 if the grid is not commensurate
inline long commensurate_length(const NoiseProfile& p, double dt) {
    const double n = 2.0 * constants::pi / (p.omega0 * dt);
    const double nr = std::round(n);
    if (nr < 2 || std::abs(n - nr) > 1e-9 * n || nr <= p.J || nr > 1e8) return 0;
    return static_cast<long>(nr);
}

// Signal on the uniform grid t0 + k dt, k = 0..n-1. Point samples or step averages over
// [t_k, t_k + dt]. Uses one inverse FFT when the grid is commensurate with the comb,
// otherwise phasor recurrences (cost J per sample).
inline std::vector<double> synthesize_uniform(const NoiseRealization& r, double t0, double dt, std::size_t n,
                                              Sampling mode = Sampling::step_average) {
    const NoiseProfile& p = *r.profile;
    if (!(dt > 0)) throw std::invalid_argument("synthesize_uniform: dt must be > 0");
    std::vector<std::complex<double>> c(p.J + 1, 0.0), rot(p.J + 1, 1.0);
    for (int j = 1; j <= p.J; ++j) {
        const double w = p.omega(j), th = w * dt;
        std::complex<double> a = p.line_amplitude(j) * std::polar(1.0, w * t0 + r.psi[j - 1]);
        if (p.channel == NoiseChannel::amplitude) a *= std::complex<double>(0, -1);
        if (mode == Sampling::step_average && th != 0.0)
            a *= std::abs(th) < 1e-6 ? std::complex<double>(1.0, 0.5 * th)
                                     : (std::polar(1.0, th) - 1.0) / std::complex<double>(0.0, th);
        c[j] = a;
        rot[j] = std::polar(1.0, th);
    }
    std::vector<double> out(n);
    if (long N = commensurate_length(p, dt); N > 0) {
        std::vector<std::complex<double>> spec(N, 0.0), sig;
        for (int j = 1; j <= p.J; ++j) spec[j] = c[j];
        thread_local Eigen::FFT<double> fft;
        fft.SetFlag(Eigen::FFT<double>::Unscaled);
        fft.inv(sig, spec);
        for (std::size_t k = 0; k < n; ++k) out[k] = sig[k % N].real();
        return out;
    }
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (int j = 1; j <= p.J; ++j) {
            s += c[j].real();
            c[j] *= rot[j];
        }
        out[k] = s;
    }
    return out;
}

}  // namespace eetsim
