// units.hpp: unit tags, physical constants and the EET -> NMR frequency map
#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace eetsim {

// Canonical internal unit: angular frequency in rad/ms ("angular kHz").
// 2*pi x 1 kHz == 2*pi rad/ms.

enum class UnitTag { EET_wavenumber, NMR_angular };

inline std::string to_string(UnitTag u) {
    return u == UnitTag::EET_wavenumber ? "EET_wavenumber" : "NMR_angular";
}

inline UnitTag unit_tag_from_string(const std::string& s) {
    if (s == "EET_wavenumber") return UnitTag::EET_wavenumber;
    if (s == "NMR_angular") return UnitTag::NMR_angular;
    throw std::invalid_argument("unknown unit tag: " + s);
}

namespace constants {
inline constexpr double kB = 1.381e-23;      // J/K
inline constexpr double hbar = 1.055e-34;    // J s
inline constexpr double c_cm = 3.0e10;       // cm/s
inline constexpr double pi = std::numbers::pi;
}  // namespace constants

// kHz (cyclic) -> rad/ms
inline constexpr double khz(double f) { return 2.0 * constants::pi * f; }
// Hz (cyclic) -> rad/ms
inline constexpr double hz(double f) { return 2.0 * constants::pi * f * 1e-3; }

// k_B T / hbar in rad/ms
inline double thermal_frequency(double temperature_K) {
    if (!(temperature_K > 0.0)) throw std::invalid_argument("temperature must be positive");
    return constants::kB * temperature_K / constants::hbar * 1e-3;
}

// Fixed scale between the photosynthetic and NMR systems. One wavenumber
// (c x 1 cm^-1 = 3e10 Hz) maps to 100*pi Hz, and the resulting kHz number is
// used as an angular frequency: 1 cm^-1 -> pi/10 rad/ms.
struct UnitScaler {
    double scale_factor{3.0e8 / constants::pi};

    double wavenumber_to_nmr(double cm) const {
        return cm * constants::c_cm / scale_factor * 1e-3;
    }
    double nmr_to_wavenumber(double rad_per_ms) const {
        return rad_per_ms / (constants::c_cm / scale_factor * 1e-3);
    }
    // temperatures follow the same energy scaling (3e4 K <-> 5e-5 K)
    double temperature_to_nmr(double kelvin_eet) const {
        return kelvin_eet / (2.0 * constants::pi * scale_factor);
    }
    double temperature_to_eet(double kelvin_nmr) const {
        return kelvin_nmr * 2.0 * constants::pi * scale_factor;
    }
};

}  // namespace eetsim
