#pragma once

#include <complex>
#include <numbers>

#include <Eigen/Dense>

namespace mwl {

using cplx = std::complex<double>;

/// CODATA 2018 exact / recommended values, SI units.
namespace phys {
inline constexpr double pi = std::numbers::pi;
inline constexpr double h = 6.62607015e-34;
inline constexpr double hbar = h / (2.0 * pi);
inline constexpr double kB = 1.380649e-23;
inline constexpr double muB = 9.2740100783e-24;
inline constexpr double amu = 1.66053906660e-27;

// Caesium 133
inline constexpr double cs_mass = 132.905451961 * amu;
inline constexpr double cs_hyperfine = 9192631770.0;
inline constexpr double cs_d2_wavelength = 852.34727582e-9;
// Lande g_F of the two clock-pair hyperfine manifolds (electronic part only).
inline constexpr double cs_gF4 = 0.25;
inline constexpr double cs_gF3 = -0.25;
} // namespace phys

// Energy conversions. Frequencies are ordinary (Hz) everywhere.
inline constexpr double joule_to_hz(double e) { return e / phys::h; }
inline constexpr double hz_to_joule(double f) { return f * phys::h; }
inline constexpr double joule_to_kelvin(double e) { return e / phys::kB; }
inline constexpr double kelvin_to_joule(double t) { return t * phys::kB; }
inline constexpr double hz_to_kelvin(double f) { return f * phys::h / phys::kB; }
inline constexpr double kelvin_to_hz(double t) { return t * phys::kB / phys::h; }

inline constexpr double gauss = 1e-4; // tesla
inline constexpr double nm = 1e-9;
inline constexpr double um = 1e-6;
inline constexpr double khz = 1e3;

} // namespace mwl
