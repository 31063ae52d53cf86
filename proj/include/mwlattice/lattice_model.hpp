#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "mwlattice/units.hpp"

namespace mwl {

/// Clock pair: S0 = |F=3, mF=3>, S1 = |F=4, mF=4>. S0 < S1.
enum class SpinState : std::uint8_t { S0 = 0, S1 = 1 };

inline constexpr std::size_t index(SpinState s) { return static_cast<std::size_t>(s); }
inline constexpr SpinState other(SpinState s) {
  return s == SpinState::S0 ? SpinState::S1 : SpinState::S0;
}
std::string_view to_string(SpinState s);

/// Red-detuned lattices trap at intensity maxima, blue-detuned at minima.
enum class PotentialSign : std::int8_t { Attractive = -1, Repulsive = +1 };

struct PhysicalParams {
  double atom_mass = phys::cs_mass;
  double lattice_wavelength = 865.9 * nm;
  double hyperfine_splitting = phys::cs_hyperfine;
  /// Linear Zeeman slope of the clock-pair transition, Hz per tesla.
  double zeeman_slope = (4.0 * phys::cs_gF4 - 3.0 * phys::cs_gF3) * phys::muB / phys::h;

  double wavenumber() const { return 2.0 * phys::pi / lattice_wavelength; }
  double lattice_spacing() const { return 0.5 * lattice_wavelength; }
  double recoil_energy() const;
  double recoil_frequency() const { return joule_to_hz(recoil_energy()); }

  void validate() const;

  static PhysicalParams cesium(double wavelength = 865.9 * nm);
};

/// Relative intensity weights of the sigma+ / sigma- standing waves seen by a
/// spin state. plus + minus == 1.
struct SigmaWeights {
  double plus = 1.0;
  double minus = 0.0;
};

struct LatticeConfig {
  PhysicalParams params;
  double theta = 0.0;       ///< polarization angle, [0, pi/2]
  double depth_plus = 0.0;  ///< J, peak depth of the sigma+ standing wave
  double depth_ratio = 1.0; ///< S1-to-S0 overall depth scaling
  std::array<SigmaWeights, 2> weights{SigmaWeights{0.125, 0.875}, SigmaWeights{1.0, 0.0}};
  PotentialSign sign = PotentialSign::Attractive;
  /// Minimum relative curvature of a potential minimum (in units of the
  /// curvature of a full-contrast cos^2 lattice) for displacement() to be defined.
  double curvature_floor = 1e-6;

  void validate() const;

  const SigmaWeights& weight(SpinState s) const { return weights[index(s)]; }
  double depth_scale(SpinState s) const { return s == SpinState::S1 ? depth_ratio : 1.0; }

  /// Copy with the depth expressed in recoil energies.
  static LatticeConfig with_depth_er(double depth_er, PhysicalParams params = {});
};

/// Fourier representation U(z) = offset + 2 Re(harmonic * exp(2ikz)).
struct PotentialFourier {
  double offset = 0.0;  ///< J
  cplx harmonic{0.0};   ///< J
  /// Peak-to-peak modulation depth, 4|harmonic|.
  double modulation() const { return 4.0 * std::abs(harmonic); }
  double maximum() const { return offset + 2.0 * std::abs(harmonic); }
  double minimum() const { return offset - 2.0 * std::abs(harmonic); }
};

PotentialFourier potential_fourier(SpinState s, const LatticeConfig& cfg);

/// State-dependent lattice potential U_s(z), joules.
double state_potential(double z, SpinState s, const LatticeConfig& cfg);

/// Position of the potential minimum of spin s inside [0, a_lat), found by a
/// dense grid scan followed by golden-section refinement.
double potential_minimum(SpinState s, const LatticeConfig& cfg);

/// Signed separation z_min(S1) - z_min(S0) of the nearest pair of minima,
/// in (-a_lat/2, a_lat/2]. Throws DomainError for flat potentials.
double displacement(const LatticeConfig& cfg);

/// Polarization angle in [0, pi/2] that realizes |displacement| = target.
/// Requires displacement to be monotone in theta (true for the default weights).
double theta_for_displacement(double target, LatticeConfig cfg);

/// Harmonic trap frequency (Hz) at the bottom of a pure cos^2 well of depth U.
double depth_to_frequency(double depth, const PhysicalParams& params);
double frequency_to_depth(double frequency, const PhysicalParams& params);

/// Linear Zeeman shift (Hz) of the clock pair. |field| must not exceed
/// `validity` tesla.
double zeeman_shift(double field, const PhysicalParams& params, double validity = 1e-3);

double recoil_energy(double wavelength, double mass);

struct TrapSpec {
  double axial_frequency = 110.0 * khz;
  double radial_frequency = 1.1 * khz;
  double beam_waist = 20.0 * um;
  double depth = 0.0; ///< J

  void validate(bool bound_state_work = false) const;
};

} // namespace mwl
