#include "mwlattice/lattice_model.hpp"

#include <cmath>
#include <string>

#include "mwlattice/errors.hpp"

namespace mwl {

std::string_view to_string(SpinState s) { return s == SpinState::S0 ? "s0" : "s1"; }

double recoil_energy(double wavelength, double mass) {
  if (!(wavelength > 0.0) || !(mass > 0.0))
    throw DomainError("recoil_energy: wavelength and mass must be positive");
  const double p = phys::hbar * 2.0 * phys::pi / wavelength;
  return p * p / (2.0 * mass);
}

double PhysicalParams::recoil_energy() const {
  return mwl::recoil_energy(lattice_wavelength, atom_mass);
}

void PhysicalParams::validate() const {
  if (!(atom_mass > 0.0) || !(lattice_wavelength > 0.0) || !(hyperfine_splitting > 0.0) ||
      !(zeeman_slope > 0.0))
    throw DomainError("PhysicalParams: all fields must be strictly positive");
}

PhysicalParams PhysicalParams::cesium(double wavelength) {
  PhysicalParams p;
  p.lattice_wavelength = wavelength;
  return p;
}

void LatticeConfig::validate() const {
  params.validate();
  if (!(theta >= 0.0 && theta <= 0.5 * phys::pi))
    throw DomainError("LatticeConfig: theta must lie in [0, pi/2]");
  if (!(depth_plus > 0.0)) throw DomainError("LatticeConfig: depth_plus must be positive");
  if (!(depth_ratio > 0.0)) throw DomainError("LatticeConfig: depth_ratio must be positive");
  for (const auto& w : weights) {
    if (!(w.plus >= 0.0) || !(w.minus >= 0.0))
      throw DomainError("LatticeConfig: sigma weights must be non-negative");
    if (std::abs(w.plus + w.minus - 1.0) > 1e-12)
      throw DomainError("LatticeConfig: sigma weights must sum to one");
  }
}

LatticeConfig LatticeConfig::with_depth_er(double depth_er, PhysicalParams params) {
  LatticeConfig cfg;
  cfg.params = params;
  cfg.depth_plus = depth_er * params.recoil_energy();
  return cfg;
}

namespace {

// Harmonic of the normalized two-cosine sum w+ cos^2(kz - t/2) + w- cos^2(kz + t/2).
cplx unit_harmonic(const SigmaWeights& w, double theta) {
  return 0.25 * (w.plus * std::polar(1.0, -theta) + w.minus * std::polar(1.0, theta));
}

} // namespace

PotentialFourier potential_fourier(SpinState s, const LatticeConfig& cfg) {
  const auto& w = cfg.weight(s);
  const double scale = static_cast<double>(cfg.sign) * cfg.depth_plus * cfg.depth_scale(s);
  return {scale * 0.5 * (w.plus + w.minus), scale * unit_harmonic(w, cfg.theta)};
}

double state_potential(double z, SpinState s, const LatticeConfig& cfg) {
  const auto& w = cfg.weight(s);
  const double k = cfg.params.wavenumber();
  const double a = std::cos(k * z - 0.5 * cfg.theta);
  const double b = std::cos(k * z + 0.5 * cfg.theta);
  return static_cast<double>(cfg.sign) * cfg.depth_plus * cfg.depth_scale(s) *
         (w.plus * a * a + w.minus * b * b);
}

double potential_minimum(SpinState s, const LatticeConfig& cfg) {
  // Location depends only on weights, angle and sign, so work with the
  // normalized potential u(z) = sign * 2 Re(h exp(2ikz)), phase x = 2kz.
  const cplx h = static_cast<double>(cfg.sign) * unit_harmonic(cfg.weight(s), cfg.theta);
  if (4.0 * std::abs(h) < cfg.curvature_floor)
    throw DomainError("displacement: undefined displacement, potential of " +
                      std::string(to_string(s)) + " is flat (curvature below floor)");
  auto u = [&](double x) { return (h * std::polar(1.0, x)).real(); };
  auto du = [&](double x) { return -(h * std::polar(1.0, x)).imag(); };

  constexpr int grid = 4096;
  const double step = 2.0 * phys::pi / grid;
  int best = 0;
  double best_val = u(0.0);
  for (int i = 1; i < grid; ++i) {
    const double v = u(i * step);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  // Bracket [x-step, x+step] contains the single minimum; du changes sign
  // from negative to positive across it. Bisection on the derivative.
  double lo = (best - 1) * step, hi = (best + 1) * step;
  if (du(lo) > 0.0 || du(hi) < 0.0) {
    // Grid point sits exactly on the minimum (flat derivative at both ends
    // cannot happen for a sinusoid with nonzero amplitude).
    lo = hi = best * step;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (du(mid) < 0.0 ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  x = std::fmod(x, 2.0 * phys::pi);
  if (x < 0.0) x += 2.0 * phys::pi;
  return x / (2.0 * cfg.params.wavenumber());
}

double displacement(const LatticeConfig& cfg) {
  cfg.validate();
  const double a = cfg.params.lattice_spacing();
  const double z0 = potential_minimum(SpinState::S0, cfg);
  const double z1 = potential_minimum(SpinState::S1, cfg);
  double d = std::remainder(z1 - z0, a);
  if (std::abs(std::abs(d) - 0.5 * a) < 1e-9 * a) d = 0.5 * a;
  return d;
}

double theta_for_displacement(double target, LatticeConfig cfg) {
  const double a = cfg.params.lattice_spacing();
  if (!(target >= 0.0 && target <= 0.5 * a))
    throw RangeError("theta_for_displacement: target outside [0, a_lat/2]");
  auto f = [&](double t) {
    cfg.theta = t;
    return std::abs(displacement(cfg)) - target;
  };
  double lo = 0.0, hi = 0.5 * phys::pi;
  if (f(hi) < 0.0) throw RangeError("theta_for_displacement: target not reachable");
  if (f(lo) >= 0.0) return lo;
  for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double depth_to_frequency(double depth, const PhysicalParams& params) {
  if (depth < 0.0) throw DomainError("depth_to_frequency: negative depth");
  const double er = params.recoil_energy();
  return 2.0 * std::sqrt(depth / er) * joule_to_hz(er);
}

double frequency_to_depth(double frequency, const PhysicalParams& params) {
  if (frequency < 0.0) throw DomainError("frequency_to_depth: negative frequency");
  const double er = params.recoil_energy();
  const double r = frequency / (2.0 * joule_to_hz(er));
  return r * r * er;
}

double zeeman_shift(double field, const PhysicalParams& params, double validity) {
  if (!(std::abs(field) <= validity))
    throw RangeError("zeeman_shift: field outside linear Zeeman validity window");
  return params.zeeman_slope * field;
}

void TrapSpec::validate(bool bound_state_work) const {
  if (!(axial_frequency > 0.0) || !(radial_frequency > 0.0) || !(beam_waist > 0.0) ||
      !(depth > 0.0))
    throw DomainError("TrapSpec: all fields must be positive");
  if (bound_state_work && !(depth / hz_to_joule(axial_frequency) > 1.0))
    throw DomainError("TrapSpec: trap holds no bound level");
}

} // namespace mwl
