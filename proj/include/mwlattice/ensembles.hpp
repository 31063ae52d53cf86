#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mwlattice/dynamics.hpp"

namespace mwl {

/// n = 1 / (exp(h f / kB T) - 1) and its inverse.
double nbar_from_temperature(double temperature, double frequency);
double temperature_from_nbar(double nbar, double frequency);

/// Thermal (geometric) populations of the axial oscillator.
struct ThermalEnsemble {
  Eigen::VectorXd populations;
  double nbar = 0.0;
  double temperature = 0.0; ///< K
  TrapSpec trap;
  int n_max = 0; ///< highest retained level

  /// Truncation is raised until the discarded tail is below `leakage`,
  /// then the populations are renormalized.
  static ThermalEnsemble from_nbar(double nbar, const TrapSpec& trap = {}, double leakage = 1e-6);
  static ThermalEnsemble from_temperature(double temperature, const TrapSpec& trap = {},
                                          double leakage = 1e-6);
  /// First `levels` populations; the remainder is folded into the last one.
  Eigen::VectorXd folded(int levels) const;
};

struct SidebandResult {
  double ratio = 0.0;
  double nbar = 0.0;
  double ground_population = 1.0;
};

/// R = red / blue, nbar = R / (1 - R), ground population 1 - R.
SidebandResult sideband_thermometry(double red_area, double blue_area);

/// Trapezoid integral of `signal` over |detuning - center| <= half_width.
double line_area(std::span<const double> detunings, std::span<const double> signal, double center,
                 double half_width);

/// Sideband thermometry on a spectrum. The red sideband removes a vibrational
/// quantum; for atoms starting in S1 it lies above the carrier, for S0 below.
SidebandResult sideband_thermometry(std::span<const double> detunings,
                                    std::span<const double> transfer, SpinState initial_spin,
                                    double carrier, double trap_frequency, double half_width);

struct BeatResult {
  Eigen::VectorXd frequencies; ///< carrier Rabi frequencies used, Hz
  Eigen::VectorXd populations; ///< normalized
  double temperature = 0.0;    ///< K
  double nbar = 0.0;
  double residual = 0.0;       ///< rms residual of the Boltzmann fit in log p
  double trace_residual = 0.0; ///< rms residual of the trace fit
};

/// Populations from a carrier Rabi trace containing the frequencies
/// bare_rabi |M[n][n]|, n < levels, then a weighted log-linear Boltzmann fit.
BeatResult beat_thermometry(const RabiTrace& trace, const CouplingMatrix& m, double trap_frequency,
                            int levels = 6);

// Inhomogeneous averaging -----------------------------------------------------

struct RadialModel {
  double temperature = 0.0;  ///< K
  double frequency = 1.1e3;  ///< Hz
  double waist = 20e-6;      ///< m
};

struct InhomogeneityModel {
  double sigma_depth_frac = 0.0; ///< fractional gaussian spread of the depth
  double sigma_field = 0.0;      ///< T
  RadialModel radial;
  int samples = 64;
  std::uint64_t seed = 0;

  void validate() const;
  bool trivial() const {
    return sigma_depth_frac == 0.0 && sigma_field == 0.0 && radial.temperature == 0.0;
  }
};

struct InhomogeneitySample {
  double depth_factor = 1.0; ///< local depth / nominal depth
  double field_offset = 0.0; ///< T
  double radius = 0.0;       ///< m
};

/// Scrambled Halton points mapped to the depth, field and radial
/// distributions. A single nominal sample when the model is trivial.
std::vector<InhomogeneitySample> inhomogeneity_samples(const InhomogeneityModel& model,
                                                       double atom_mass);

struct Averaged {
  double mean = 0.0;
  double stddev = 0.0;
  double standard_error = 0.0;
  int samples = 0;
};

Averaged inhomogeneous_average(const std::function<double(const InhomogeneitySample&)>& observable,
                               const InhomogeneityModel& model, double atom_mass,
                               unsigned workers = 1);

struct BroadenedOptions {
  ScanOptions scan;
  /// Internal detuning grid spacing relative to the output grid spacing.
  double refine = 0.5;
  int nq = 8;
};

/// Spectrum averaged over the inhomogeneity model. Each sample shifts every
/// S0 n -> S1 n' line by the change of its band-center frequency at the
/// sample's depth plus the Zeeman shift; line shapes come from the nominal
/// model. `cfg` must be the configuration `model` was built from.
std::vector<double> broadened_spectrum(const LatticeConfig& cfg, const MotionalModel& model,
                                       SpinState spin, const Eigen::VectorXd& populations,
                                       const Pulse& pulse, std::span<const double> detunings,
                                       const InhomogeneityModel& inhom,
                                       const BroadenedOptions& options = {});

} // namespace mwl
