#pragma once

#include <vector>

#include "mwlattice/coupling.hpp"

namespace mwl {

/// Lamb-Dicke factor of the repump photon recoil, defined as the rms over
/// a sigma dipole emission pattern: k x0 sqrt(<u^2>) with <u^2> = 2/5.
double default_optical_eta(const TrapSpec& trap, const PhysicalParams& params,
                           double optical_wavelength = phys::cs_d2_wavelength);

/// q[n'][m]: probability that a repump from |S0, m> ends in |S1, n'>.
/// Photon recoil e^{i k u z} (u the emission direction cosine) is averaged
/// over the dipole pattern and projected onto the displaced S1 well, so
/// optical_eta = 0 reduces to |M[n'][m]|^2. Target levels above `levels`
/// are folded into the top level; the tail outside all computed states must
/// stay below `tolerance`.
Eigen::MatrixXd redistribution_matrix(const LocalizedStates& s0, const LocalizedStates& s1,
                                      double optical_eta, int levels, double tolerance = 1e-6);

struct CoolingParams {
  Eigen::VectorXd levels0;   ///< Hz
  Eigen::VectorXd levels1;   ///< Hz, relative to the hyperfine splitting
  Eigen::MatrixXd coupling;  ///< |M[n'][m]|, rows S1, cols S0
  double bare_rabi = 0.0;    ///< Hz
  double drive_offset = 0.0; ///< Hz above the hyperfine splitting
  double repump_rate = 0.0;  ///< 1/s
  Eigen::MatrixXd redistribution; ///< q[n'][m]
  double duration = 20e-3;   ///< s
  int samples = 201;         ///< trajectory points over [0, duration]

  int levels() const { return static_cast<int>(levels0.size()); }
  /// Sideband Rabi frequency of |S1, n> -> |S0, n - 1>, Hz.
  double sideband_rabi(int n) const { return bare_rabi * coupling(n, n - 1); }
  void validate() const;
};

/// Documented defaults: 832.6 E_R, 15 nm displacement, 10 levels, drive on
/// the |S1, 1> -> |S0, 0> line, 20 ms. Repumps from levels near the barrier
/// top partly land in unbound states; that loss (below 1e-3 for the retained
/// levels) is counted in the top level.
struct CoolingDefaults {
  double depth_er = 832.6;
  double delta_x = 15e-9;
  int levels = 10;
  double bare_rabi = 10e3;     ///< Hz
  double repump_rate = 2.0e5;  ///< 1/s
  double duration = 20e-3;
  double optical_eta = -1.0;   ///< < 0: default_optical_eta
  double redistribution_tolerance = 1e-3;
};

CoolingParams cooling_params(const CouplingSetup& setup, int levels, double bare_rabi,
                             double repump_rate, double optical_eta, double duration,
                             double redistribution_tolerance = 1e-6);
CoolingParams cooling_params(const CoolingDefaults& d = {}, const TrapSpec& trap = {});

/// Generator G of dp/dt = G p over (S0 levels, S1 levels): microwave rates
/// (Omega^2 / 2) gamma / (gamma^2 + Delta^2) with gamma = repump_rate / 2 for
/// every pair, plus repump with redistribution.
Eigen::MatrixXd rate_matrix(const CoolingParams& p);

struct CoolingResult {
  std::vector<double> times;   ///< s
  Eigen::MatrixXd populations; ///< (S0 levels, S1 levels) x times
  std::vector<double> nbar;    ///< after a final repump
  std::vector<double> ground;
  Eigen::VectorXd steady_state;
  double final_nbar = 0.0;
  double ground_population = 0.0;
  double steady_nbar = 0.0;
  double norm_error = 0.0;
  bool steady = false;    ///< |d nbar/dt| < 1e-4 nbar per ms at the end
  bool converged = false; ///< steady within 10 durations
};

/// Distribution over S1 levels after repumping every S0 population.
Eigen::VectorXd after_repump(const Eigen::VectorXd& state, const CoolingParams& p);

/// Simultaneous sideband drive and repump from S1 populations `initial`.
CoolingResult cool(const Eigen::VectorXd& initial, const CoolingParams& p);

} // namespace mwl
