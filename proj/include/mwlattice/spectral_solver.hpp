#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mwlattice/lattice_model.hpp"

namespace mwl {

/// Plane-wave basis exp(i(q + 2kj)z), j = -cutoff..cutoff, on a grid of
/// quasimomenta q (units of k) in the first Brillouin zone (-1, 1].
struct BlochBasisSpec {
  int plane_wave_cutoff = 32;
  std::vector<double> quasimomenta{0.0};
  int band_count = 8;

  int dimension() const { return 2 * plane_wave_cutoff + 1; }
  void validate() const;

  /// nq evenly spaced points q = -1 + 2(i+1)/nq; contains 0 and 1 for even nq.
  static BlochBasisSpec uniform(int nq, int band_count, int cutoff);
  /// max(32, ceil(3 sqrt(U/E_R))), also large enough for band_count.
  static int default_cutoff(double depth_er, int band_count = 0);
  static BlochBasisSpec for_lattice(const LatticeConfig& cfg, int nq, int band_count);
};

struct SolveOptions {
  unsigned workers = 1;
  bool check_convergence = true;
  /// Largest tolerated energy change (E_R) when the cutoff is doubled.
  double convergence_tol_er = 1e-8;
};

/// Bands and Bloch states of one spin state's lattice.
struct BandStructure {
  SpinState spin = SpinState::S0;
  BlochBasisSpec basis;
  PhysicalParams params;
  PotentialFourier potential;
  double well_center = 0.0;            ///< potential minimum in [0, a_lat)
  Eigen::MatrixXd energies;            ///< band x q, joules
  std::vector<Eigen::MatrixXcd> coefficients; ///< per q: plane wave x band

  int bands() const { return static_cast<int>(energies.rows()); }
  int nq() const { return static_cast<int>(energies.cols()); }
  double band_center(int n) const { return energies.row(n).mean(); }
  double band_min(int n) const { return energies.row(n).minCoeff(); }
  double band_max(int n) const { return energies.row(n).maxCoeff(); }
  double band_width(int n) const { return band_max(n) - band_min(n); }
  /// Gap between band n and its nearest neighbour band (below for n > 0,
  /// above for n == 0). Infinite when undefined.
  double gap(int n) const;

  /// Bloch function psi_{n,q}(z) = sum_j c_j exp(i(q + 2kj)z), unit mean
  /// density over a lattice period.
  cplx bloch_value(int band, int q_index, double z) const;
  cplx bloch_derivative(int band, int q_index, double z) const;
};

/// Lowest `count` eigenvalues of the real symmetric tridiagonal matrix
/// (diag, sub) by Sturm-sequence bisection. diagonalize() falls back to it
/// when implicit QR does not converge.
Eigen::VectorXd tridiagonal_bisection(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub, int count);

BandStructure diagonalize(const LatticeConfig& cfg, SpinState s, const BlochBasisSpec& basis,
                          const SolveOptions& options = {});

/// Bands whose minimum lies below the potential maximum. Throws SolverError
/// when every computed band qualifies (band_count too small to decide).
int bound_state_count(const BandStructure& sol);
int bound_state_count(const LatticeConfig& cfg, SpinState s, BlochBasisSpec basis);

struct RealSpaceGrid {
  double origin = 0.0;
  double spacing = 0.0;
  int points = 0;

  double position(int i) const { return origin + spacing * i; }
  Eigen::VectorXd positions() const;
  bool operator==(const RealSpaceGrid&) const = default;

  /// Grid symmetric about site_index * a_lat, covering sites_each_side
  /// neighbouring sites plus half a period of margin on each side.
  static RealSpaceGrid around_site(double lattice_spacing, int site_index, int sites_each_side,
                                   int points_per_site);
};

/// Wannier-like vibrational states |n> of one lattice site.
struct LocalizedStates {
  SpinState spin = SpinState::S0;
  RealSpaceGrid grid;
  Eigen::MatrixXcd amplitudes; ///< grid point x band, sum |psi|^2 dz = 1
  std::vector<bool> delocalized;
  Eigen::VectorXd energies;    ///< band-center energies, joules
  double center = 0.0;         ///< well center of the requested site
  double harmonic_width = 0.0; ///< x0 of the harmonic approximation

  int bands() const { return static_cast<int>(amplitudes.cols()); }
  /// Position variance of band n about its mean, m^2.
  double variance(int n) const;
};

struct LocalizeOptions {
  int band_count = -1; ///< -1: all bound bands
  int sites_each_side = 3;
  int points_per_site = 128;
  /// Permit bands at or above the bound-state count; they come back as
  /// zone-center Bloch states flagged delocalized.
  bool force_bloch = false;
  std::optional<RealSpaceGrid> grid;
};

LocalizedStates localized_states(const BandStructure& sol, int site_index,
                                 const LocalizeOptions& options = {});

struct TransitionRow {
  int n = 0;      ///< S0 band
  int nprime = 0; ///< S1 band
  double center_frequency = 0.0; ///< Hz relative to the hyperfine splitting
  double band_width = 0.0;       ///< Hz
};
using TransitionTable = std::vector<TransitionRow>;

/// q-averaged transition frequencies S0 band n -> S1 band n' for n < n0,
/// n' < n1, with band-curvature widths (max - min over q).
TransitionTable transition_table(const BandStructure& s0, const BandStructure& s1, int n0 = -1,
                                 int n1 = -1);

struct LightShiftPoint {
  double depth = 0.0; ///< J
  TransitionRow row;
};

/// Transition centers and widths versus depth_plus for selected (n, n') pairs.
std::vector<LightShiftPoint> light_shift_scan(LatticeConfig cfg, std::span<const double> depths,
                                              std::span<const std::pair<int, int>> pairs, int nq);

} // namespace mwl
