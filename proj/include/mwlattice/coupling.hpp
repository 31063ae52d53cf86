#pragma once

#include <cmath>

#include "mwlattice/errors.hpp"
#include "mwlattice/spectral_solver.hpp"

namespace mwl {

/// Franck-Condon matrix M[n'][n] = <S1, n'|S0, n> between the vibrational
/// states of two displaced wells. rabi(n -> n') = bare_rabi * |M[n'][n]|.
struct CouplingMatrix {
  double delta_x = 0.0;   ///< m
  double bare_rabi = 0.0; ///< Hz
  Eigen::MatrixXcd elements; ///< rows: S1 levels n', cols: S0 levels n

  Eigen::Index rows() const { return elements.rows(); }
  Eigen::Index cols() const { return elements.cols(); }
  double magnitude(int n, int nprime) const { return std::abs(elements(nprime, n)); }
};

struct LambDicke {
  double eta_eff = 0.0; ///< |delta_x| / (2 x0)
  double x0 = 0.0;      ///< ground-state position width, m
  double p0 = 0.0;      ///< hbar / (2 x0)
};

LambDicke effective_lamb_dicke(double delta_x, double axial_frequency, double mass);

/// Displaced harmonic oscillator overlap <n'|D(alpha)|n>, alpha = delta_x / (2 x0).
///   n' >= n: sqrt(n!/n'!) alpha^(n'-n) exp(-alpha^2/2) L_n^(n'-n)(alpha^2)
///   n' <  n: (-1)^(n-n') times the same expression with n and n' exchanged.
/// Log-factorials keep it finite up to n, n' ~ 100.
template <typename Scalar>
Scalar ho_overlap(int n, int nprime, Scalar alpha) {
  using std::exp;
  using std::lgamma;
  using std::log;
  using std::abs;
  if (n < 0 || nprime < 0) throw DomainError("ho_overlap: negative quantum number");
  Scalar sign(1);
  if (nprime < n) {
    std::swap(n, nprime);
    if ((nprime - n) % 2 != 0) sign = Scalar(-1);
  }
  const int m = nprime - n;
  const Scalar x = alpha * alpha;
  // Generalized Laguerre L_n^(m)(x) by upward recurrence.
  Scalar l_prev(1), l = Scalar(1 + m) - x;
  if (n == 0) l = Scalar(1);
  for (int j = 1; j < n; ++j) {
    const Scalar next = ((Scalar(2 * j + 1 + m) - x) * l - Scalar(j + m) * l_prev) / Scalar(j + 1);
    l_prev = l;
    l = next;
  }
  if (m > 0 && alpha == Scalar(0)) return Scalar(0);
  Scalar power(1);
  if (m > 0) {
    const Scalar mag = exp(Scalar(0.5) * (lgamma(double(n + 1)) - lgamma(double(nprime + 1))) +
                           Scalar(m) * log(abs(alpha)));
    power = (alpha < Scalar(0) && m % 2 != 0) ? -mag : mag;
  }
  return sign * power * exp(-x / Scalar(2)) * l;
}

/// Real-space overlap of two sets of localized states on the same grid.
/// `edge_tolerance` bounds |psi(edge)| / max|psi| for localized states.
CouplingMatrix franck_condon_matrix(const LocalizedStates& s0, const LocalizedStates& s1,
                                    double delta_x, double bare_rabi,
                                    double edge_tolerance = 1e-6);

/// Weak-drive Rabi frequency bare_rabi * |M[n'][n]|, Hz.
double rabi_frequency(int n, int nprime, const CouplingMatrix& m);

/// Overlap of S1 and S0 Bloch states at the same quasimomentum, computed
/// in the shared plane-wave basis: rows S1 bands, cols S0 bands.
Eigen::MatrixXcd bloch_overlap(const BandStructure& s0, const BandStructure& s1, int q_index,
                               int n0 = -1, int n1 = -1);

struct CouplingSetup {
  BandStructure bands0, bands1;
  LocalizedStates states0, states1;
  CouplingMatrix matrix;
};

struct CouplingOptions {
  int nq = 32;
  int sites_each_side = 3;
  /// Grid is doubled up to this many sites when states leak past its edges.
  int max_sites_each_side = 24;
  int points_per_site = 128;
  /// Extra levels retained above the bound-state count.
  int continuum_margin = 4;
  /// Upper limit on retained levels per spin (-1: no limit).
  int max_levels = -1;
  unsigned workers = 1;
};

/// Full pipeline for one lattice configuration: band structures of both
/// spins, localized states on a shared grid around site 0, and their
/// Franck-Condon matrix. Retains all bound states plus a continuum margin.
CouplingSetup build_coupling(const LatticeConfig& cfg, double bare_rabi,
                             const CouplingOptions& options = {});

} // namespace mwl
