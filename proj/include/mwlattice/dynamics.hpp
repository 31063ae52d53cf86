#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mwlattice/coupling.hpp"

namespace mwl {

enum class EnvelopeShape { Rectangular, Gaussian };

struct Envelope {
  EnvelopeShape shape = EnvelopeShape::Rectangular;
  double duration = 0.0;   ///< rectangular length, s
  double fwhm = 0.0;       ///< gaussian full width at half maximum, s
  double truncation = 3.0; ///< gaussian half-window in units of fwhm

  /// Pulse occupies [0, length()); a gaussian is centered at length()/2.
  double length() const;
  double value(double t) const;
  double integral() const;
  /// Largest |d envelope / dt|.
  double max_slope() const;

  static Envelope rectangular(double duration);
  static Envelope gaussian(double fwhm, double truncation = 3.0);
};

enum class DetuningReference { Hyperfine, Line };

/// Microwave drive in the rotating frame of its own carrier frequency.
struct Pulse {
  double bare_rabi = 0.0; ///< Hz
  /// Drive frequency minus the reference: the hyperfine splitting, or the
  /// S0 n -> S1 n' line of the model.
  double detuning = 0.0;
  DetuningReference reference = DetuningReference::Hyperfine;
  int line_n = 0;
  int line_nprime = 0;
  Envelope envelope;
  double phase = 0.0;

  /// 2 bare_rabi * integral(envelope): a pulse of area 1 (in units of pi)
  /// fully inverts a resonant two-level system with unit coupling.
  double area_pi() const { return 2.0 * bare_rabi * envelope.integral(); }
  void validate() const;

  static Pulse with_area(double area_pi, Envelope envelope, double coupling = 1.0);
};

/// Levels and Franck-Condon couplings of one (quasimomentum) block.
/// Basis ordering: |S0, n> -> n, |S1, n'> -> n0 + n'.
struct DriveHamiltonian {
  Eigen::VectorXd levels0; ///< Hz
  Eigen::VectorXd levels1; ///< Hz, relative to the hyperfine splitting
  Eigen::MatrixXcd coupling; ///< rows S1, cols S0

  int n0() const { return static_cast<int>(levels0.size()); }
  int n1() const { return static_cast<int>(levels1.size()); }
  int dim() const { return n0() + n1(); }
  int index(SpinState s, int n) const { return s == SpinState::S0 ? n : n0() + n; }

  double line_center(int n, int nprime) const { return levels1[nprime] - levels0[n]; }
  /// Hamiltonian / h in Hz for instantaneous Rabi frequency `rabi` and drive
  /// frequency `drive_offset` above the hyperfine splitting.
  Eigen::MatrixXcd matrix(double rabi, double drive_offset, double phase) const;
};

/// Weighted set of drive blocks: one block for a localized well pair, one per
/// quasimomentum for the Bloch route.
struct MotionalModel {
  std::vector<DriveHamiltonian> blocks;
  std::vector<double> weights;
  double trap_frequency = 0.0; ///< Hz, S0 0 -> 1 spacing

  /// Drive offset of `pulse` above the hyperfine splitting.
  double drive_offset(const Pulse& pulse) const;
  /// Weighted mean coupling magnitude of a line over the blocks (rms).
  double line_coupling(int n, int nprime) const;
  double line_center(int n, int nprime) const;
};

/// Localized (deep lattice) model on the first n0 / n1 levels.
MotionalModel localized_model(const CouplingSetup& setup, int n0, int n1,
                              double zeeman_offset = 0.0);
/// Bloch-basis model: one block per quasimomentum, uniform weights.
MotionalModel bloch_model(const BandStructure& s0, const BandStructure& s1, int n0, int n1,
                          double zeeman_offset = 0.0);

struct EvolveOptions {
  /// Bound on envelope change per piecewise-constant step.
  double max_envelope_change = 1e-3;
  /// Populations must move by less than this when the step is halved.
  double halving_tolerance = 1e-6;
  bool verify_step = true;
  int max_doublings = 10;
  /// Fixed step count (0: chosen from the envelope bound).
  int steps = 0;
};

struct Trajectory {
  std::vector<double> times;
  Eigen::MatrixXcd states; ///< dim x times
  int steps = 0;
  double step_error = 0.0;
};

/// Schrodinger evolution of `initial` under H(t) / h = diag + pulse(t) coupling.
/// Times must be sorted and non-negative; the pulse starts at t = 0.
Trajectory evolve(const Eigen::VectorXcd& initial, const DriveHamiltonian& h, const Pulse& pulse,
                  double drive_offset, std::span<const double> times,
                  const EvolveOptions& options = {});

struct RabiTrace {
  std::vector<double> times;
  std::vector<double> transfer; ///< population in the spin opposite to the initial one
  std::vector<double> p0, p1;
  SpinState initial_spin = SpinState::S1;
  int initial_level = 0;
  Pulse pulse;
  bool unresolved = false; ///< effective Rabi frequency above trap_frequency / 2
};

/// Rabi oscillation from |spin, n>, drive resonant with the n -> n' line
/// unless the pulse carries its own reference.
RabiTrace rabi_trace(const MotionalModel& model, SpinState spin, int n, int nprime, Pulse pulse,
                     std::span<const double> times, const EvolveOptions& options = {});

struct RabiEstimate {
  double frequency = 0.0; ///< Hz
  double amplitude = 0.0; ///< windowed spectral amplitude of the peak
  double periods = 0.0;   ///< trace length in units of 1/frequency
};

struct ExtractOptions {
  double max_frequency = 0.0; ///< 0: Nyquist
  int oversample = 16;
};

/// Dominant oscillation frequency of the transfer signal: Hann-windowed
/// transform on a zero-padded frequency grid, quadratic peak interpolation.
RabiEstimate extract_rabi_estimate(const RabiTrace& trace, const ExtractOptions& options = {});
double extract_rabi(const RabiTrace& trace, const ExtractOptions& options = {});

struct ScanOptions {
  unsigned workers = 1;
  EvolveOptions evolve;
};

/// Final population of every level of the opposite spin, for each detuning
/// (drive offset above the hyperfine splitting) and each initial level.
/// Result[i] is (detunings x levels) for initial level i, averaged over blocks.
std::vector<Eigen::MatrixXd> spectrum_components(const MotionalModel& model, SpinState spin,
                                                 int initial_levels, const Pulse& pulse,
                                                 std::span<const double> detunings,
                                                 const ScanOptions& options = {});

/// Transfer probability into the opposite spin versus detuning for an
/// incoherent mixture of initial levels with the given populations.
std::vector<double> spectrum_scan(const MotionalModel& model, SpinState spin,
                                  const Eigen::VectorXd& populations, const Pulse& pulse,
                                  std::span<const double> detunings,
                                  const ScanOptions& options = {});

// Quantum walk on maximally offset lattices ---------------------------------

/// Chain |S0, j> at x = j a, |S1, j> at x = (j + 1/2) a with microwave
/// hopping to both S1 neighbours and tunneling inside each spin lattice.
struct WalkParams {
  int sites = 64;
  double bare_rabi = 0.0;     ///< Hz
  double detuning = 0.0;      ///< drive minus S0 -> S1 band-center line, Hz
  cplx coupling_right{0.0};   ///< <S1, j|S0, j>
  cplx coupling_left{0.0};    ///< <S1, j-1|S0, j>
  double tunneling0 = 0.0;    ///< Hz, E(q) = e - 2 J cos(q a)
  double tunneling1 = 0.0;
  double site_spacing = 0.0;  ///< a_lat, m
  double onsite_variance = 0.0; ///< intra-well position variance, m^2
  double edge_tolerance = 1e-4;
  int edge_cells = 2;
  bool auto_enlarge = true;
  int max_sites = 2048;
};

struct WalkResult {
  std::vector<double> times;
  Eigen::VectorXd positions;   ///< m, per chain element (2 * sites)
  Eigen::MatrixXd populations; ///< chain element x time
  std::vector<double> sigma_x; ///< m
  std::vector<double> p0;
  std::vector<double> norm;
  int sites = 0;
  double edge_population = 0.0;
  bool valid = true;
};

WalkResult quantum_walk(WalkParams params, std::span<const double> times);

struct WalkSetup {
  WalkParams params;
  BandStructure bands0, bands1;
  double single_pair_rabi = 0.0; ///< bare_rabi * |coupling_right|, Hz
};

/// Derives walk couplings and tunneling from the band structure. The lattice
/// must be maximally offset (|displacement| = a_lat / 2).
WalkSetup walk_from_lattice(const LatticeConfig& cfg, double bare_rabi, int sites,
                            int nq = 32, int sites_each_side = 6);

struct BallisticFit {
  double exponent = 0.0; ///< d log sigma / d log t
  double velocity = 0.0; ///< d sigma / dt, m/s
};

BallisticFit ballistic_fit(const WalkResult& walk, double t_min);

/// max - min of p0 over times in [t_from, t_to].
double spin_visibility(const WalkResult& walk, double t_from, double t_to);

} // namespace mwl
