#include "mwlattice/spectral_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mwlattice/errors.hpp"
#include "mwlattice/parallel.hpp"

namespace mwl {

void BlochBasisSpec::validate() const {
  if (band_count < 1) throw DomainError("BlochBasisSpec: band_count must be >= 1");
  if (plane_wave_cutoff < band_count + 4)
    throw DomainError("BlochBasisSpec: plane_wave_cutoff must be >= band_count + 4");
  if (quasimomenta.empty()) throw DomainError("BlochBasisSpec: empty quasimomentum grid");
  for (double q : quasimomenta) {
    if (!(q > -1.0 && q <= 1.0))
      throw DomainError("BlochBasisSpec: quasimomenta must lie in (-1, 1]");
    if (q == 1.0) continue;
    const bool mirrored = std::any_of(quasimomenta.begin(), quasimomenta.end(),
                                      [q](double p) { return std::abs(p + q) < 1e-12; });
    if (!mirrored) throw DomainError("BlochBasisSpec: quasimomentum grid not symmetric about 0");
  }
}

BlochBasisSpec BlochBasisSpec::uniform(int nq, int band_count, int cutoff) {
  if (nq < 1) throw DomainError("BlochBasisSpec: nq must be >= 1");
  BlochBasisSpec b;
  b.plane_wave_cutoff = cutoff;
  b.band_count = band_count;
  b.quasimomenta.resize(nq);
  if (nq == 1) {
    b.quasimomenta[0] = 0.0;
  } else {
    for (int i = 0; i < nq; ++i) b.quasimomenta[i] = -1.0 + 2.0 * (i + 1) / nq;
  }
  return b;
}

int BlochBasisSpec::default_cutoff(double depth_er, int band_count) {
  const int from_depth = static_cast<int>(std::ceil(3.0 * std::sqrt(std::max(depth_er, 0.0))));
  return std::max({32, from_depth, band_count + 4});
}

BlochBasisSpec BlochBasisSpec::for_lattice(const LatticeConfig& cfg, int nq, int band_count) {
  const double depth_er = cfg.depth_plus * std::max(1.0, cfg.depth_ratio) / cfg.params.recoil_energy();
  return uniform(nq, band_count, default_cutoff(depth_er, band_count));
}

namespace {

// Solves (T - shift) x = b in place for symmetric tridiagonal T using LU
// with partial pivoting (the tridiagonal variant of Gaussian elimination).
class ShiftedTridiagonal {
public:
  ShiftedTridiagonal(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub, double shift)
      : n_(diag.size()), dl_(sub), d_(diag.array() - shift), du_(sub),
        du2_(Eigen::VectorXd::Zero(std::max<Eigen::Index>(n_ - 2, 0))), pivot_(n_, false) {
    const double tiny = 1e-300;
    for (Eigen::Index i = 0; i + 1 < n_; ++i) {
      if (std::abs(d_[i]) >= std::abs(dl_[i])) {
        if (d_[i] == 0.0) d_[i] = tiny;
        const double f = dl_[i] / d_[i];
        dl_[i] = f;
        d_[i + 1] -= f * du_[i];
      } else {
        const double f = d_[i] / dl_[i];
        d_[i] = dl_[i];
        dl_[i] = f;
        const double t = du_[i];
        du_[i] = d_[i + 1];
        d_[i + 1] = t - f * d_[i + 1];
        if (i + 2 < n_) {
          du2_[i] = du_[i + 1];
          du_[i + 1] = -f * du_[i + 1];
        }
        pivot_[i] = true;
      }
    }
    if (d_[n_ - 1] == 0.0) d_[n_ - 1] = tiny;
  }

  void solve(Eigen::VectorXd& b) const {
    for (Eigen::Index i = 0; i + 1 < n_; ++i) {
      if (!pivot_[i]) {
        b[i + 1] -= dl_[i] * b[i];
      } else {
        const double t = b[i];
        b[i] = b[i + 1];
        b[i + 1] = t - dl_[i] * b[i];
      }
    }
    b[n_ - 1] /= d_[n_ - 1];
    if (n_ > 1) b[n_ - 2] = (b[n_ - 2] - du_[n_ - 2] * b[n_ - 1]) / d_[n_ - 2];
    for (Eigen::Index i = n_ - 3; i >= 0; --i)
      b[i] = (b[i] - du_[i] * b[i + 1] - du2_[i] * b[i + 2]) / d_[i];
  }

private:
  Eigen::Index n_;
  Eigen::VectorXd dl_, d_, du_, du2_;
  std::vector<bool> pivot_;
};

struct Tridiagonal {
  Eigen::VectorXd diag, sub;
};

// H(q) is Hermitian tridiagonal in the plane-wave basis. A diagonal phase
// transform makes it real symmetric: H = D T D^dagger, D_jj = exp(i j arg h).
Tridiagonal hamiltonian_at(double q, int cutoff, double offset_er, cplx harmonic_er) {
  const int dim = 2 * cutoff + 1;
  Tridiagonal t{Eigen::VectorXd(dim), Eigen::VectorXd::Constant(dim - 1, std::abs(harmonic_er))};
  for (int i = 0; i < dim; ++i) {
    const double kin = q + 2.0 * (i - cutoff);
    t.diag[i] = kin * kin + offset_er;
  }
  return t;
}

// Number of eigenvalues of t below x (Sturm sequence).
Eigen::Index count_below(const Tridiagonal& t, double x) {
  Eigen::Index count = 0;
  double d = 1.0;
  for (Eigen::Index i = 0; i < t.diag.size(); ++i) {
    const double off = i > 0 ? t.sub[i - 1] * t.sub[i - 1] : 0.0;
    d = t.diag[i] - x - (i > 0 ? off / d : 0.0);
    if (d == 0.0) d = -std::numeric_limits<double>::epsilon() * (std::abs(t.diag[i]) + std::abs(x) + 1.0);
    if (d < 0.0) ++count;
  }
  return count;
}

// Bisection on the Sturm count; used when implicit QR does not converge.
Eigen::VectorXd bisect_lowest(const Tridiagonal& t, int count) {
  const Eigen::Index n = t.diag.size();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = (i > 0 ? std::abs(t.sub[i - 1]) : 0.0) + (i + 1 < n ? std::abs(t.sub[i]) : 0.0);
    lo = std::min(lo, t.diag[i] - r);
    hi = std::max(hi, t.diag[i] + r);
  }
  const double tol = 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi));
  Eigen::VectorXd out(count);
  for (int k = 0; k < count; ++k) {
    double a = k > 0 ? out[k - 1] - tol : lo, b = hi;
    while (b - a > tol) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      if (count_below(t, mid) > k) b = mid; else a = mid;
    }
    out[k] = 0.5 * (a + b);
  }
  return out;
}

Eigen::VectorXd lowest_eigenvalues(const Tridiagonal& t, int count) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(t.diag, t.sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return bisect_lowest(t, count);
  return es.eigenvalues().head(count);
}

struct QSolution {
  Eigen::VectorXd energies; // E_R
  Eigen::MatrixXcd coefficients;
};

// Eigenvalues by implicit QR, the few wanted eigenvectors by inverse
// iteration. Vectors of (near-)degenerate eigenvalues are orthogonalized
// against each other, which also covers the free-particle limit.
QSolution solve_at(double q, int cutoff, int bands, double offset_er, cplx harmonic_er) {
  const auto t = hamiltonian_at(q, cutoff, offset_er, harmonic_er);
  const Eigen::Index dim = t.diag.size();
  QSolution out;
  out.energies = lowest_eigenvalues(t, bands);
  const double scale = 1.0 + t.diag.cwiseAbs().maxCoeff() + 2.0 * std::abs(harmonic_er);
  Eigen::MatrixXd vectors(dim, bands);
  for (int n = 0; n < bands; ++n) {
    const double lambda = out.energies[n];
    const ShiftedTridiagonal lu(t.diag, t.sub, lambda + 1e-13 * scale);
    Eigen::VectorXd x(dim);
    for (Eigen::Index i = 0; i < dim; ++i) x[i] = 1.0 + 0.37 * std::sin(1.0 + 0.61 * i);
    int first = n;
    while (first > 0 && std::abs(out.energies[first - 1] - lambda) < 1e-8 * scale) --first;
    for (int it = 0; it < 4; ++it) {
      lu.solve(x);
      for (int m = first; m < n; ++m) x -= vectors.col(m).dot(x) * vectors.col(m);
      x.normalize();
    }
    vectors.col(n) = x;
  }
  const double phi = std::arg(harmonic_er);
  out.coefficients.resize(dim, bands);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const cplx ph = std::polar(1.0, static_cast<double>(i - cutoff) * phi);
    for (int n = 0; n < bands; ++n) out.coefficients(i, n) = ph * vectors(i, n);
  }
  return out;
}

} // namespace

Eigen::VectorXd tridiagonal_bisection(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub, int count) {
  if (sub.size() + 1 != diag.size() || count < 1 || count > diag.size())
    throw DomainError("tridiagonal_bisection: inconsistent sizes");
  return bisect_lowest(Tridiagonal{diag, sub}, count);
}

double BandStructure::gap(int n) const {
  if (n > 0) return band_min(n) - band_max(n - 1);
  if (bands() > 1) return band_min(1) - band_max(0);
  return std::numeric_limits<double>::infinity();
}

cplx BandStructure::bloch_value(int band, int q_index, double z) const {
  const double k = params.wavenumber();
  const int cutoff = basis.plane_wave_cutoff;
  const auto& c = coefficients[q_index];
  const cplx step = std::polar(1.0, 2.0 * k * z);
  cplx phase = std::polar(1.0, (basis.quasimomenta[q_index] - 2.0 * cutoff) * k * z);
  cplx sum{0.0};
  for (int i = 0; i < c.rows(); ++i) {
    sum += c(i, band) * phase;
    phase *= step;
  }
  return sum;
}

cplx BandStructure::bloch_derivative(int band, int q_index, double z) const {
  const double k = params.wavenumber();
  const int cutoff = basis.plane_wave_cutoff;
  const double q = basis.quasimomenta[q_index];
  const auto& c = coefficients[q_index];
  const cplx step = std::polar(1.0, 2.0 * k * z);
  cplx phase = std::polar(1.0, (q - 2.0 * cutoff) * k * z);
  cplx sum{0.0};
  for (int i = 0; i < c.rows(); ++i) {
    sum += c(i, band) * cplx(0.0, (q + 2.0 * (i - cutoff)) * k) * phase;
    phase *= step;
  }
  return sum;
}

BandStructure diagonalize(const LatticeConfig& cfg, SpinState s, const BlochBasisSpec& basis,
                          const SolveOptions& options) {
  {
    LatticeConfig probe = cfg;
    if (probe.depth_plus == 0.0) probe.depth_plus = 1.0; // free particle allowed
    probe.validate();
  }
  basis.validate();

  BandStructure sol;
  sol.spin = s;
  sol.basis = basis;
  sol.params = cfg.params;
  sol.potential = potential_fourier(s, cfg);
  if (std::abs(sol.potential.harmonic) > 0.0) {
    try {
      sol.well_center = potential_minimum(s, cfg);
    } catch (const DomainError&) {
      sol.well_center = 0.0;
    }
  }

  const double er = cfg.params.recoil_energy();
  const double offset = sol.potential.offset / er;
  const cplx harmonic = sol.potential.harmonic / er;
  const int nq = static_cast<int>(basis.quasimomenta.size());
  sol.energies.resize(basis.band_count, nq);
  sol.coefficients.resize(nq);

  parallel_for(nq, options.workers, [&](std::size_t i) {
    auto qs = solve_at(basis.quasimomenta[i], basis.plane_wave_cutoff, basis.band_count, offset,
                       harmonic);
    sol.energies.col(static_cast<Eigen::Index>(i)) = qs.energies * er;
    sol.coefficients[i] = std::move(qs.coefficients);
  });

  if (options.check_convergence) {
    // Band extrema sit at the zone center and edge; check both with a doubled cutoff.
    for (double q : {0.0, 1.0}) {
      const auto a = lowest_eigenvalues(
          hamiltonian_at(q, basis.plane_wave_cutoff, offset, harmonic), basis.band_count);
      const auto b = lowest_eigenvalues(
          hamiltonian_at(q, 2 * basis.plane_wave_cutoff, offset, harmonic), basis.band_count);
      Eigen::Index worst;
      const double moved = (a - b).cwiseAbs().maxCoeff(&worst);
      if (moved > options.convergence_tol_er) {
        std::ostringstream msg;
        msg << "diagonalize: not converged at cutoff " << basis.plane_wave_cutoff << ": band "
            << worst << " at q=" << q << "k moved by " << moved << " E_R on doubling";
        throw SolverError(msg.str());
      }
    }
  }
  return sol;
}

namespace {

int count_below_barrier(const BandStructure& sol, bool& undecided) {
  const double top = sol.potential.maximum();
  int count = 0;
  while (count < sol.bands() && sol.band_min(count) < top) ++count;
  undecided = count == sol.bands();
  return count;
}

} // namespace

int bound_state_count(const BandStructure& sol) {
  bool undecided = false;
  const int count = count_below_barrier(sol, undecided);
  if (undecided)
    throw SolverError("bound_state_count: all computed bands lie below the barrier; "
                      "increase band_count");
  return count;
}

int bound_state_count(const LatticeConfig& cfg, SpinState s, BlochBasisSpec basis) {
  // In 1D every band takes its extrema at the zone center or edge.
  const auto pot = potential_fourier(s, cfg);
  const double er = cfg.params.recoil_energy();
  const double top = pot.maximum() / er;
  int bands = std::max(basis.band_count, 4);
  for (;;) {
    const int cutoff = std::max(basis.plane_wave_cutoff, bands + 4);
    const Eigen::VectorXd center =
        lowest_eigenvalues(hamiltonian_at(0.0, cutoff, pot.offset / er, pot.harmonic / er), bands);
    const Eigen::VectorXd edge =
        lowest_eigenvalues(hamiltonian_at(1.0, cutoff, pot.offset / er, pot.harmonic / er), bands);
    int count = 0;
    while (count < bands && std::min(center[count], edge[count]) < top) ++count;
    if (count < bands) return count;
    bands *= 2;
  }
}

Eigen::VectorXd RealSpaceGrid::positions() const {
  Eigen::VectorXd z(points);
  for (int i = 0; i < points; ++i) z[i] = position(i);
  return z;
}

RealSpaceGrid RealSpaceGrid::around_site(double lattice_spacing, int site_index,
                                         int sites_each_side, int points_per_site) {
  RealSpaceGrid g;
  g.spacing = lattice_spacing / points_per_site;
  g.origin = (site_index - sites_each_side - 0.5) * lattice_spacing;
  g.points = (2 * sites_each_side + 1) * points_per_site + 1;
  return g;
}

double LocalizedStates::variance(int n) const {
  const Eigen::VectorXd z = grid.positions();
  const Eigen::VectorXd rho = amplitudes.col(n).cwiseAbs2() * grid.spacing;
  const double mean = rho.dot(z);
  return rho.dot((z.array() - mean).square().matrix());
}

LocalizedStates localized_states(const BandStructure& sol, int site_index,
                                 const LocalizeOptions& options) {
  bool all_bound = false;
  const int bound = count_below_barrier(sol, all_bound);
  const int want = options.band_count < 0 ? bound : options.band_count;
  if (want > sol.bands()) throw RangeError("localized_states: more bands requested than solved");
  if (want > bound && !all_bound && !options.force_bloch)
    throw RangeError("localized_states: band " + std::to_string(bound) +
                     " lies above the bound-state count");

  const auto& params = sol.params;
  const double a = params.lattice_spacing();
  const double k = params.wavenumber();

  LocalizedStates out;
  out.spin = sol.spin;
  out.grid = options.grid.value_or(
      RealSpaceGrid::around_site(a, site_index, options.sites_each_side, options.points_per_site));
  out.center = site_index * a + std::remainder(sol.well_center, a);

  const double h_abs = std::abs(sol.potential.harmonic);
  if (h_abs > 0.0) {
    const double omega = std::sqrt(8.0 * k * k * h_abs / params.atom_mass);
    out.harmonic_width = std::sqrt(phys::hbar / (2.0 * params.atom_mass * omega));
  } else {
    out.harmonic_width = 0.25 * a;
  }

  const Eigen::VectorXd z = out.grid.positions();
  const int np = out.grid.points;
  const int dim = sol.basis.dimension();
  const int cutoff = sol.basis.plane_wave_cutoff;
  const int nq = sol.nq();
  const double dz = out.grid.spacing;

  // Bloch states on the grid. psi_q(z + m a) = exp(iqka m) psi_q(z), so the
  // plane-wave sum is evaluated on one period of grid points and replicated.
  const int per_cell = std::max(1, static_cast<int>(std::lround(a / dz)));
  const bool periodic_grid = std::abs(per_cell * dz - a) < 1e-9 * a;
  const int cell_points = periodic_grid ? std::min(per_cell, np) : np;
  Eigen::MatrixXcd plane(cell_points, dim);
  for (int p = 0; p < cell_points; ++p) {
    const cplx step = std::polar(1.0, 2.0 * k * z[p]);
    cplx v = std::polar(1.0, -2.0 * cutoff * k * z[p]);
    for (int j = 0; j < dim; ++j) {
      plane(p, j) = v;
      v *= step;
    }
  }
  std::vector<Eigen::MatrixXcd> bloch(nq);
  int zone_center = 0;
  for (int iq = 0; iq < nq; ++iq) {
    const double q = sol.basis.quasimomenta[iq];
    if (std::abs(q) < std::abs(sol.basis.quasimomenta[zone_center])) zone_center = iq;
    Eigen::MatrixXcd cell = plane * sol.coefficients[iq].leftCols(want);
    for (int p = 0; p < cell_points; ++p) cell.row(p) *= std::polar(1.0, q * k * z[p]);
    auto& psi = bloch[iq];
    psi.resize(np, want);
    for (int p = 0; p < np; ++p) {
      const int m = p / cell_points;
      psi.row(p) = cell.row(p - m * cell_points) * std::polar(1.0, q * k * a * m);
    }
  }

  // Projection trial: the zone-center Bloch state cut to the site's own cell.
  // Its overlap with every Bloch state of a narrow band stays close to the
  // in-cell weight, so the projected gauge is smooth even where the well is
  // far from harmonic.
  const Eigen::ArrayXd in_cell = ((z.array() - out.center).abs() <= 0.5 * a).cast<double>();

  out.amplitudes.resize(np, want);
  out.delocalized.assign(want, false);
  out.energies.resize(want);
  for (int n = 0; n < want; ++n) {
    out.energies[n] = sol.band_center(n);
    const bool extended =
        n >= bound || (sol.bands() > 1 && sol.band_width(n) >= 0.1 * sol.gap(n));
    if (extended) {
      Eigen::VectorXcd psi = bloch[zone_center].col(n);
      psi /= std::sqrt(psi.squaredNorm() * dz);
      Eigen::Index peak;
      psi.cwiseAbs().maxCoeff(&peak);
      psi *= std::conj(psi[peak]) / std::abs(psi[peak]);
      out.amplitudes.col(n) = psi;
      out.delocalized[n] = true;
      continue;
    }
    const Eigen::VectorXcd trial = (bloch[zone_center].col(n).array() * in_cell).matrix();
    Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(np);
    std::vector<cplx> gauge(nq);
    for (int iq = 0; iq < nq; ++iq) {
      const cplx proj = trial.dot(bloch[iq].col(n)) * dz;
      if (std::abs(proj) < 1e-12)
        throw SolverError("localized_states: Bloch state orthogonal to trial function");
      gauge[iq] = std::conj(proj) / std::abs(proj);
      acc += gauge[iq] * bloch[iq].col(n);
    }
    // Deterministic gauge: amplitude (even n) or slope (odd n) at the well
    // center real positive.
    cplx at_center{0.0};
    for (int iq = 0; iq < nq; ++iq)
      at_center += gauge[iq] * (n % 2 == 0 ? sol.bloch_value(n, iq, out.center)
                                           : sol.bloch_derivative(n, iq, out.center));
    if (std::abs(at_center) > 0.0) acc *= std::conj(at_center) / std::abs(at_center);
    acc /= std::sqrt(acc.squaredNorm() * dz);
    out.amplitudes.col(n) = acc;
  }
  return out;
}

TransitionTable transition_table(const BandStructure& s0, const BandStructure& s1, int n0, int n1) {
  if (s0.basis.quasimomenta != s1.basis.quasimomenta)
    throw ContractError("transition_table: band structures on different q-grids");
  if (n0 < 0) n0 = s0.bands();
  if (n1 < 0) n1 = s1.bands();
  if (n0 > s0.bands() || n1 > s1.bands())
    throw RangeError("transition_table: more bands requested than solved");
  TransitionTable table;
  table.reserve(static_cast<std::size_t>(n0) * n1);
  for (int n = 0; n < n0; ++n) {
    for (int np = 0; np < n1; ++np) {
      const Eigen::RowVectorXd diff = s1.energies.row(np) - s0.energies.row(n);
      table.push_back({n, np, joule_to_hz(diff.mean()),
                       joule_to_hz(diff.maxCoeff() - diff.minCoeff())});
    }
  }
  return table;
}

std::vector<LightShiftPoint> light_shift_scan(LatticeConfig cfg, std::span<const double> depths,
                                              std::span<const std::pair<int, int>> pairs, int nq) {
  int bands = 1;
  for (const auto& [n, np] : pairs) bands = std::max({bands, n + 1, np + 1});
  std::vector<LightShiftPoint> out;
  for (double depth : depths) {
    cfg.depth_plus = depth;
    const auto basis = BlochBasisSpec::for_lattice(cfg, nq, bands);
    const auto b0 = diagonalize(cfg, SpinState::S0, basis);
    const auto b1 = diagonalize(cfg, SpinState::S1, basis);
    const auto table = transition_table(b0, b1);
    for (const auto& [n, np] : pairs) out.push_back({depth, table[n * bands + np]});
  }
  return out;
}

} // namespace mwl
