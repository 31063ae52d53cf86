#include "mwlattice/coupling.hpp"

#include <algorithm>
#include <string>

namespace mwl {

LambDicke effective_lamb_dicke(double delta_x, double axial_frequency, double mass) {
  if (!(axial_frequency > 0.0)) throw DomainError("effective_lamb_dicke: frequency must be positive");
  if (!(mass > 0.0)) throw DomainError("effective_lamb_dicke: mass must be positive");
  LambDicke ld;
  ld.x0 = std::sqrt(phys::hbar / (2.0 * mass * 2.0 * phys::pi * axial_frequency));
  ld.p0 = phys::hbar / (2.0 * ld.x0);
  ld.eta_eff = std::abs(delta_x) * ld.p0 / phys::hbar;
  return ld;
}

namespace {

void check_edges(const LocalizedStates& s, double tolerance) {
  const Eigen::Index last = s.amplitudes.rows() - 1;
  for (int n = 0; n < s.bands(); ++n) {
    if (s.delocalized[n]) continue;
    const double peak = s.amplitudes.col(n).cwiseAbs().maxCoeff();
    const double edge = std::max(std::abs(s.amplitudes(0, n)), std::abs(s.amplitudes(last, n)));
    if (edge > tolerance * peak)
      throw ContractError("franck_condon_matrix: state " + std::to_string(n) + " of " +
                          std::string(to_string(s.spin)) +
                          " not contained in the grid (edge amplitude " +
                          std::to_string(edge / peak) + " of peak)");
  }
}

} // namespace

CouplingMatrix franck_condon_matrix(const LocalizedStates& s0, const LocalizedStates& s1,
                                    double delta_x, double bare_rabi, double edge_tolerance) {
  if (!(s0.grid == s1.grid)) throw ContractError("franck_condon_matrix: grids differ");
  check_edges(s0, edge_tolerance);
  check_edges(s1, edge_tolerance);
  CouplingMatrix m;
  m.delta_x = delta_x;
  m.bare_rabi = bare_rabi;
  m.elements = (s1.amplitudes.adjoint() * s0.amplitudes) * s0.grid.spacing;
  return m;
}

double rabi_frequency(int n, int nprime, const CouplingMatrix& m) {
  if (n < 0 || nprime < 0 || n >= m.cols() || nprime >= m.rows())
    throw RangeError("rabi_frequency: level index outside the coupling matrix");
  return m.bare_rabi * m.magnitude(n, nprime);
}

Eigen::MatrixXcd bloch_overlap(const BandStructure& s0, const BandStructure& s1, int q_index,
                               int n0, int n1) {
  if (s0.basis.quasimomenta != s1.basis.quasimomenta ||
      s0.basis.plane_wave_cutoff != s1.basis.plane_wave_cutoff)
    throw ContractError("bloch_overlap: band structures use different bases");
  if (n0 < 0) n0 = s0.bands();
  if (n1 < 0) n1 = s1.bands();
  return s1.coefficients[q_index].leftCols(n1).adjoint() * s0.coefficients[q_index].leftCols(n0);
}

CouplingSetup build_coupling(const LatticeConfig& cfg, double bare_rabi,
                             const CouplingOptions& options) {
  cfg.validate();
  auto probe = BlochBasisSpec::for_lattice(cfg, options.nq, 8);
  const int bound = std::max(bound_state_count(cfg, SpinState::S0, probe),
                             bound_state_count(cfg, SpinState::S1, probe));
  int levels = bound + options.continuum_margin;
  if (options.max_levels > 0) levels = std::min(levels, options.max_levels);
  // One extra band so the gap of the top retained band is defined.
  const auto basis = BlochBasisSpec::for_lattice(cfg, options.nq, levels + 1);

  SolveOptions solve;
  solve.workers = options.workers;
  CouplingSetup out;
  out.bands0 = diagonalize(cfg, SpinState::S0, basis, solve);
  out.bands1 = diagonalize(cfg, SpinState::S1, basis, solve);

  LocalizeOptions loc;
  loc.band_count = levels;
  loc.force_bloch = true;
  // States near the barrier top have long tunneling tails; widen the grid
  // until every localized state is contained.
  for (int sites = options.sites_each_side;; sites *= 2) {
    loc.grid = RealSpaceGrid::around_site(cfg.params.lattice_spacing(), 0, sites,
                                          options.points_per_site);
    out.states0 = localized_states(out.bands0, 0, loc);
    out.states1 = localized_states(out.bands1, 0, loc);
    try {
      out.matrix = franck_condon_matrix(out.states0, out.states1, displacement(cfg), bare_rabi);
      break;
    } catch (const ContractError&) {
      if (sites >= options.max_sites_each_side) throw;
    }
  }
  return out;
}

} // namespace mwl
