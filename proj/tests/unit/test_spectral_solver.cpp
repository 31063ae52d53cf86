#include <doctest.h>

#include <random>

#include "mwlattice/errors.hpp"
#include "mwlattice/spectral_solver.hpp"
#include "../oracles/fd_lattice.hpp"

using namespace mwl;

namespace {

LatticeConfig displaced(double depth_er, double theta) {
  auto cfg = LatticeConfig::with_depth_er(depth_er);
  cfg.theta = theta;
  return cfg;
}

} // namespace

TEST_SUITE("spectral_solver") {

TEST_CASE("zone-center and zone-edge bands agree with finite differences") {
  for (double depth_er : {26.0, 832.6}) {
    const auto cfg = displaced(depth_er, 0.4);
    const double er = cfg.params.recoil_energy();
    for (SpinState s : {SpinState::S0, SpinState::S1}) {
      auto basis = BlochBasisSpec::for_lattice(cfg, 2, 4);
      const auto sol = diagonalize(cfg, s, basis);
      auto u = [&](double z) { return state_potential(z, s, cfg); };
      for (int qi = 0; qi < 2; ++qi) {
        const bool edge = std::abs(sol.basis.quasimomenta[qi]) == 1.0;
        const Eigen::VectorXd ref = oracle::fd_bands(u, cfg.params.lattice_spacing(), cfg.params.atom_mass,
                                                     phys::hbar, edge, 400, 4);
        for (int n = 0; n < 4; ++n) {
          CAPTURE(depth_er);
          CAPTURE(n);
          CHECK(std::abs(sol.energies(n, qi) - ref[n]) / er < 1e-4);
        }
      }
    }
  }
}

TEST_CASE("tridiagonal bisection matches a dense eigensolver") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const int n = 60;
  Eigen::VectorXd diag(n), sub(n - 1);
  for (auto& d : diag) d = u(rng);
  for (auto& e : sub) e = u(rng);
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
  dense.diagonal() = diag;
  dense.diagonal(1) = sub;
  dense.diagonal(-1) = sub;
  const Eigen::VectorXd ref = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense).eigenvalues();
  const Eigen::VectorXd got = tridiagonal_bisection(diag, sub, 10);
  REQUIRE(got.size() == 10);
  CHECK((got - ref.head(10)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(tridiagonal_bisection(diag, sub.head(5), 3), DomainError);
}

TEST_CASE("ground band narrows monotonically with depth") {
  double previous = std::numeric_limits<double>::infinity();
  for (double depth_er = 1.0; depth_er <= 30.0; depth_er += 1.0) {
    const auto cfg = displaced(depth_er, 0.0);
    const auto sol = diagonalize(cfg, SpinState::S1, BlochBasisSpec::for_lattice(cfg, 16, 3));
    const double w = sol.band_width(0);
    CAPTURE(depth_er);
    CHECK(w < previous);
    previous = w;
  }
}

TEST_CASE("bound states lie below the barrier and the count is decided") {
  const auto cfg = displaced(832.6, 0.0);
  const auto basis = BlochBasisSpec::for_lattice(cfg, 4, 40);
  const auto sol = diagonalize(cfg, SpinState::S1, basis);
  const int count = bound_state_count(sol);
  CHECK(count > 15);
  CHECK(count < 40);
  CHECK(sol.band_min(count - 1) < sol.potential.maximum());
  CHECK(sol.band_min(count) >= sol.potential.maximum());
  // Too few bands cannot decide the count.
  CHECK_THROWS_AS(bound_state_count(diagonalize(cfg, SpinState::S1, BlochBasisSpec::for_lattice(cfg, 4, 5))),
                  SolverError);
}

TEST_CASE("localized states are orthonormal and centred on the well") {
  const auto cfg = displaced(100.0, 0.6);
  for (SpinState s : {SpinState::S0, SpinState::S1}) {
    const auto sol = diagonalize(cfg, s, BlochBasisSpec::for_lattice(cfg, 16, 4));
    LocalizeOptions opt;
    opt.band_count = 4;
    const auto loc = localized_states(sol, 0, opt);
    const double dz = loc.grid.spacing;
    const Eigen::MatrixXcd gram = loc.amplitudes.adjoint() * loc.amplitudes * dz;
    CHECK((gram - Eigen::MatrixXcd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-6);
    const Eigen::VectorXd z = loc.grid.positions();
    const double mean = (loc.amplitudes.col(0).cwiseAbs2().array() * z.array()).sum() * dz;
    CHECK(std::abs(mean - loc.center) < 1e-3 * cfg.params.lattice_spacing());
    // Ground-state width is close to the harmonic estimate in a deep well.
    CHECK(std::sqrt(loc.variance(0)) == doctest::Approx(loc.harmonic_width).epsilon(0.1));
  }
  const auto sol = diagonalize(cfg, SpinState::S0, BlochBasisSpec::for_lattice(cfg, 16, 4));
  LocalizeOptions opt;
  opt.band_count = 50;
  CHECK_THROWS_AS(localized_states(sol, 0, opt), RangeError);
}

TEST_CASE("near-barrier bands localize without long tails") {
  // Anharmonic upper bands of the shallower S0 lattice at this angle once
  // leaked past every grid size.
  const auto cfg = displaced(832.6, 0.45);
  const auto sol = diagonalize(cfg, SpinState::S0, BlochBasisSpec::for_lattice(cfg, 32, 24));
  LocalizeOptions opt;
  opt.band_count = bound_state_count(sol);
  opt.sites_each_side = 12;
  const auto loc = localized_states(sol, 0, opt);
  const Eigen::Index last = loc.amplitudes.rows() - 1;
  int localized = 0;
  for (int n = 0; n < loc.bands(); ++n) {
    if (loc.delocalized[n]) continue;
    ++localized;
    const double peak = loc.amplitudes.col(n).cwiseAbs().maxCoeff();
    CAPTURE(n);
    CHECK(std::abs(loc.amplitudes(0, n)) < 1e-6 * peak);
    CHECK(std::abs(loc.amplitudes(last, n)) < 1e-6 * peak);
  }
  CHECK(localized >= 17);
}

TEST_CASE("transition table reproduces band differences") {
  const auto cfg = displaced(832.6, 0.3);
  const auto b0 = diagonalize(cfg, SpinState::S0, BlochBasisSpec::for_lattice(cfg, 8, 3));
  const auto b1 = diagonalize(cfg, SpinState::S1, BlochBasisSpec::for_lattice(cfg, 8, 3));
  const auto table = transition_table(b0, b1, 3, 3);
  REQUIRE(table.size() == 9);
  for (const auto& row : table) {
    const double ref = joule_to_hz(b1.band_center(row.nprime) - b0.band_center(row.n));
    CHECK(row.center_frequency == doctest::Approx(ref).epsilon(1e-9));
    CHECK(row.band_width >= 0.0);
  }
  // Sidebands sit one trap quantum from the carrier in a deep lattice.
  const double trap = joule_to_hz(b1.band_center(1) - b1.band_center(0));
  CHECK(trap == doctest::Approx(113e3).epsilon(0.02));
}

}
