#include <doctest.h>

#include "mwlattice/coupling.hpp"
#include "../oracles/ho_quadrature.hpp"

using namespace mwl;

namespace {

CouplingSetup deep_setup(double delta_x) {
  auto cfg = LatticeConfig::with_depth_er(832.6);
  if (delta_x > 0.0) cfg.theta = theta_for_displacement(delta_x, cfg);
  CouplingOptions opt;
  return build_coupling(cfg, 60.0 * khz, opt);
}

} // namespace

TEST_SUITE("coupling") {

TEST_CASE("displaced oscillator overlaps agree with direct quadrature") {
  for (double alpha : {0.0, 0.08, 0.35, 1.2, -0.7}) {
    for (int n = 0; n <= 6; ++n) {
      for (int np = 0; np <= 6; ++np) {
        CAPTURE(alpha);
        CAPTURE(n);
        CAPTURE(np);
        CHECK(ho_overlap(n, np, alpha) == doctest::Approx(oracle::displaced_overlap(n, np, alpha)).epsilon(1e-8).scale(1.0));
      }
    }
  }
  CHECK_THROWS_AS(ho_overlap(-1, 0, 0.1), DomainError);
}

TEST_CASE("oscillator overlaps stay finite and unitary at high n") {
  const double alpha = 0.4;
  for (int n : {20, 60}) {
    double sum = 0.0;
    for (int np = 0; np <= 200; ++np) sum += std::pow(ho_overlap(n, np, alpha), 2);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  // Expression-friendly: also works in long double.
  CHECK(double(ho_overlap<long double>(2, 3, 0.3L)) == doctest::Approx(ho_overlap(2, 3, 0.3)).epsilon(1e-12));
}

TEST_CASE("effective Lamb-Dicke parameter") {
  const double f = 113e3;
  const auto ld = effective_lamb_dicke(24e-9, f, phys::cs_mass);
  const double x0 = std::sqrt(phys::hbar / (2.0 * phys::cs_mass * 2.0 * phys::pi * f));
  CHECK(ld.x0 == doctest::Approx(x0).epsilon(1e-12));
  CHECK(ld.eta_eff == doctest::Approx(24e-9 / (2.0 * x0)).epsilon(1e-12));
  CHECK(ld.p0 == doctest::Approx(phys::hbar / (2.0 * x0)).epsilon(1e-12));
  CHECK_THROWS_AS(effective_lamb_dicke(1e-9, -1.0, phys::cs_mass), DomainError);
}

TEST_CASE("undisplaced lattices couple only equal vibrational levels") {
  const auto setup = deep_setup(0.0);
  const auto& m = setup.matrix.elements;
  const int k = 8;
  const Eigen::MatrixXd mag = m.topLeftCorner(k, k).cwiseAbs();
  CHECK((mag - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-6);
  // The shared plane-wave basis gives the same answer at every q.
  const Eigen::MatrixXd bo = bloch_overlap(setup.bands0, setup.bands1, 0, 4, 4).cwiseAbs();
  CHECK((bo - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("displaced couplings conserve probability and follow the oscillator trend") {
  const auto setup = deep_setup(24e-9);
  const auto& m = setup.matrix;
  REQUIRE(m.rows() >= 20);
  for (int n = 0; n < 4; ++n) {
    const double column = m.elements.col(n).squaredNorm();
    CAPTURE(n);
    CHECK(column == doctest::Approx(1.0).epsilon(1e-6));
  }
  // Sideband grows and carrier shrinks with displacement.
  const auto wider = deep_setup(40e-9);
  CHECK(wider.matrix.magnitude(0, 1) > m.magnitude(0, 1));
  CHECK(wider.matrix.magnitude(0, 0) < m.magnitude(0, 0));
  CHECK(m.delta_x == doctest::Approx(24e-9).epsilon(1e-6));
}

TEST_CASE("overlaps approach the oscillator formula as the lattice deepens") {
  // At fixed alpha the anharmonic deviation should fall roughly as 1/sqrt(U).
  const double alpha_target = 0.3;
  std::vector<double> depths{400.0, 832.6, 1600.0}, worst;
  for (double depth_er : depths) {
    auto cfg = LatticeConfig::with_depth_er(depth_er);
    const double f_est = depth_to_frequency(cfg.depth_plus, cfg.params);
    const double dx = 2.0 * alpha_target * effective_lamb_dicke(0.0, f_est, cfg.params.atom_mass).x0;
    cfg.theta = theta_for_displacement(dx, cfg);
    const auto s = build_coupling(cfg, 1.0);
    const double f = 0.5 * joule_to_hz(s.bands0.band_center(1) - s.bands0.band_center(0) +
                                       s.bands1.band_center(1) - s.bands1.band_center(0));
    const double alpha = effective_lamb_dicke(std::abs(displacement(cfg)), f, cfg.params.atom_mass).eta_eff;
    double w = 0.0;
    for (int n = 0; n <= 3; ++n)
      for (int np = 0; np <= 3; ++np) w = std::max(w, std::abs(s.matrix.magnitude(n, np) - std::abs(ho_overlap(n, np, alpha))));
    worst.push_back(w);
  }
  CHECK(worst[1] < worst[0]);
  CHECK(worst[2] < worst[1]);
  for (std::size_t i = 1; i < depths.size(); ++i) {
    CAPTURE(depths[i]);
    CHECK(worst[i] * std::sqrt(depths[i]) == doctest::Approx(worst[0] * std::sqrt(depths[0])).epsilon(0.1));
  }
}

TEST_CASE("weak-drive Rabi frequency scales the bare coupling") {
  const auto setup = deep_setup(24e-9);
  const auto& m = setup.matrix;
  CHECK(rabi_frequency(0, 1, m) == doctest::Approx(60.0 * khz * m.magnitude(0, 1)).epsilon(1e-14));
  CHECK_THROWS_AS(rabi_frequency(0, static_cast<int>(m.rows()), m), RangeError);
  CHECK_THROWS_AS(rabi_frequency(-1, 0, m), RangeError);
}

TEST_CASE("mismatched grids are rejected") {
  const auto setup = deep_setup(24e-9);
  auto moved = setup.states1;
  moved.grid.origin += 1e-9;
  CHECK_THROWS_AS(franck_condon_matrix(setup.states0, moved, 24e-9, 1.0), ContractError);
}

}
