#include <doctest.h>

#include <random>

#include "mwlattice/dynamics.hpp"
#include "../oracles/rk4.hpp"
#include "../oracles/tight_binding.hpp"

using namespace mwl;

namespace {

DriveHamiltonian two_level(double coupling = 1.0) {
  DriveHamiltonian h;
  h.levels0 = Eigen::VectorXd::Zero(1);
  h.levels1 = Eigen::VectorXd::Zero(1);
  h.coupling = Eigen::MatrixXcd::Constant(1, 1, coupling);
  return h;
}

MotionalModel single_block(DriveHamiltonian h, double trap = 1e6) {
  MotionalModel m;
  m.blocks = {std::move(h)};
  m.weights = {1.0};
  m.trap_frequency = trap;
  return m;
}

// Three vibrational levels per spin, loosely resembling a displaced well pair.
DriveHamiltonian ladder() {
  DriveHamiltonian h;
  h.levels0 = Eigen::Vector3d(0.0, 20e3, 39e3);
  h.levels1 = Eigen::Vector3d(300.0, 20.4e3, 40e3);
  std::mt19937 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  h.coupling.resize(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) h.coupling(i, j) = cplx(n(rng), n(rng)) * (i == j ? 0.8 : 0.3);
  return h;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = a + (b - a) * i / (n - 1);
  return t;
}

} // namespace

TEST_SUITE("dynamics") {

TEST_CASE("envelope areas match numerical integration") {
  for (const auto& env : {Envelope::rectangular(200e-6), Envelope::gaussian(40e-6), Envelope::gaussian(1e-3, 2.0)}) {
    const int n = 200000;
    const double len = env.length(), dt = len / n;
    double sum = 0.5 * (env.value(0.0) + env.value(len));
    double slope = 0.0;
    for (int i = 1; i < n; ++i) {
      sum += env.value(i * dt);
      slope = std::max(slope, std::abs(env.value((i + 1) * dt) - env.value((i - 1) * dt)) / (2.0 * dt));
    }
    CHECK(sum * dt == doctest::Approx(env.integral()).epsilon(1e-6));
    if (env.shape == EnvelopeShape::Gaussian) CHECK(slope == doctest::Approx(env.max_slope()).epsilon(1e-4));
  }
  CHECK(Envelope::gaussian(40e-6).value(120e-6) == doctest::Approx(1.0));
  CHECK(Envelope::gaussian(40e-6).value(100e-6) == doctest::Approx(0.5));
  CHECK_THROWS_AS(Envelope::rectangular(0.0), DomainError);
}

TEST_CASE("rectangular drive reproduces the two-level Rabi formula") {
  const double rabi = 10e3, delta = 7e3, m = 0.6;
  Pulse p;
  p.bare_rabi = rabi;
  p.envelope = Envelope::rectangular(400e-6);
  const auto t = linspace(0.0, 300e-6, 121);
  const auto traj = evolve(Eigen::Vector2cd(1.0, 0.0), two_level(m), p, delta, t);
  const double w = rabi * m, g = std::hypot(w, delta);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double ref = w * w / (g * g) * std::pow(std::sin(phys::pi * g * t[i]), 2);
    CHECK(std::norm(traj.states(1, i)) == doctest::Approx(ref).epsilon(1e-10).scale(1.0));
  }
}

TEST_CASE("pulse area sets the resonant inversion") {
  for (double coupling : {1.0, 0.27}) {
    const auto env = Envelope::gaussian(40e-6);
    const auto p = Pulse::with_area(1.0, env, coupling);
    CHECK(p.area_pi() * coupling == doctest::Approx(1.0));
    const std::array<double, 1> end{env.length()};
    const auto traj = evolve(Eigen::Vector2cd(1.0, 0.0), two_level(coupling), p, 0.0, end);
    CHECK(std::norm(traj.states(1, 0)) == doctest::Approx(1.0).epsilon(1e-6));
    const auto half = Pulse::with_area(0.5, env, coupling);
    const auto t2 = evolve(Eigen::Vector2cd(1.0, 0.0), two_level(coupling), half, 0.0, end);
    CHECK(std::norm(t2.states(1, 0)) == doctest::Approx(0.5).epsilon(1e-6));
  }
}

TEST_CASE("shaped multilevel evolution agrees with Runge-Kutta") {
  const auto h = ladder();
  Pulse p;
  p.bare_rabi = 15e3;
  p.envelope = Envelope::gaussian(60e-6);
  p.phase = 0.4;
  const double offset = 450.0;
  Eigen::VectorXcd psi0 = Eigen::VectorXcd::Zero(6);
  psi0[1] = 1.0;
  const std::array<double, 1> end{p.envelope.length()};
  const auto traj = evolve(psi0, h, p, offset, end);
  auto hz = [&](double t) { return h.matrix(p.bare_rabi * p.envelope.value(t), offset, p.phase); };
  const Eigen::VectorXcd ref = oracle::rk4_evolve(hz, psi0, 0.0, end[0], 40000);
  const Eigen::VectorXd got = traj.states.col(0).cwiseAbs2(), want = ref.cwiseAbs2();
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(traj.states.col(0).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("free evolution conserves norm and runs backwards") {
  const auto h = ladder();
  Pulse p;
  p.bare_rabi = 8e3;
  p.envelope = Envelope::rectangular(1e-3);
  Eigen::VectorXcd psi0 = Eigen::VectorXcd::Zero(6);
  psi0[0] = std::sqrt(0.3);
  psi0[2] = cplx(0.0, std::sqrt(0.7));
  const auto t = linspace(0.0, 900e-6, 10);
  const auto fwd = evolve(psi0, h, p, 100.0, t);
  for (int i = 0; i < fwd.states.cols(); ++i) CHECK(fwd.states.col(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
  // The rectangular step is exact, so the adjoint undoes it.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h.matrix(p.bare_rabi, 100.0, 0.0));
  const Eigen::VectorXcd phases = (cplx(0.0, -2.0 * phys::pi * t.back()) * es.eigenvalues().cast<cplx>()).array().exp();
  const Eigen::MatrixXcd u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
  CHECK((u.adjoint() * fwd.states.col(t.size() - 1) - psi0).norm() < 1e-10);
}

TEST_CASE("Rabi frequency extraction recovers a synthetic oscillation") {
  RabiTrace tr;
  tr.times = linspace(0.0, 1e-3, 2001);
  const double f = 12.3e3;
  for (double t : tr.times) tr.transfer.push_back(0.5 * (1.0 - std::cos(2.0 * phys::pi * f * t)) * std::exp(-t / 2e-3));
  const auto est = extract_rabi_estimate(tr);
  CHECK(est.frequency == doctest::Approx(f).epsilon(1e-3));
  CHECK(est.periods == doctest::Approx(f * 1e-3).epsilon(1e-3));
  RabiTrace flat;
  flat.times = tr.times;
  flat.transfer.assign(tr.times.size(), 0.25);
  CHECK_THROWS_AS(extract_rabi(flat), ExtractionError);
}

TEST_CASE("rabi_trace on a resonant two-level model") {
  const auto model = single_block(two_level(0.5), 100e3);
  Pulse p;
  p.bare_rabi = 20e3;
  p.envelope = Envelope::rectangular(500e-6);
  const auto t = linspace(0.0, 500e-6, 1001);
  const auto tr = rabi_trace(model, SpinState::S1, 0, 0, p, t);
  CHECK(extract_rabi(tr) == doctest::Approx(10e3).epsilon(1e-3));
  CHECK_FALSE(tr.unresolved);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(tr.p0[i] + tr.p1[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("uniform microwave walk spreads like the Bessel solution") {
  WalkParams w;
  w.sites = 256;
  w.bare_rabi = 2e3;
  w.coupling_right = w.coupling_left = 0.4;
  w.site_spacing = 433e-9;
  const double g = 0.5 * w.bare_rabi * 0.4;
  const auto t = linspace(0.0, 12.0 / g, 61);
  const auto res = quantum_walk(w, t);
  REQUIRE(res.valid);
  CHECK(res.sites == 256);
  for (std::size_t i = 1; i < t.size(); i += 6) {
    const double elements = res.sigma_x[i] / (0.5 * w.site_spacing);
    CAPTURE(t[i]);
    CHECK(elements == doctest::Approx(oracle::bessel_spread(g, t[i])).epsilon(1e-6));
  }
  const auto fit = ballistic_fit(res, 3.0 / g);
  CHECK(fit.exponent == doctest::Approx(1.0).epsilon(0.02));
  CHECK(fit.velocity == doctest::Approx(oracle::ballistic_slope(g) * 0.5 * w.site_spacing).epsilon(0.02));
}

TEST_CASE("walk couplings from a maximally offset lattice are symmetric") {
  auto cfg = LatticeConfig::with_depth_er(26.0);
  cfg.weights = {SigmaWeights{0.0, 1.0}, SigmaWeights{1.0, 0.0}};
  cfg.sign = PotentialSign::Repulsive;
  cfg.theta = phys::pi / 2;
  const auto setup = walk_from_lattice(cfg, 60e3, 64);
  CHECK(std::abs(setup.params.coupling_right) == doctest::Approx(std::abs(setup.params.coupling_left)).epsilon(1e-6));
  CHECK(std::abs(setup.params.coupling_right) > 0.01);
  CHECK(setup.single_pair_rabi == doctest::Approx(60e3 * std::abs(setup.params.coupling_right)));
  CHECK(setup.params.tunneling0 > 0.0);
  CHECK(setup.params.tunneling0 == doctest::Approx(setup.params.tunneling1).epsilon(1e-6));
  cfg.theta = 0.3;
  CHECK_THROWS_AS(walk_from_lattice(cfg, 60e3, 64), DomainError);
}

TEST_CASE("localized and Bloch models agree in a deep lattice") {
  auto cfg = LatticeConfig::with_depth_er(832.6);
  cfg.theta = theta_for_displacement(24e-9, cfg);
  const auto setup = build_coupling(cfg, 60e3);
  const auto loc = localized_model(setup, 3, 3);
  const auto bloch = bloch_model(setup.bands0, setup.bands1, 3, 3);
  CHECK(loc.trap_frequency == doctest::Approx(bloch.trap_frequency).epsilon(1e-9));
  for (int n = 0; n < 3; ++n) {
    for (int np = 0; np < 3; ++np) {
      CHECK(loc.line_center(n, np) == doctest::Approx(bloch.line_center(n, np)).epsilon(1e-9));
      CHECK(loc.line_coupling(n, np) == doctest::Approx(bloch.line_coupling(n, np)).epsilon(1e-4));
    }
  }
}

}
