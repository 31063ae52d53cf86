#include "mwlattice/cooling.hpp"

#include <cmath>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "mwlattice/errors.hpp"

namespace mwl {

namespace {

constexpr double mean_u2 = 0.4; // <u^2> of (3/8)(1 + u^2) on [-1, 1]

// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
void gauss_legendre(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) j(i, i - 1) = j(i - 1, i) = i / std::sqrt(4.0 * i * i - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  nodes = es.eigenvalues();
  weights = 2.0 * es.eigenvectors().row(0).transpose().array().square();
}

} // namespace

double default_optical_eta(const TrapSpec& trap, const PhysicalParams& params,
                           double optical_wavelength) {
  const auto ld = effective_lamb_dicke(0.0, trap.axial_frequency, params.atom_mass);
  return 2.0 * phys::pi / optical_wavelength * ld.x0 * std::sqrt(mean_u2);
}

Eigen::MatrixXd redistribution_matrix(const LocalizedStates& s0, const LocalizedStates& s1,
                                      double optical_eta, int levels, double tolerance) {
  if (!(s0.grid == s1.grid)) throw ContractError("redistribution_matrix: grids differ");
  if (!(optical_eta >= 0.0)) throw DomainError("redistribution_matrix: optical_eta must be >= 0");
  const int computed = std::min(s0.bands(), s1.bands());
  if (levels < 1 || levels > computed)
    throw RangeError("redistribution_matrix: levels exceed the computed states");

  Eigen::VectorXd nodes, weights;
  if (optical_eta == 0.0) {
    nodes = Eigen::VectorXd::Zero(1);
    weights = Eigen::VectorXd::Ones(1);
  } else {
    gauss_legendre(24, nodes, weights);
    weights.array() *= 0.375 * (1.0 + nodes.array().square());
  }
  const double k = optical_eta / (s0.harmonic_width * std::sqrt(mean_u2));
  const Eigen::VectorXd z = s0.grid.positions().array() - s0.center;
  const Eigen::MatrixXcd a0 = s0.amplitudes.leftCols(levels);
  const Eigen::MatrixXcd a1 = s1.amplitudes.leftCols(computed);

  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(computed, levels);
  for (Eigen::Index i = 0; i < nodes.size(); ++i) {
    const Eigen::VectorXcd kick = (z * (k * nodes[i])).unaryExpr([](double x) { return std::polar(1.0, x); });
    const Eigen::MatrixXcd overlap = a1.adjoint() * (kick.asDiagonal() * a0) * s0.grid.spacing;
    full += weights[i] * overlap.cwiseAbs2();
  }

  Eigen::MatrixXd q = full.topRows(levels);
  q.row(levels - 1) += full.bottomRows(computed - levels).colwise().sum();
  for (int m = 0; m < levels; ++m) {
    const double defect = 1.0 - q.col(m).sum();
    if (std::abs(defect) > tolerance)
      throw RangeError("redistribution_matrix: normalization defect " + std::to_string(defect) +
                       " for level " + std::to_string(m) + "; raise the computed level count");
    q.col(m) /= q.col(m).sum();
  }
  return q;
}

void CoolingParams::validate() const {
  const int n = levels();
  if (n < 2 || levels1.size() != n) throw DomainError("CoolingParams: need >= 2 levels per spin");
  if (coupling.rows() != n || coupling.cols() != n || redistribution.rows() != n ||
      redistribution.cols() != n)
    throw DomainError("CoolingParams: matrix shapes do not match the level count");
  if (!(bare_rabi >= 0.0) || !(repump_rate > 0.0)) throw DomainError("CoolingParams: rates must be >= 0, repump > 0");
  if (!(duration > 0.0) || samples < 2) throw DomainError("CoolingParams: need duration > 0 and >= 2 samples");
  if ((redistribution.array() < 0.0).any()) throw DomainError("CoolingParams: negative redistribution entry");
  for (int m = 0; m < n; ++m)
    if (std::abs(redistribution.col(m).sum() - 1.0) > 1e-9)
      throw DomainError("CoolingParams: redistribution columns must sum to 1");
}

CoolingParams cooling_params(const CouplingSetup& setup, int levels, double bare_rabi,
                             double repump_rate, double optical_eta, double duration,
                             double redistribution_tolerance) {
  CoolingParams p;
  const double ref = setup.states0.energies[0];
  p.levels0 = (setup.states0.energies.head(levels).array() - ref) / phys::h;
  p.levels1 = (setup.states1.energies.head(levels).array() - ref) / phys::h;
  p.coupling = setup.matrix.elements.topLeftCorner(levels, levels).cwiseAbs();
  p.bare_rabi = bare_rabi;
  p.drive_offset = p.levels1[1] - p.levels0[0];
  p.repump_rate = repump_rate;
  p.redistribution = redistribution_matrix(setup.states0, setup.states1, optical_eta, levels,
                                           redistribution_tolerance);
  p.duration = duration;
  p.validate();
  return p;
}

CoolingParams cooling_params(const CoolingDefaults& d, const TrapSpec& trap) {
  auto cfg = LatticeConfig::with_depth_er(d.depth_er);
  cfg.theta = theta_for_displacement(d.delta_x, cfg);
  const auto setup = build_coupling(cfg, d.bare_rabi);
  const double eta = d.optical_eta >= 0.0 ? d.optical_eta : default_optical_eta(trap, cfg.params);
  return cooling_params(setup, d.levels, d.bare_rabi, d.repump_rate, eta, d.duration,
                        d.redistribution_tolerance);
}

Eigen::MatrixXd rate_matrix(const CoolingParams& p) {
  p.validate();
  const int n = p.levels();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  const double gamma = 0.5 * p.repump_rate;
  for (int m = 0; m < n; ++m) {
    for (int k = 0; k < n; ++k) {
      const double omega = 2.0 * phys::pi * p.bare_rabi * p.coupling(k, m);
      const double delta = 2.0 * phys::pi * (p.drive_offset - (p.levels1[k] - p.levels0[m]));
      const double r = 0.5 * omega * omega * gamma / (gamma * gamma + delta * delta);
      // S0 m <-> S1 k
      g(n + k, m) += r;
      g(m, m) -= r;
      g(m, n + k) += r;
      g(n + k, n + k) -= r;
      // repump S0 m -> S1 k
      const double pump = p.repump_rate * p.redistribution(k, m);
      g(n + k, m) += pump;
      g(m, m) -= pump;
    }
  }
  return g;
}

Eigen::VectorXd after_repump(const Eigen::VectorXd& state, const CoolingParams& p) {
  const int n = p.levels();
  return state.tail(n) + p.redistribution * state.head(n);
}

namespace {

double mean_level(const Eigen::VectorXd& dist) {
  return dist.dot(Eigen::VectorXd::LinSpaced(dist.size(), 0.0, dist.size() - 1.0)) / dist.sum();
}

} // namespace

CoolingResult cool(const Eigen::VectorXd& initial, const CoolingParams& p) {
  p.validate();
  const int n = p.levels();
  if (initial.size() < 1 || (initial.array() < 0.0).any())
    throw DomainError("cool: initial populations must be non-negative");
  if (std::abs(initial.sum() - 1.0) > 1e-9) throw DomainError("cool: initial populations must sum to 1");

  Eigen::VectorXd state = Eigen::VectorXd::Zero(2 * n);
  for (Eigen::Index i = 0; i < initial.size(); ++i) state[n + std::min<Eigen::Index>(i, n - 1)] += initial[i];

  const Eigen::MatrixXd g = rate_matrix(p);
  const double dt = p.duration / (p.samples - 1);
  const Eigen::MatrixXd step = (g * dt).exp();

  CoolingResult r;
  r.populations.resize(2 * n, p.samples);
  auto record = [&](double t, const Eigen::VectorXd& s) {
    r.times.push_back(t);
    const Eigen::VectorXd d = after_repump(s, p);
    r.nbar.push_back(mean_level(d));
    r.ground.push_back(d[0] / d.sum());
    r.norm_error = std::max(r.norm_error, std::abs(s.sum() - 1.0));
  };
  for (int k = 0; k < p.samples; ++k) {
    if (k > 0) state = step * state;
    r.populations.col(k) = state;
    record(k * dt, state);
  }
  if (r.norm_error > 1e-8) throw NumericalError("cool: probability not conserved");
  r.final_nbar = r.nbar.back();
  r.ground_population = r.ground.back();

  auto is_steady = [&](double prev, double now) {
    const double rate_per_ms = std::abs(now - prev) / (dt * 1e3);
    return rate_per_ms < 1e-4 * std::max(now, 1e-12);
  };
  r.steady = is_steady(r.nbar[r.nbar.size() - 2], r.nbar.back());
  r.converged = r.steady;
  // Keep evolving (without recording) up to ten durations to classify
  // convergence.
  double prev = r.nbar.back();
  for (int k = p.samples; !r.converged && k < 10 * (p.samples - 1); ++k) {
    state = step * state;
    const double now = mean_level(after_repump(state, p));
    r.converged = is_steady(prev, now);
    prev = now;
  }

  // Steady state: G p = 0 with one balance equation replaced by sum p = 1.
  Eigen::MatrixXd a = g;
  a.row(0).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * n);
  rhs[0] = 1.0;
  r.steady_state = a.fullPivLu().solve(rhs);
  r.steady_nbar = mean_level(after_repump(r.steady_state, p));
  return r;
}

} // namespace mwl
