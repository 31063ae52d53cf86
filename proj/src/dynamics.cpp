#include "mwlattice/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "mwlattice/errors.hpp"
#include "mwlattice/parallel.hpp"

namespace mwl {

namespace {
constexpr double two_pi = 2.0 * phys::pi;
// sigma of a gaussian with unit full width at half maximum
const double fwhm_to_sigma = 1.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
} // namespace

double Envelope::length() const {
  return shape == EnvelopeShape::Rectangular ? duration : 2.0 * truncation * fwhm;
}

double Envelope::value(double t) const {
  if (t < 0.0 || t > length()) return 0.0;
  if (shape == EnvelopeShape::Rectangular) return 1.0;
  const double sigma = fwhm * fwhm_to_sigma;
  const double u = (t - 0.5 * length()) / sigma;
  return std::exp(-0.5 * u * u);
}

double Envelope::integral() const {
  if (shape == EnvelopeShape::Rectangular) return duration;
  const double sigma = fwhm * fwhm_to_sigma;
  return sigma * std::sqrt(two_pi) * std::erf(truncation * fwhm / (sigma * std::sqrt(2.0)));
}

double Envelope::max_slope() const {
  if (shape == EnvelopeShape::Rectangular) return 0.0;
  return std::exp(-0.5) / (fwhm * fwhm_to_sigma);
}

Envelope Envelope::rectangular(double duration) {
  if (!(duration > 0.0)) throw DomainError("Envelope: duration must be positive");
  Envelope e;
  e.duration = duration;
  return e;
}

Envelope Envelope::gaussian(double fwhm, double truncation) {
  if (!(fwhm > 0.0)) throw DomainError("Envelope: fwhm must be positive");
  if (!(truncation > 0.0)) throw DomainError("Envelope: truncation must be positive");
  Envelope e;
  e.shape = EnvelopeShape::Gaussian;
  e.fwhm = fwhm;
  e.truncation = truncation;
  return e;
}

void Pulse::validate() const {
  if (!(bare_rabi >= 0.0) || !std::isfinite(bare_rabi))
    throw DomainError("Pulse: bare_rabi must be finite and >= 0");
  if (!std::isfinite(detuning)) throw DomainError("Pulse: detuning must be finite");
  if (!(envelope.length() > 0.0)) throw DomainError("Pulse: envelope must have positive length");
  if (envelope.shape == EnvelopeShape::Gaussian && !(envelope.truncation > 0.0))
    throw DomainError("Pulse: gaussian truncation must be positive");
  if (line_n < 0 || line_nprime < 0) throw DomainError("Pulse: negative line index");
}

Pulse Pulse::with_area(double area_pi, Envelope envelope, double coupling) {
  if (!(coupling > 0.0)) throw DomainError("Pulse::with_area: coupling must be positive");
  Pulse p;
  p.envelope = envelope;
  p.bare_rabi = area_pi / (2.0 * envelope.integral() * coupling);
  p.validate();
  return p;
}

Eigen::MatrixXcd DriveHamiltonian::matrix(double rabi, double drive_offset, double phase) const {
  const int a = n0(), b = n1();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(a + b, a + b);
  h.diagonal().head(a) = levels0.cast<cplx>();
  h.diagonal().tail(b) = (levels1.array() - drive_offset).matrix().cast<cplx>();
  const cplx g = 0.5 * rabi * std::polar(1.0, phase);
  h.bottomLeftCorner(b, a) = g * coupling;
  h.topRightCorner(a, b) = std::conj(g) * coupling.adjoint();
  return h;
}

double MotionalModel::line_center(int n, int nprime) const {
  double c = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (n >= b.n0() || nprime >= b.n1()) throw RangeError("line outside the motional model");
    c += weights[i] * b.line_center(n, nprime);
  }
  return c;
}

double MotionalModel::line_coupling(int n, int nprime) const {
  double s = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (n >= b.n0() || nprime >= b.n1()) throw RangeError("line outside the motional model");
    s += weights[i] * std::norm(b.coupling(nprime, n));
  }
  return std::sqrt(s);
}

double MotionalModel::drive_offset(const Pulse& pulse) const {
  if (pulse.reference == DetuningReference::Hyperfine) return pulse.detuning;
  return line_center(pulse.line_n, pulse.line_nprime) + pulse.detuning;
}

namespace {

double trap_spacing(const DriveHamiltonian& b) {
  if (b.n0() >= 2) return b.levels0[1] - b.levels0[0];
  if (b.n1() >= 2) return b.levels1[1] - b.levels1[0];
  return 0.0;
}

} // namespace

MotionalModel localized_model(const CouplingSetup& setup, int n0, int n1, double zeeman_offset) {
  const auto& m = setup.matrix.elements;
  if (n0 < 1 || n1 < 1 || n0 > m.cols() || n1 > m.rows())
    throw RangeError("localized_model: requested levels exceed the coupling matrix");
  DriveHamiltonian b;
  const double ref = setup.states0.energies[0];
  b.levels0 = (setup.states0.energies.head(n0).array() - ref) / phys::h;
  b.levels1 = (setup.states1.energies.head(n1).array() - ref) / phys::h + zeeman_offset;
  b.coupling = m.topLeftCorner(n1, n0);
  MotionalModel model;
  model.trap_frequency = trap_spacing(b);
  model.blocks.push_back(std::move(b));
  model.weights.push_back(1.0);
  return model;
}

MotionalModel bloch_model(const BandStructure& s0, const BandStructure& s1, int n0, int n1,
                          double zeeman_offset) {
  if (n0 < 1 || n1 < 1 || n0 > s0.bands() || n1 > s1.bands())
    throw RangeError("bloch_model: requested bands exceed the band structure");
  if (s0.nq() != s1.nq()) throw ContractError("bloch_model: quasimomentum grids differ");
  const double ref = s0.band_center(0);
  MotionalModel model;
  for (int q = 0; q < s0.nq(); ++q) {
    DriveHamiltonian b;
    b.levels0 = (s0.energies.col(q).head(n0).array() - ref) / phys::h;
    b.levels1 = (s1.energies.col(q).head(n1).array() - ref) / phys::h + zeeman_offset;
    b.coupling = bloch_overlap(s0, s1, q, n0, n1);
    model.blocks.push_back(std::move(b));
    model.weights.push_back(1.0 / s0.nq());
  }
  DriveHamiltonian centers;
  centers.levels0.resize(n0);
  centers.levels1.resize(n1);
  for (int n = 0; n < n0; ++n) centers.levels0[n] = s0.band_center(n) / phys::h;
  for (int n = 0; n < n1; ++n) centers.levels1[n] = s1.band_center(n) / phys::h;
  model.trap_frequency = trap_spacing(centers);
  return model;
}

namespace {

// Step edges inside [0, T]: a grid uniform in accumulated envelope variation
// (steps of at most `change`), merged with a uniform grid of `uniform_steps`
// and with the requested output times.
std::vector<double> step_edges(const Envelope& env, double change, int uniform_steps,
                               std::span<const double> times) {
  const double total = env.length();
  std::vector<double> edges{0.0, total};
  for (int i = 1; i < uniform_steps; ++i) edges.push_back(total * i / uniform_steps);
  if (env.shape == EnvelopeShape::Gaussian) {
    const double sigma = env.fwhm * fwhm_to_sigma;
    const double center = 0.5 * total;
    const double floor = env.value(0.0);
    for (double v = floor + change; v < 1.0; v += change) {
      const double half = sigma * std::sqrt(-2.0 * std::log(v));
      edges.push_back(center - half);
      edges.push_back(center + half);
    }
    edges.push_back(center);
  }
  for (double t : times)
    if (t > 0.0 && t < total) edges.push_back(t);
  std::sort(edges.begin(), edges.end());
  const double eps = 1e-13 * total;
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [eps](double a, double b) { return std::abs(a - b) <= eps; }),
              edges.end());
  edges.front() = 0.0;
  edges.back() = total;
  return edges;
}

// exp(-2 pi i H dt) on the columns of psi from an eigendecomposition of H.
// Real symmetric Hamiltonians (real couplings, zero phase) use the cheaper
// real solver.
class Stepper {
public:
  explicit Stepper(bool real) : real_(real) {}

  void compute(const Eigen::MatrixXcd& h) {
    if (real_)
      real_solver_.compute(h.real());
    else
      complex_solver_.compute(h);
  }

  void apply(double dt, Eigen::MatrixXcd& psi) const {
    auto rotate = [dt](double x) { return std::polar(1.0, -two_pi * dt * x); };
    if (real_) {
      const auto& v = real_solver_.eigenvectors();
      const Eigen::VectorXcd phase = real_solver_.eigenvalues().unaryExpr(rotate);
      psi = v * (phase.asDiagonal() * (v.transpose() * psi));
    } else {
      const auto& v = complex_solver_.eigenvectors();
      const Eigen::VectorXcd phase = complex_solver_.eigenvalues().unaryExpr(rotate);
      psi = v * (phase.asDiagonal() * (v.adjoint() * psi));
    }
  }

private:
  bool real_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> real_solver_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> complex_solver_;
};

bool is_real(const DriveHamiltonian& h, double phase) {
  if (phase != 0.0) return false;
  if (h.coupling.size() == 0) return true;
  return h.coupling.imag().cwiseAbs().maxCoeff() <= 1e-14 * h.coupling.cwiseAbs().maxCoeff();
}

void apply_diagonal(const Eigen::VectorXd& diag, double dt, Eigen::MatrixXcd& psi) {
  for (Eigen::Index i = 0; i < diag.size(); ++i) psi.row(i) *= std::polar(1.0, -two_pi * diag[i] * dt);
}

struct Propagation {
  std::vector<Eigen::MatrixXcd> states; ///< one per output time
  int steps = 0;
  double change = 0.0;
  int uniform = 0;
};

Propagation propagate(const Eigen::MatrixXcd& initial, const DriveHamiltonian& h, const Pulse& pulse,
                      double drive_offset, std::span<const double> times, double change,
                      int uniform_steps) {
  const double total = pulse.envelope.length();
  const Eigen::VectorXd free_diag = h.matrix(0.0, drive_offset, 0.0).diagonal().real();
  Propagation out;
  out.change = change;
  out.uniform = uniform_steps;
  out.states.reserve(times.size());
  Eigen::MatrixXcd psi = initial;
  double now = 0.0;
  std::size_t next = 0;
  auto emit_until = [&](double limit) {
    while (next < times.size() && times[next] <= limit) {
      if (times[next] == now) {
        out.states.push_back(psi);
      } else {
        // Only reached past the pulse end, where evolution is free.
        Eigen::MatrixXcd tmp = psi;
        apply_diagonal(free_diag, times[next] - now, tmp);
        out.states.push_back(std::move(tmp));
      }
      ++next;
    }
  };
  emit_until(0.0);

  if (pulse.bare_rabi == 0.0) {
    emit_until(std::numeric_limits<double>::infinity());
    return out;
  }

  if (pulse.envelope.shape == EnvelopeShape::Rectangular) {
    Stepper es(is_real(h, pulse.phase));
    es.compute(h.matrix(pulse.bare_rabi, drive_offset, pulse.phase));
    while (next < times.size() && times[next] <= total) {
      Eigen::MatrixXcd tmp = psi;
      es.apply(times[next], tmp);
      out.states.push_back(std::move(tmp));
      ++next;
    }
    es.apply(total, psi);
    now = total;
    out.steps = 1;
  } else {
    const auto edges = step_edges(pulse.envelope, change, uniform_steps, times);
    Stepper es(is_real(h, pulse.phase));
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      const double dt = edges[i + 1] - edges[i];
      const double f = pulse.envelope.value(0.5 * (edges[i] + edges[i + 1]));
      es.compute(h.matrix(pulse.bare_rabi * f, drive_offset, pulse.phase));
      es.apply(dt, psi);
      now = edges[i + 1];
      if (i + 2 < edges.size()) {
        // Interior edges: emit output times that coincide with this edge.
        while (next < times.size() && std::abs(times[next] - now) <= 1e-13 * total) {
          out.states.push_back(psi);
          ++next;
        }
      }
    }
    out.steps = static_cast<int>(edges.size()) - 1;
    now = total;
  }
  while (next < times.size() && times[next] <= total) {
    out.states.push_back(psi);
    ++next;
  }
  emit_until(std::numeric_limits<double>::infinity());
  return out;
}

void check_times(std::span<const double> times) {
  if (times.empty()) throw DomainError("evolve: empty time grid");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || !std::isfinite(times[i]))
      throw DomainError("evolve: times must be finite and >= 0");
    if (i > 0 && times[i] < times[i - 1]) throw DomainError("evolve: times must be sorted");
  }
}

double population_change(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  return (a.cwiseAbs2() - b.cwiseAbs2()).cwiseAbs().maxCoeff();
}

// Propagation with step-halving control on the final populations.
Propagation controlled(const Eigen::MatrixXcd& initial, const DriveHamiltonian& h, const Pulse& pulse,
                       double drive_offset, std::span<const double> times,
                       const EvolveOptions& options, double* error) {
  *error = 0.0;
  double change = options.max_envelope_change;
  // Each step is exact for a frozen envelope, so fast diagonal phases need
  // no resolving; the uniform grid only caps the step in flat regions.
  int uniform = options.steps > 0 ? options.steps : 64;
  auto coarse = propagate(initial, h, pulse, drive_offset, times, change, uniform);
  if (pulse.envelope.shape == EnvelopeShape::Rectangular || pulse.bare_rabi == 0.0 ||
      !options.verify_step)
    return coarse;
  for (int k = 0; k < options.max_doublings; ++k) {
    change *= 0.5;
    uniform *= 2;
    auto fine = propagate(initial, h, pulse, drive_offset, times, change, uniform);
    *error = population_change(coarse.states.back(), fine.states.back());
    if (*error < options.halving_tolerance) return coarse;
    coarse = std::move(fine);
  }
  throw IntegratorError("evolve: step-size underflow, halving still changes populations by " +
                        std::to_string(*error));
}

} // namespace

Trajectory evolve(const Eigen::VectorXcd& initial, const DriveHamiltonian& h, const Pulse& pulse,
                  double drive_offset, std::span<const double> times, const EvolveOptions& options) {
  pulse.validate();
  check_times(times);
  if (initial.size() != h.dim()) throw ContractError("evolve: state dimension mismatch");
  if (std::abs(initial.norm() - 1.0) > 1e-10) throw ContractError("evolve: initial state not normalized");
  Trajectory out;
  auto prop = controlled(initial, h, pulse, drive_offset, times, options, &out.step_error);
  out.times.assign(times.begin(), times.end());
  out.states.resize(h.dim(), static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < times.size(); ++i) out.states.col(i) = prop.states[i].col(0);
  out.steps = prop.steps;
  return out;
}

RabiTrace rabi_trace(const MotionalModel& model, SpinState spin, int n, int nprime, Pulse pulse,
                     std::span<const double> times, const EvolveOptions& options) {
  if (model.blocks.empty()) throw ContractError("rabi_trace: empty model");
  pulse.reference = DetuningReference::Line;
  pulse.line_n = spin == SpinState::S0 ? n : nprime;
  pulse.line_nprime = spin == SpinState::S0 ? nprime : n;
  const double offset = model.drive_offset(pulse);

  RabiTrace tr;
  tr.times.assign(times.begin(), times.end());
  tr.p0.assign(times.size(), 0.0);
  tr.p1.assign(times.size(), 0.0);
  tr.initial_spin = spin;
  tr.initial_level = n;
  tr.pulse = pulse;
  tr.unresolved = pulse.bare_rabi * model.line_coupling(pulse.line_n, pulse.line_nprime) >=
                  0.5 * model.trap_frequency;
  for (std::size_t k = 0; k < model.blocks.size(); ++k) {
    const auto& b = model.blocks[k];
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(b.dim());
    psi[b.index(spin, n)] = 1.0;
    const auto traj = evolve(psi, b, pulse, offset, times, options);
    for (std::size_t i = 0; i < times.size(); ++i) {
      tr.p0[i] += model.weights[k] * traj.states.col(i).head(b.n0()).squaredNorm();
      tr.p1[i] += model.weights[k] * traj.states.col(i).tail(b.n1()).squaredNorm();
    }
  }
  tr.transfer = spin == SpinState::S0 ? tr.p1 : tr.p0;
  return tr;
}

RabiEstimate extract_rabi_estimate(const RabiTrace& trace, const ExtractOptions& options) {
  const auto& t = trace.times;
  const std::size_t n = t.size();
  if (n < 8 || trace.transfer.size() != n) throw ExtractionError("extract_rabi: trace too short");
  const double span = t.back() - t.front();
  if (!(span > 0.0)) throw ExtractionError("extract_rabi: zero-length trace");

  const double mean = std::accumulate(trace.transfer.begin(), trace.transfer.end(), 0.0) / n;
  Eigen::VectorXd x(n);
  double power = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 * (1.0 - std::cos(two_pi * (t[i] - t.front()) / span));
    x[i] = (trace.transfer[i] - mean) * w;
    power += std::pow(trace.transfer[i] - mean, 2);
  }
  if (std::sqrt(power / n) < 1e-9) throw ExtractionError("extract_rabi: no oscillation above noise floor");

  const double nyquist = 0.5 * (n - 1) / span;
  const double f_hi = options.max_frequency > 0.0 ? std::min(options.max_frequency, nyquist) : nyquist;
  const double df = 1.0 / (span * std::max(options.oversample, 1));
  const double f_lo = 1.0 / span;
  if (f_hi <= f_lo + 2.0 * df) throw ExtractionError("extract_rabi: empty frequency window");
  const int bins = static_cast<int>(std::floor((f_hi - f_lo) / df)) + 1;

  auto magnitude = [&](double f) {
    cplx acc{0.0};
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * std::polar(1.0, -two_pi * f * t[i]);
    return std::abs(acc);
  };
  std::vector<double> mag(bins);
  for (int j = 0; j < bins; ++j) mag[j] = magnitude(f_lo + j * df);
  const int peak = static_cast<int>(std::max_element(mag.begin(), mag.end()) - mag.begin());
  double f = f_lo + peak * df, a = mag[peak];
  if (peak > 0 && peak + 1 < bins) {
    const double l = mag[peak - 1], c = mag[peak], r = mag[peak + 1];
    const double denom = l - 2.0 * c + r;
    if (denom < 0.0) {
      const double shift = 0.5 * (l - r) / denom;
      f += shift * df;
      a = c - 0.25 * (l - r) * shift;
    }
  }
  // Hann-window coherent gain: a pure tone of amplitude A gives ~ A n / 4.
  if (a < 1e-6 * std::sqrt(power / n) * n / 4.0)
    throw ExtractionError("extract_rabi: no peak above noise floor");
  return {f, a, f * span};
}

double extract_rabi(const RabiTrace& trace, const ExtractOptions& options) {
  return extract_rabi_estimate(trace, options).frequency;
}

std::vector<Eigen::MatrixXd> spectrum_components(const MotionalModel& model, SpinState spin,
                                                 int initial_levels, const Pulse& pulse,
                                                 std::span<const double> detunings,
                                                 const ScanOptions& options) {
  pulse.validate();
  if (model.blocks.empty()) throw ContractError("spectrum_components: empty model");
  const auto& first = model.blocks.front();
  const int source = spin == SpinState::S0 ? first.n0() : first.n1();
  const int target = spin == SpinState::S0 ? first.n1() : first.n0();
  if (initial_levels < 1 || initial_levels > source)
    throw RangeError("spectrum_components: initial levels exceed the model");
  const std::array<double, 1> end{pulse.envelope.length()};
  const std::size_t nd = detunings.size();

  // Step count from the halving check at the grid center, reused everywhere.
  EvolveOptions fixed = options.evolve;
  if (pulse.envelope.shape == EnvelopeShape::Gaussian && pulse.bare_rabi > 0.0 && nd > 0) {
    const double probe = detunings[nd / 2];
    for (const auto& b : model.blocks) {
      Eigen::MatrixXcd init = Eigen::MatrixXcd::Zero(b.dim(), initial_levels);
      for (int i = 0; i < initial_levels; ++i) init(b.index(spin, i), i) = 1.0;
      double err = 0.0;
      const auto prop = controlled(init, b, pulse, probe, end, options.evolve, &err);
      fixed.steps = std::max(fixed.steps, prop.uniform);
      fixed.max_envelope_change = std::min(fixed.max_envelope_change, prop.change);
    }
    fixed.verify_step = false;
  }

  std::vector<std::vector<Eigen::MatrixXd>> per_point(nd);
  parallel_for(nd, options.workers, [&](std::size_t d) {
    std::vector<Eigen::MatrixXd> acc(initial_levels, Eigen::MatrixXd::Zero(1, target));
    for (std::size_t k = 0; k < model.blocks.size(); ++k) {
      const auto& b = model.blocks[k];
      Eigen::MatrixXcd init = Eigen::MatrixXcd::Zero(b.dim(), initial_levels);
      for (int i = 0; i < initial_levels; ++i) init(b.index(spin, i), i) = 1.0;
      double err = 0.0;
      const auto prop = controlled(init, b, pulse, detunings[d], end, fixed, &err);
      const Eigen::MatrixXcd& fin = prop.states.back();
      const Eigen::Index off = spin == SpinState::S0 ? b.n0() : 0;
      for (int i = 0; i < initial_levels; ++i)
        acc[i] += model.weights[k] * fin.col(i).segment(off, target).cwiseAbs2().transpose();
    }
    per_point[d] = std::move(acc);
  });

  std::vector<Eigen::MatrixXd> out(initial_levels, Eigen::MatrixXd(nd, target));
  for (std::size_t d = 0; d < nd; ++d)
    for (int i = 0; i < initial_levels; ++i) out[i].row(d) = per_point[d][i];
  return out;
}

std::vector<double> spectrum_scan(const MotionalModel& model, SpinState spin,
                                  const Eigen::VectorXd& populations, const Pulse& pulse,
                                  std::span<const double> detunings, const ScanOptions& options) {
  if (populations.size() < 1) throw DomainError("spectrum_scan: empty population vector");
  if ((populations.array() < 0.0).any()) throw DomainError("spectrum_scan: negative population");
  const auto comp = spectrum_components(model, spin, static_cast<int>(populations.size()), pulse,
                                        detunings, options);
  std::vector<double> out(detunings.size(), 0.0);
  for (std::size_t d = 0; d < detunings.size(); ++d)
    for (Eigen::Index i = 0; i < populations.size(); ++i)
      out[d] += populations[i] * comp[i].row(d).sum();
  return out;
}

// Quantum walk ---------------------------------------------------------------

namespace {

WalkResult run_walk(const WalkParams& p, std::span<const double> times) {
  const int cells = p.sites;
  const int dim = 2 * cells;
  const int origin = cells / 2;
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
  const cplx gr = 0.5 * p.bare_rabi * p.coupling_right;
  const cplx gl = 0.5 * p.bare_rabi * p.coupling_left;
  for (int j = 0; j < cells; ++j) {
    const int a = 2 * j, b = 2 * j + 1;
    h(b, b) = -p.detuning;
    h(b, a) = gr;
    h(a, b) = std::conj(gr);
    if (j > 0) {
      h(b - 2, a) = gl;
      h(a, b - 2) = std::conj(gl);
      h(a, a - 2) = h(a - 2, a) = -p.tunneling0;
      h(b, b - 2) = h(b - 2, b) = -p.tunneling1;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  const Eigen::VectorXcd start = es.eigenvectors().row(2 * origin).adjoint();

  WalkResult w;
  w.sites = cells;
  w.times.assign(times.begin(), times.end());
  w.positions.resize(dim);
  for (int i = 0; i < dim; ++i) w.positions[i] = 0.5 * (i - 2 * origin) * p.site_spacing;
  w.populations.resize(dim, static_cast<Eigen::Index>(times.size()));
  const int edge = 2 * std::min(p.edge_cells, cells / 2);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const Eigen::VectorXcd phase = (es.eigenvalues().array() * (-two_pi * times[k]))
                                       .unaryExpr([](double x) { return std::polar(1.0, x); });
    const Eigen::VectorXcd psi = es.eigenvectors() * phase.cwiseProduct(start);
    const Eigen::VectorXd pop = psi.cwiseAbs2();
    w.populations.col(k) = pop;
    const double norm = pop.sum();
    const double mean = pop.dot(w.positions) / norm;
    const double var = pop.dot((w.positions.array() - mean).square().matrix()) / norm;
    w.sigma_x.push_back(std::sqrt(var + p.onsite_variance));
    double p0 = 0.0;
    for (int i = 0; i < dim; i += 2) p0 += pop[i];
    w.p0.push_back(p0);
    w.norm.push_back(norm);
    w.edge_population = std::max(w.edge_population, pop.head(edge).sum() + pop.tail(edge).sum());
  }
  w.valid = w.edge_population < p.edge_tolerance;
  return w;
}

} // namespace

WalkResult quantum_walk(WalkParams params, std::span<const double> times) {
  check_times(times);
  if (params.sites < 64) throw DomainError("quantum_walk: chain needs at least 64 sites");
  if (!(params.site_spacing > 0.0)) throw DomainError("quantum_walk: site spacing must be positive");
  if (!(params.bare_rabi >= 0.0)) throw DomainError("quantum_walk: bare_rabi must be >= 0");
  WalkResult w = run_walk(params, times);
  while (!w.valid && params.auto_enlarge && 2 * params.sites <= params.max_sites) {
    params.sites *= 2;
    w = run_walk(params, times);
  }
  return w;
}

WalkSetup walk_from_lattice(const LatticeConfig& cfg, double bare_rabi, int sites, int nq,
                            int sites_each_side) {
  cfg.validate();
  const double a = cfg.params.lattice_spacing();
  const double dx = displacement(cfg);
  if (std::abs(std::abs(dx) - 0.5 * a) > 1e-6 * a)
    throw DomainError("walk_from_lattice: lattices must be maximally offset (|dx| = a_lat/2)");

  const auto basis = BlochBasisSpec::for_lattice(cfg, nq, 3);
  WalkSetup out;
  out.bands0 = diagonalize(cfg, SpinState::S0, basis);
  out.bands1 = diagonalize(cfg, SpinState::S1, basis);

  LocalizeOptions loc;
  loc.band_count = 1;
  loc.force_bloch = true;
  loc.grid = RealSpaceGrid::around_site(a, 0, sites_each_side, 128);
  const auto s0 = localized_states(out.bands0, 0, loc);
  auto neighbour = [&](double target) {
    // Site 0 of a lattice sits at the well nearest the origin.
    const double c1 = std::remainder(out.bands1.well_center, a);
    return static_cast<int>(std::lround((target - c1) / a));
  };
  const int right = neighbour(s0.center + 0.5 * a);
  const int left = neighbour(s0.center - 0.5 * a);
  const auto r = localized_states(out.bands1, right, loc);
  const auto l = localized_states(out.bands1, left, loc);
  const double dz = loc.grid->spacing;

  auto tunneling = [](const BandStructure& b) {
    double s = 0.0;
    for (int q = 0; q < b.nq(); ++q) s += b.energies(0, q) * std::cos(phys::pi * b.basis.quasimomenta[q]);
    return -s / b.nq() / phys::h;
  };

  WalkParams& p = out.params;
  p.sites = sites;
  p.bare_rabi = bare_rabi;
  p.coupling_right = r.amplitudes.col(0).dot(s0.amplitudes.col(0)) * dz;
  p.coupling_left = l.amplitudes.col(0).dot(s0.amplitudes.col(0)) * dz;
  p.tunneling0 = tunneling(out.bands0);
  p.tunneling1 = tunneling(out.bands1);
  p.site_spacing = a;
  p.onsite_variance = s0.variance(0);
  out.single_pair_rabi = bare_rabi * std::abs(p.coupling_right);
  return out;
}

BallisticFit ballistic_fit(const WalkResult& walk, double t_min) {
  const double s0 = walk.sigma_x.front();
  double sx = 0, sy = 0, sxx = 0, sxy = 0, lt = 0, lx = 0, lxx = 0, lxy = 0;
  int count = 0;
  for (std::size_t i = 0; i < walk.times.size(); ++i) {
    const double t = walk.times[i];
    if (t < t_min || t <= 0.0) continue;
    const double spread = std::sqrt(std::max(walk.sigma_x[i] * walk.sigma_x[i] - s0 * s0, 0.0));
    if (spread <= 0.0) continue;
    sx += t; sy += spread; sxx += t * t; sxy += t * spread;
    const double u = std::log(t), v = std::log(spread);
    lt += u; lx += v; lxx += u * u; lxy += u * v;
    ++count;
  }
  if (count < 3) throw ExtractionError("ballistic_fit: fewer than three points in the fit window");
  BallisticFit fit;
  fit.velocity = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  fit.exponent = (count * lxy - lt * lx) / (count * lxx - lt * lt);
  return fit;
}

double spin_visibility(const WalkResult& walk, double t_from, double t_to) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < walk.times.size(); ++i) {
    if (walk.times[i] < t_from || walk.times[i] > t_to) continue;
    lo = std::min(lo, walk.p0[i]);
    hi = std::max(hi, walk.p0[i]);
  }
  if (hi < lo) throw RangeError("spin_visibility: no samples in the window");
  return hi - lo;
}

} // namespace mwl
