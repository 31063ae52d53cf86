#include "mwlattice/ensembles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "mwlattice/errors.hpp"
#include "mwlattice/parallel.hpp"

namespace mwl {

double nbar_from_temperature(double temperature, double frequency) {
  if (!(temperature >= 0.0) || !(frequency > 0.0))
    throw DomainError("nbar_from_temperature: need T >= 0 and frequency > 0");
  if (temperature == 0.0) return 0.0;
  return 1.0 / std::expm1(phys::h * frequency / (phys::kB * temperature));
}

double temperature_from_nbar(double nbar, double frequency) {
  if (!(nbar >= 0.0) || !(frequency > 0.0))
    throw DomainError("temperature_from_nbar: need nbar >= 0 and frequency > 0");
  if (nbar == 0.0) return 0.0;
  return phys::h * frequency / (phys::kB * std::log1p(1.0 / nbar));
}

ThermalEnsemble ThermalEnsemble::from_nbar(double nbar, const TrapSpec& trap, double leakage) {
  if (!(nbar >= 0.0) || !std::isfinite(nbar)) throw DomainError("ThermalEnsemble: nbar must be >= 0");
  if (!(leakage > 0.0 && leakage < 1.0)) throw DomainError("ThermalEnsemble: leakage must be in (0, 1)");
  ThermalEnsemble e;
  e.trap = trap;
  e.nbar = nbar;
  e.temperature = temperature_from_nbar(nbar, trap.axial_frequency);
  const double r = nbar / (1.0 + nbar);
  // Tail beyond n_max is r^(n_max + 1).
  e.n_max = r == 0.0 ? 0 : std::max(0, static_cast<int>(std::ceil(std::log(leakage) / std::log(r))) - 1);
  e.populations.resize(e.n_max + 1);
  for (int n = 0; n <= e.n_max; ++n) e.populations[n] = (1.0 - r) * std::pow(r, n);
  e.populations /= e.populations.sum();
  return e;
}

ThermalEnsemble ThermalEnsemble::from_temperature(double temperature, const TrapSpec& trap,
                                                  double leakage) {
  auto e = from_nbar(nbar_from_temperature(temperature, trap.axial_frequency), trap, leakage);
  e.temperature = temperature;
  return e;
}

Eigen::VectorXd ThermalEnsemble::folded(int levels) const {
  if (levels < 1) throw DomainError("ThermalEnsemble::folded: levels must be >= 1");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(levels);
  for (Eigen::Index n = 0; n < populations.size(); ++n) p[std::min<Eigen::Index>(n, levels - 1)] += populations[n];
  return p;
}

SidebandResult sideband_thermometry(double red_area, double blue_area) {
  if (!(blue_area > 0.0)) throw DomainError("sideband_thermometry: blue area must be positive");
  if (!(red_area >= 0.0)) throw DomainError("sideband_thermometry: red area must be >= 0");
  SidebandResult r;
  r.ratio = red_area / blue_area;
  if (r.ratio >= 1.0)
    throw DomainError("sideband_thermometry: red/blue ratio >= 1, not a cooled thermal distribution");
  r.nbar = r.ratio / (1.0 - r.ratio);
  r.ground_population = 1.0 - r.ratio;
  return r;
}

double line_area(std::span<const double> detunings, std::span<const double> signal, double center,
                 double half_width) {
  if (detunings.size() != signal.size()) throw ContractError("line_area: size mismatch");
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < detunings.size(); ++i) {
    const double a = detunings[i], b = detunings[i + 1];
    if (std::abs(a - center) > half_width || std::abs(b - center) > half_width) continue;
    area += 0.5 * (signal[i] + signal[i + 1]) * (b - a);
  }
  return area;
}

SidebandResult sideband_thermometry(std::span<const double> detunings,
                                    std::span<const double> transfer, SpinState initial_spin,
                                    double carrier, double trap_frequency, double half_width) {
  const double red_sign = initial_spin == SpinState::S1 ? 1.0 : -1.0;
  const double red = line_area(detunings, transfer, carrier + red_sign * trap_frequency, half_width);
  const double blue = line_area(detunings, transfer, carrier - red_sign * trap_frequency, half_width);
  return sideband_thermometry(red, blue);
}

BeatResult beat_thermometry(const RabiTrace& trace, const CouplingMatrix& m, double trap_frequency,
                            int levels) {
  if (levels < 1 || levels > std::min(m.rows(), m.cols()))
    throw RangeError("beat_thermometry: levels exceed the coupling matrix");
  const std::size_t nt = trace.times.size();
  if (nt < static_cast<std::size_t>(2 * levels + 2)) throw ExtractionError("beat_thermometry: trace too short");
  const double span = trace.times.back() - trace.times.front();

  BeatResult out;
  out.frequencies.resize(levels);
  for (int n = 0; n < levels; ++n) out.frequencies[n] = m.bare_rabi * m.magnitude(n, n);
  for (int a = 0; a < levels; ++a)
    for (int b = a + 1; b < levels; ++b)
      if (std::abs(out.frequencies[a] - out.frequencies[b]) * span < 1.0)
        throw ExtractionError("beat_thermometry: carrier frequencies of n = " + std::to_string(a) +
                              " and " + std::to_string(b) +
                              " collide within the transform resolution; choose a different displacement");
  const double slowest = out.frequencies.minCoeff();
  if (slowest * span < 5.0)
    throw ExtractionError("beat_thermometry: trace shorter than five periods of the slowest component");

  // Least squares on the known frequencies: P(t) = sum p_n sin^2(pi f_n t).
  Eigen::MatrixXd a(nt, levels);
  Eigen::VectorXd y(nt);
  for (std::size_t i = 0; i < nt; ++i) {
    y[i] = trace.transfer[i];
    for (int n = 0; n < levels; ++n) a(i, n) = std::pow(std::sin(phys::pi * out.frequencies[n] * trace.times[i]), 2);
  }
  Eigen::VectorXd p = a.colPivHouseholderQr().solve(y);
  out.trace_residual = std::sqrt((a * p - y).squaredNorm() / nt);
  p = p.cwiseMax(0.0);
  if (!(p.sum() > 0.0)) throw ExtractionError("beat_thermometry: no positive population recovered");
  out.populations = p / p.sum();

  // Weighted fit of log p_n = c - n x, x = h f / kB T; weights p_n^2 for a
  // uniform absolute amplitude error.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (int n = 0; n < levels; ++n) {
    const double pn = out.populations[n];
    if (pn < 1e-4) continue;
    const double w = pn * pn, ly = std::log(pn);
    sw += w; sx += w * n; sy += w * ly; sxx += w * n * n; sxy += w * n * ly;
    ++used;
  }
  if (used < 2) {
    // Only the ground state is populated.
    out.temperature = 0.0;
    out.nbar = 0.0;
    return out;
  }
  const double slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
  const double icept = (sy - slope * sx) / sw;
  double res = 0.0;
  for (int n = 0; n < levels; ++n) {
    const double pn = out.populations[n];
    if (pn < 1e-4) continue;
    res += pn * pn * std::pow(std::log(pn) - icept - slope * n, 2);
  }
  out.residual = std::sqrt(res / sw);
  if (!(slope < 0.0)) throw ExtractionError("beat_thermometry: populations do not decrease with n");
  const double x = -slope;
  out.temperature = phys::h * trap_frequency / (phys::kB * x);
  out.nbar = 1.0 / std::expm1(x);
  return out;
}

// Inhomogeneous averaging -----------------------------------------------------

void InhomogeneityModel::validate() const {
  if (!(sigma_depth_frac >= 0.0) || !(sigma_field >= 0.0) || !(radial.temperature >= 0.0))
    throw DomainError("InhomogeneityModel: spreads and temperature must be >= 0");
  if (radial.temperature > 0.0 && !(radial.frequency > 0.0 && radial.waist > 0.0))
    throw DomainError("InhomogeneityModel: radial frequency and waist must be positive");
  if (samples < 1) throw DomainError("InhomogeneityModel: samples must be >= 1");
}

namespace {

double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * (i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

// Standard normal quantile: erfc-based Newton iteration from a logistic guess.
double normal_quantile(double u) {
  u = std::clamp(u, 1e-15, 1.0 - 1e-15);
  double x = std::log(u / (1.0 - u)) / 1.702;
  for (int k = 0; k < 50; ++k) {
    const double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * phys::pi);
    const double step = (cdf - u) / pdf;
    x -= std::clamp(step, -1.0, 1.0);
    if (std::abs(step) < 1e-14 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

} // namespace

std::vector<InhomogeneitySample> inhomogeneity_samples(const InhomogeneityModel& model,
                                                       double atom_mass) {
  model.validate();
  if (model.trivial()) return {InhomogeneitySample{}};
  std::mt19937_64 rng(model.seed);
  std::array<double, 4> shift;
  for (auto& s : shift) s = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  constexpr std::array<std::uint64_t, 4> bases{2, 3, 5, 7};

  const double radial_sigma = model.radial.temperature > 0.0
      ? std::sqrt(phys::kB * model.radial.temperature /
                  (atom_mass * std::pow(2.0 * phys::pi * model.radial.frequency, 2)))
      : 0.0;
  std::vector<InhomogeneitySample> out(model.samples);
  for (int i = 0; i < model.samples; ++i) {
    std::array<double, 4> u;
    for (int d = 0; d < 4; ++d) {
      u[d] = radical_inverse(static_cast<std::uint64_t>(i) + 1, bases[d]) + shift[d];
      u[d] -= std::floor(u[d]);
    }
    auto& s = out[i];
    const double x = radial_sigma * normal_quantile(u[2]);
    const double y = radial_sigma * normal_quantile(u[3]);
    s.radius = std::hypot(x, y);
    const double w = model.radial.waist;
    const double radial_factor = radial_sigma > 0.0 ? std::exp(-2.0 * s.radius * s.radius / (w * w)) : 1.0;
    s.depth_factor = (1.0 + model.sigma_depth_frac * normal_quantile(u[0])) * radial_factor;
    s.field_offset = model.sigma_field * normal_quantile(u[1]);
    if (!(s.depth_factor > 0.0))
      throw DomainError("inhomogeneity_samples: depth spread produces a non-positive depth");
  }
  return out;
}

Averaged inhomogeneous_average(const std::function<double(const InhomogeneitySample&)>& observable,
                               const InhomogeneityModel& model, double atom_mass, unsigned workers) {
  const auto samples = inhomogeneity_samples(model, atom_mass);
  std::vector<double> values(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) { values[i] = observable(samples[i]); });
  // Welford accumulation in sample order keeps the result independent of
  // the worker count.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw NumericalError("inhomogeneous_average: observable diverged at sample " + std::to_string(i) +
                           " (depth factor " + std::to_string(samples[i].depth_factor) +
                           ", field offset " + std::to_string(samples[i].field_offset) + " T)");
    const double delta = values[i] - mean;
    mean += delta / (i + 1);
    m2 += delta * (values[i] - mean);
  }
  Averaged a;
  a.samples = static_cast<int>(values.size());
  a.mean = mean;
  a.stddev = values.size() > 1 ? std::sqrt(m2 / (values.size() - 1)) : 0.0;
  a.standard_error = a.stddev / std::sqrt(static_cast<double>(values.size()));
  return a;
}

namespace {

// Band-center line frequencies (rows S0 n, cols S1 n'), Hz.
Eigen::MatrixXd line_centers(const LatticeConfig& cfg, int n0, int n1, int nq) {
  const int bands = std::max(n0, n1);
  const auto basis = BlochBasisSpec::for_lattice(cfg, nq, bands);
  SolveOptions solve;
  solve.check_convergence = false;
  const auto b0 = diagonalize(cfg, SpinState::S0, basis, solve);
  const auto b1 = diagonalize(cfg, SpinState::S1, basis, solve);
  Eigen::MatrixXd c(n0, n1);
  for (int n = 0; n < n0; ++n)
    for (int m = 0; m < n1; ++m) c(n, m) = (b1.band_center(m) - b0.band_center(n)) / phys::h;
  return c;
}

double interpolate(const Eigen::VectorXd& y, double x0, double h, double x) {
  const double s = (x - x0) / h;
  if (s <= 0.0) return y[0];
  const Eigen::Index last = y.size() - 1;
  if (s >= last) return y[last];
  const Eigen::Index i = static_cast<Eigen::Index>(s);
  const double f = s - i;
  return (1.0 - f) * y[i] + f * y[i + 1];
}

} // namespace

std::vector<double> broadened_spectrum(const LatticeConfig& cfg, const MotionalModel& model,
                                       SpinState spin, const Eigen::VectorXd& populations,
                                       const Pulse& pulse, std::span<const double> detunings,
                                       const InhomogeneityModel& inhom,
                                       const BroadenedOptions& options) {
  if (inhom.trivial() || detunings.size() < 2)
    return spectrum_scan(model, spin, populations, pulse, detunings, options.scan);

  const auto& blk = model.blocks.front();
  const int n0 = blk.n0(), n1 = blk.n1();
  const int initial = static_cast<int>(populations.size());
  const auto samples = inhomogeneity_samples(inhom, cfg.params.atom_mass);

  // Per-sample line shifts relative to the nominal configuration.
  const Eigen::MatrixXd nominal = line_centers(cfg, n0, n1, options.nq);
  std::vector<Eigen::MatrixXd> shifts(samples.size());
  parallel_for(samples.size(), options.scan.workers, [&](std::size_t s) {
    const double zeeman = cfg.params.zeeman_slope * samples[s].field_offset;
    if (samples[s].depth_factor == 1.0) {
      shifts[s] = Eigen::MatrixXd::Constant(n0, n1, zeeman);
      return;
    }
    LatticeConfig local = cfg;
    local.depth_plus *= samples[s].depth_factor;
    shifts[s] = (line_centers(local, n0, n1, options.nq) - nominal).array() + zeeman;
  });
  double reach = 0.0;
  for (const auto& s : shifts) reach = std::max(reach, s.cwiseAbs().maxCoeff());

  double spacing = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < detunings.size(); ++i)
    spacing = std::min(spacing, std::abs(detunings[i + 1] - detunings[i]));
  const double h = options.refine * spacing;
  const auto [lo_it, hi_it] = std::minmax_element(detunings.begin(), detunings.end());
  const double lo = *lo_it - reach - 2.0 * h, hi = *hi_it + reach + 2.0 * h;
  const int points = static_cast<int>(std::ceil((hi - lo) / h)) + 1;
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i) grid[i] = lo + i * h;

  const auto comp = spectrum_components(model, spin, initial, pulse, grid, options.scan);
  const int target = static_cast<int>(comp.front().cols());

  std::vector<double> out(detunings.size(), 0.0);
  const double weight = 1.0 / samples.size();
  for (int i = 0; i < initial; ++i) {
    if (populations[i] == 0.0) continue;
    for (int f = 0; f < target; ++f) {
      // Line S0 n -> S1 n' for this (initial, final) pair.
      const int n = spin == SpinState::S0 ? i : f;
      const int m = spin == SpinState::S0 ? f : i;
      const Eigen::VectorXd col = comp[i].col(f);
      for (std::size_t s = 0; s < samples.size(); ++s) {
        const double shift = shifts[s](n, m);
        for (std::size_t d = 0; d < detunings.size(); ++d)
          out[d] += weight * populations[i] * interpolate(col, lo, h, detunings[d] - shift);
      }
    }
  }
  return out;
}

} // namespace mwl
