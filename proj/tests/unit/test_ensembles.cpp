#include <doctest.h>

#include "mwlattice/ensembles.hpp"

using namespace mwl;

namespace {

std::vector<double> grid(double a, double b, double step) {
  std::vector<double> t;
  for (int i = 0; a + i * step <= b + 1e-9 * step; ++i) t.push_back(a + i * step);
  return t;
}

double gaussian_line(double x, double center, double area, double sigma) {
  return area / (sigma * std::sqrt(2.0 * phys::pi)) * std::exp(-0.5 * std::pow((x - center) / sigma, 2));
}

// Full width at half maximum of a single-peaked sampled curve, with linear
// interpolation of both half-maximum crossings.
double sampled_fwhm(const std::vector<double>& x, const std::vector<double>& y) {
  const auto peak = std::max_element(y.begin(), y.end()) - y.begin();
  const double half = 0.5 * y[peak];
  auto cross = [&](long i, long j) { return x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]); };
  long lo = peak, hi = peak;
  while (lo > 0 && y[lo] > half) --lo;
  while (hi + 1 < static_cast<long>(y.size()) && y[hi] > half) ++hi;
  return cross(hi - 1, hi) - cross(lo, lo + 1);
}

} // namespace

TEST_SUITE("ensembles") {

TEST_CASE("thermal occupation and temperature are inverse") {
  const double f = 113e3;
  for (double t : {1e-6, 6.5e-6, 40e-6}) {
    const double n = nbar_from_temperature(t, f);
    CHECK(n == doctest::Approx(1.0 / std::expm1(phys::h * f / (phys::kB * t))).epsilon(1e-12));
    CHECK(temperature_from_nbar(n, f) == doctest::Approx(t).epsilon(1e-10));
  }
}

TEST_CASE("thermal ensembles are normalized geometric distributions") {
  TrapSpec trap;
  trap.axial_frequency = 113e3;
  for (double nbar : {0.03, 0.8, 4.0}) {
    const auto e = ThermalEnsemble::from_nbar(nbar, trap, 1e-8);
    CHECK(e.populations.sum() == doctest::Approx(1.0).epsilon(1e-14));
    const double r = nbar / (1.0 + nbar);
    // Discarded tail r^(n_max+1) is below the leakage bound.
    CHECK(std::pow(r, e.n_max + 1) < 1e-8);
    CHECK(e.populations[1] / e.populations[0] == doctest::Approx(r).epsilon(1e-12));
    double mean = 0.0;
    for (int n = 0; n <= e.n_max; ++n) mean += n * e.populations[n];
    CHECK(mean == doctest::Approx(nbar).epsilon(1e-5));
    const auto folded = e.folded(3);
    CHECK(folded.size() == 3);
    CHECK(folded.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(folded[2] == doctest::Approx(1.0 - e.populations[0] - e.populations[1]).epsilon(1e-12));
  }
  const auto t = ThermalEnsemble::from_temperature(6.5e-6, trap);
  CHECK(t.nbar == doctest::Approx(nbar_from_temperature(6.5e-6, 113e3)).epsilon(1e-12));
}

TEST_CASE("sideband thermometry round trip on a synthetic spectrum") {
  const double trap = 100e3, nbar = 0.25, blue = 0.04;
  const double ratio = nbar / (1.0 + nbar);
  const auto x = grid(-150e3, 150e3, 250.0);
  for (SpinState spin : {SpinState::S1, SpinState::S0}) {
    const double red_at = spin == SpinState::S1 ? trap : -trap;
    std::vector<double> y;
    for (double d : x)
      y.push_back(gaussian_line(d, 0.0, 0.5, 3e3) + gaussian_line(d, red_at, blue * ratio, 2e3) +
                  gaussian_line(d, -red_at, blue, 2e3));
    const auto r = sideband_thermometry(x, y, spin, 0.0, trap, 20e3);
    CHECK(r.ratio == doctest::Approx(ratio).epsilon(1e-6));
    CHECK(r.nbar == doctest::Approx(nbar).epsilon(1e-6));
    CHECK(r.ground_population == doctest::Approx(1.0 - ratio).epsilon(1e-6));
  }
  const auto direct = sideband_thermometry(0.2, 1.0);
  CHECK(direct.nbar == doctest::Approx(0.25));
}

TEST_CASE("beat thermometry recovers exact populations") {
  CouplingMatrix m;
  m.bare_rabi = 20e3;
  m.elements = Eigen::MatrixXcd::Zero(6, 6);
  const double mags[6] = {0.93, 0.80, 0.68, 0.57, 0.47, 0.38};
  for (int n = 0; n < 6; ++n) m.elements(n, n) = mags[n];
  const double trap = 113e3, temperature = 6.5e-6;
  TrapSpec spec;
  spec.axial_frequency = trap;
  const auto thermal = ThermalEnsemble::from_temperature(temperature, spec);
  const auto p = thermal.folded(6);

  RabiTrace tr;
  tr.times = grid(0.0, 1.5e-3, 0.5e-6);
  for (double t : tr.times) {
    double s = 0.0;
    for (int n = 0; n < 6; ++n) s += p[n] * std::pow(std::sin(phys::pi * m.bare_rabi * mags[n] * t), 2);
    tr.transfer.push_back(s);
  }
  const auto beat = beat_thermometry(tr, m, trap, 6);
  for (int n = 0; n < 4; ++n) CHECK(beat.populations[n] == doctest::Approx(p[n]).epsilon(1e-6).scale(1.0));
  CHECK(beat.trace_residual < 1e-8);
  CHECK(beat.temperature == doctest::Approx(temperature).epsilon(0.02));
  CHECK_THROWS_AS(beat_thermometry(tr, m, trap, 7), RangeError);
}

TEST_CASE("inhomogeneity samples are deterministic per seed") {
  InhomogeneityModel model;
  model.sigma_depth_frac = 0.03;
  model.sigma_field = 5e-5 * gauss;
  model.radial.temperature = 5e-6;
  model.samples = 128;
  model.seed = 11;
  const auto a = inhomogeneity_samples(model, phys::cs_mass);
  const auto b = inhomogeneity_samples(model, phys::cs_mass);
  REQUIRE(a.size() == 128);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].depth_factor == b[i].depth_factor);
    CHECK(a[i].field_offset == b[i].field_offset);
  }
  model.seed = 12;
  CHECK(inhomogeneity_samples(model, phys::cs_mass)[0].depth_factor != a[0].depth_factor);
  model.sigma_depth_frac = model.sigma_field = model.radial.temperature = 0.0;
  CHECK(inhomogeneity_samples(model, phys::cs_mass).size() == 1);
}

TEST_CASE("radial sampling follows the thermal distribution") {
  InhomogeneityModel model;
  model.radial.temperature = 10e-6;
  model.samples = 4096;
  const auto s = inhomogeneity_samples(model, phys::cs_mass);
  double r2 = 0.0;
  for (const auto& x : s) {
    r2 += x.radius * x.radius;
    CHECK(x.depth_factor == doctest::Approx(std::exp(-2.0 * x.radius * x.radius / std::pow(model.radial.waist, 2))));
  }
  const double ref = 2.0 * phys::kB * 10e-6 / (phys::cs_mass * std::pow(2.0 * phys::pi * 1.1e3, 2));
  CHECK(r2 / s.size() == doctest::Approx(ref).epsilon(0.01));
}

TEST_CASE("inhomogeneous averages converge and ignore the worker count") {
  InhomogeneityModel model;
  model.sigma_depth_frac = 0.03;
  model.samples = 128;
  auto obs = [](const InhomogeneitySample& s) { return std::pow(s.depth_factor - 1.0, 2); };
  const auto a = inhomogeneous_average(obs, model, phys::cs_mass, 1);
  const auto c = inhomogeneous_average(obs, model, phys::cs_mass, 3);
  CHECK(a.mean == c.mean);
  CHECK(a.stddev == c.stddev);
  model.samples = 256;
  const auto b = inhomogeneous_average(obs, model, phys::cs_mass, 1);
  CHECK(std::abs(b.mean - a.mean) < 0.5 * b.standard_error);
  CHECK(b.mean == doctest::Approx(9e-4).epsilon(0.05));
}

TEST_CASE("field spread broadens the line at the Zeeman slope") {
  auto cfg = LatticeConfig::with_depth_er(832.6);
  CouplingOptions co;
  co.max_levels = 2;
  const auto setup = build_coupling(cfg, 1e3, co);
  const auto model = localized_model(setup, 2, 2);
  const auto pulse = Pulse::with_area(0.5, Envelope::rectangular(1e-3), model.line_coupling(0, 0));
  Eigen::VectorXd pop = Eigen::VectorXd::Zero(2);
  pop[0] = 1.0;
  InhomogeneityModel inhom;
  inhom.sigma_field = 2e-3 * gauss;
  inhom.samples = 256;
  const double center = model.line_center(0, 0);
  auto x = grid(center - 30e3, center + 30e3, 250.0);
  const auto y = broadened_spectrum(cfg, model, SpinState::S0, pop, pulse, x, inhom);
  const double sigma_f = cfg.params.zeeman_slope * inhom.sigma_field;
  CHECK(sampled_fwhm(x, y) == doctest::Approx(2.0 * std::sqrt(2.0 * std::log(2.0)) * sigma_f).epsilon(0.1));
  // Line area is conserved by the averaging.
  const auto bare = broadened_spectrum(cfg, model, SpinState::S0, pop, pulse, x, InhomogeneityModel{});
  CHECK(line_area(x, y, center, 30e3) == doctest::Approx(line_area(x, bare, center, 30e3)).epsilon(0.03));
}

}
