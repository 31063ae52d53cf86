#include "mwlattice/cli/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "mwlattice/cooling.hpp"
#include "mwlattice/parallel.hpp"

namespace mwl::cli {

namespace {

double num(const json& c, const char* section, const char* key) { return c.at(section).at(key).get<double>(); }
int integer(const json& c, const char* section, const char* key) { return c.at(section).at(key).get<int>(); }
std::string str(const json& c, const char* section, const char* key) {
  return c.at(section).at(key).get<std::string>();
}

std::vector<double> linspace(double a, double b, int n) {
  if (n < 1) throw ConfigError("grid needs at least one point");
  if (n == 1) return {a};
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = a + (b - a) * i / (n - 1);
  return x;
}

/// Inclusive grid start, start + step, ... <= stop.
std::vector<double> stepped(double start, double stop, double step, const std::string& what) {
  if (!(step > 0.0) || !(stop >= start)) throw ConfigError(what + ": need step > 0 and stop >= start");
  const long count = std::lround(std::floor((stop - start) / step + 1e-9)) + 1;
  if (count > 1000000) throw ConfigError(what + ": grid too large");
  std::vector<double> x(count);
  for (long i = 0; i < count; ++i) x[i] = start + i * step;
  return x;
}

double bare_rabi(const json& c) { return num(c, "drive", "bare_rabi_kHz") * khz; }

/// Pulse from the drive block; a positive area_pi fixes the area against `coupling`.
Pulse make_pulse(const json& c, double coupling = 1.0) {
  const double area = num(c, "drive", "area_pi");
  Pulse p;
  if (area > 0.0) {
    p = Pulse::with_area(area, envelope(c), coupling);
  } else {
    p.envelope = envelope(c);
    p.bare_rabi = bare_rabi(c);
  }
  p.phase = num(c, "drive", "phase_rad");
  p.validate();
  return p;
}

struct Model {
  LatticeConfig cfg;
  std::optional<CouplingSetup> setup;
  MotionalModel motion;
};

Model make_model(const json& c, const std::string& kind, int levels, double bare, unsigned workers) {
  Model m;
  m.cfg = lattice_config(c);
  const double zeeman = zeeman_shift(field_tesla(c), m.cfg.params);
  if (kind == "bloch") {
    const int bands = levels > 0 ? levels : integer(c, "solver", "bands");
    const auto basis = BlochBasisSpec::for_lattice(m.cfg, integer(c, "solver", "nq"), bands);
    SolveOptions so;
    so.workers = workers;
    const auto b0 = diagonalize(m.cfg, SpinState::S0, basis, so);
    const auto b1 = diagonalize(m.cfg, SpinState::S1, basis, so);
    m.motion = bloch_model(b0, b1, bands, bands, zeeman);
  } else {
    auto opts = coupling_options(c);
    opts.workers = workers;
    m.setup = build_coupling(m.cfg, bare, opts);
    const int avail = static_cast<int>(std::min(m.setup->matrix.rows(), m.setup->matrix.cols()));
    const int n = levels > 0 ? levels : avail;
    m.motion = localized_model(*m.setup, n, n, zeeman);
  }
  return m;
}

Eigen::VectorXd initial_populations(const json& c, double trap_frequency, int levels) {
  const double nbar = num(c, "ensemble", "nbar");
  if (nbar < 0.0) throw ConfigError("config key 'ensemble.nbar': must be >= 0");
  if (nbar == 0.0) return Eigen::VectorXd::Ones(1);
  TrapSpec trap;
  trap.axial_frequency = trap_frequency;
  const auto e = ThermalEnsemble::from_nbar(nbar, trap);
  return e.folded(std::min(e.n_max + 1, levels));
}

json lattice_summary(const LatticeConfig& cfg) {
  return {{"theta_rad", cfg.theta},
          {"delta_x_nm", displacement(cfg) / nm},
          {"depth_plus_Er", cfg.depth_plus / cfg.params.recoil_energy()},
          {"recoil_Hz", cfg.params.recoil_frequency()}};
}

// Tables read back from CSV files -------------------------------------------

std::map<std::string, std::vector<double>> read_csv(const std::string& path,
                                                    const std::vector<std::string>& wanted) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read input table '" + path + "'");
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) {
      const auto b = f.find_first_not_of(" \t\r"), e = f.find_last_not_of(" \t\r");
      out.push_back(b == std::string::npos ? "" : f.substr(b, e - b + 1));
    }
    return out;
  };
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("input table '" + path + "' is empty");
  const auto header = split(line);
  std::map<std::string, std::vector<double>> cols;
  std::vector<int> idx;
  for (const auto& w : wanted) {
    auto it = std::find(header.begin(), header.end(), w);
    if (it == header.end()) throw ConfigError("input table '" + path + "' has no column '" + w + "'");
    idx.push_back(static_cast<int>(it - header.begin()));
    cols[w];
  }
  for (int row = 2; std::getline(in, line); ++row) {
    if (line.empty()) continue;
    const auto f = split(line);
    for (std::size_t k = 0; k < wanted.size(); ++k) {
      try {
        cols[wanted[k]].push_back(std::stod(f.at(idx[k])));
      } catch (const std::exception&) {
        throw ConfigError("input table '" + path + "': bad value in row " + std::to_string(row));
      }
    }
  }
  return cols;
}

std::vector<double> column(const Table& t, const std::string& name) {
  auto it = std::find(t.columns.begin(), t.columns.end(), name);
  if (it == t.columns.end()) throw std::logic_error("missing column " + name);
  const auto k = it - t.columns.begin();
  std::vector<double> out;
  for (const auto& r : t.rows) out.push_back(std::get<double>(r[k]));
  return out;
}

// Subcommands -----------------------------------------------------------------

RunResult run_bandstructure(const json& c, const RunContext& ctx) {
  const auto cfg = lattice_config(c);
  const int bands = integer(c, "solver", "bands");
  const auto basis = BlochBasisSpec::for_lattice(cfg, integer(c, "solver", "nq"), bands);
  SolveOptions so;
  so.workers = ctx.workers;
  const double er = cfg.params.recoil_energy();
  RunResult r;
  Table t{"bandstructure", {"q_over_k", "band", "spin", "energy_Er"}, {}};
  for (SpinState s : {SpinState::S0, SpinState::S1}) {
    const auto b = diagonalize(cfg, s, basis, so);
    for (int n = 0; n < b.bands(); ++n)
      for (int q = 0; q < b.nq(); ++q)
        t.rows.push_back({b.basis.quasimomenta[q], static_cast<long long>(n), std::string(to_string(s)),
                          b.energies(n, q) / er});
    json bound;
    try {
      bound = bound_state_count(b);
    } catch (const SolverError&) {
      bound = nullptr; // every computed band is bound
    }
    json& js = r.summary[std::string(to_string(s))];
    js["bound_states"] = bound;
    js["well_center_nm"] = b.well_center / nm;
    if (b.bands() >= 2) js["spacing_0_1_Hz"] = (b.band_center(1) - b.band_center(0)) / phys::h;
    js["band_width_0_Hz"] = b.band_width(0) / phys::h;
  }
  r.summary["lattice"] = lattice_summary(cfg);
  r.tables.push_back(std::move(t));
  return r;
}

RunResult run_transitions(const json& c, const RunContext& ctx) {
  const auto cfg = lattice_config(c);
  const int n0 = integer(c, "transitions", "n0"), n1 = integer(c, "transitions", "n1");
  const auto basis = BlochBasisSpec::for_lattice(cfg, integer(c, "solver", "nq"), std::max(n0, n1));
  SolveOptions so;
  so.workers = ctx.workers;
  const auto b0 = diagonalize(cfg, SpinState::S0, basis, so);
  const auto b1 = diagonalize(cfg, SpinState::S1, basis, so);
  const double zeeman = zeeman_shift(field_tesla(c), cfg.params);
  RunResult r;
  Table t{"transitions", {"n", "nprime", "center_Hz", "width_Hz"}, {}};
  for (const auto& row : transition_table(b0, b1, n0, n1))
    t.rows.push_back({static_cast<long long>(row.n), static_cast<long long>(row.nprime),
                      row.center_frequency + zeeman, row.band_width});
  r.summary["lattice"] = lattice_summary(cfg);
  r.tables.push_back(std::move(t));
  return r;
}

RunResult run_couplings(const json& c, const RunContext& ctx) {
  const json& scan = c.at("couplings").at("theta_scan");
  const int steps = scan.at("steps").get<int>();
  const auto base = lattice_config(c);
  const std::vector<double> thetas = steps > 0
      ? linspace(scan.at("start").get<double>(), scan.at("stop").get<double>(), steps)
      : std::vector<double>{base.theta};
  const int n_max = integer(c, "couplings", "n_max");
  const bool dynamics = c.at("couplings").at("dynamics").get<bool>();
  const double trace_len = num(c, "couplings", "trace_us") * um;
  const double bare = bare_rabi(c);
  auto opts = coupling_options(c);

  std::vector<std::vector<std::vector<Cell>>> rows(thetas.size());
  parallel_for(thetas.size(), ctx.workers, [&](std::size_t i) {
    auto cfg = base;
    cfg.theta = thetas[i];
    cfg.validate();
    const double dx = displacement(cfg);
    const auto setup = build_coupling(cfg, bare, opts);
    const auto& m = setup.matrix;
    const int levels = static_cast<int>(std::min(m.rows(), m.cols()));
    if (n_max >= levels) throw RangeError("couplings: n_max exceeds the retained levels");
    std::optional<MotionalModel> model;
    std::vector<double> times;
    if (dynamics) {
      model = localized_model(setup, levels, levels);
      const double dt = 1.0 / (10.0 * std::max(bare, model->trap_frequency));
      times = linspace(0.0, trace_len, static_cast<int>(std::ceil(trace_len / dt)) + 1);
    }
    for (int n = 0; n <= n_max; ++n) {
      for (int np = 0; np <= n_max; ++np) {
        Cell dyn;
        if (dynamics) {
          Pulse p;
          p.bare_rabi = bare;
          p.envelope = Envelope::rectangular(trace_len);
          try {
            const auto tr = rabi_trace(*model, SpinState::S0, n, np, p, times);
            const auto est = extract_rabi_estimate(tr);
            // Off-resonant wiggles are not a Rabi frequency.
            const double peak = *std::max_element(tr.transfer.begin(), tr.transfer.end());
            if (est.periods >= 2.0 && peak >= 0.5) dyn = est.frequency;
          } catch (const ExtractionError&) {
            // Too slow to resolve within the trace: left empty.
          }
        }
        rows[i].push_back({thetas[i], dx / nm, static_cast<long long>(n), static_cast<long long>(np),
                           m.magnitude(n, np), rabi_frequency(n, np, m), dyn});
      }
    }
  });
  RunResult r;
  Table t{"couplings", {"theta_rad", "delta_x_nm", "n", "nprime", "abs_M", "rabi_Hz", "rabi_dyn_Hz"}, {}};
  for (auto& block : rows)
    for (auto& row : block) t.rows.push_back(std::move(row));
  r.summary["points"] = thetas.size();
  r.summary["bare_rabi_Hz"] = bare;
  r.tables.push_back(std::move(t));
  return r;
}

/// Incoherent mixture of initial levels under one drive frequency.
RabiTrace mixture_trace(const MotionalModel& model, SpinState spin, const Eigen::VectorXd& pops,
                        int n, int nprime, Pulse pulse, std::span<const double> times) {
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
  for (std::size_t k = 0; k < model.blocks.size(); ++k) {
    const auto& b = model.blocks[k];
    for (Eigen::Index level = 0; level < pops.size(); ++level) {
      if (pops[level] == 0.0) continue;
      Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(b.dim());
      psi[b.index(spin, static_cast<int>(level))] = 1.0;
      const auto traj = evolve(psi, b, pulse, offset, times);
      const double w = model.weights[k] * pops[level];
      for (std::size_t i = 0; i < times.size(); ++i) {
        tr.p0[i] += w * traj.states.col(i).head(b.n0()).squaredNorm();
        tr.p1[i] += w * traj.states.col(i).tail(b.n1()).squaredNorm();
      }
    }
  }
  tr.transfer = spin == SpinState::S0 ? tr.p1 : tr.p0;
  return tr;
}

RunResult run_rabi(const json& c, const RunContext& ctx) {
  const double bare = bare_rabi(c);
  const Model m = make_model(c, str(c, "rabi", "model"), integer(c, "solver", "max_levels"), bare, ctx.workers);
  const SpinState spin = spin_from(str(c, "rabi", "initial_spin"));
  const int n = integer(c, "rabi", "n"), np = integer(c, "rabi", "nprime");
  const int n0 = spin == SpinState::S0 ? n : np, n1 = spin == SpinState::S0 ? np : n;
  const double coupling = m.motion.line_coupling(n0, n1);
  Pulse pulse = make_pulse(c, coupling);
  pulse.detuning = num(c, "rabi", "detuning_kHz") * khz;
  const auto times = stepped(0.0, num(c, "rabi", "t_max_us") * um, num(c, "rabi", "dt_us") * um, "rabi time grid");

  const auto pops = initial_populations(c, m.motion.trap_frequency, m.motion.blocks.front().n0());
  RabiTrace tr = num(c, "ensemble", "nbar") > 0.0
      ? mixture_trace(m.motion, spin, pops, n, np, pulse, times)
      : rabi_trace(m.motion, spin, n, np, pulse, times);

  RunResult r;
  Table t{"rabi", {"t_us", "P0", "P1"}, {}};
  for (std::size_t i = 0; i < times.size(); ++i) t.rows.push_back({times[i] / um, tr.p0[i], tr.p1[i]});
  r.tables.push_back(std::move(t));

  json& s = r.summary;
  s["lattice"] = lattice_summary(m.cfg);
  s["trap_frequency_Hz"] = m.motion.trap_frequency;
  s["line"] = {{"n", n0}, {"nprime", n1}, {"center_Hz", m.motion.line_center(n0, n1)}};
  s["bare_rabi_Hz"] = pulse.bare_rabi;
  s["weak_drive_rabi_Hz"] = pulse.bare_rabi * coupling;
  s["unresolved"] = pulse.bare_rabi * coupling >= 0.5 * m.motion.trap_frequency;
  ExtractOptions eo;
  const double fmax = num(c, "rabi", "max_frequency_kHz");
  eo.max_frequency = fmax > 0.0 ? fmax * khz : 0.5 * m.motion.trap_frequency;
  try {
    const auto est = extract_rabi_estimate(tr, eo);
    s["rabi_Hz"] = est.frequency;
    s["periods"] = est.periods;
  } catch (const ExtractionError& e) {
    s["rabi_Hz"] = nullptr;
    s["extraction_error"] = e.what();
  }
  return r;
}

/// Peak position, full width at half maximum and area of a line on a grid segment.
json line_shape(const std::vector<double>& x, const std::vector<double>& y) {
  json out;
  if (x.size() < 3) return out;
  const auto im = std::max_element(y.begin(), y.end()) - y.begin();
  const double half = 0.5 * y[im];
  out["peak_kHz"] = x[im] / khz;
  out["peak_transfer"] = y[im];
  std::ptrdiff_t lo = im, hi = im;
  while (lo > 0 && y[lo] > half) --lo;
  while (hi + 1 < static_cast<std::ptrdiff_t>(y.size()) && y[hi] > half) ++hi;
  if (y[lo] <= half && y[hi] <= half && lo < im && hi > im) {
    const double xl = x[lo] + (half - y[lo]) / (y[lo + 1] - y[lo]) * (x[lo + 1] - x[lo]);
    const double xr = x[hi - 1] + (half - y[hi - 1]) / (y[hi] - y[hi - 1]) * (x[hi] - x[hi - 1]);
    out["fwhm_kHz"] = (xr - xl) / khz;
  } else {
    out["fwhm_kHz"] = nullptr;
  }
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) area += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  out["area_kHz"] = area / khz;
  return out;
}

RunResult run_spectrum(const json& c, const RunContext& ctx) {
  const std::string kind = str(c, "spectrum", "model");
  const int levels = integer(c, "spectrum", "levels");
  const Model m = make_model(c, kind, levels > 0 ? levels : integer(c, "solver", "max_levels"), 0.0, ctx.workers);
  const SpinState spin = spin_from(str(c, "spectrum", "initial_spin"));
  const double carrier = m.motion.line_center(0, 0);
  const auto rel = stepped(num(c, "spectrum", "start_kHz") * khz, num(c, "spectrum", "stop_kHz") * khz,
                           num(c, "spectrum", "step_kHz") * khz, "spectrum detuning grid");
  const auto pops = initial_populations(c, m.motion.trap_frequency,
                                        spin == SpinState::S0 ? m.motion.blocks.front().n0()
                                                              : m.motion.blocks.front().n1());
  const auto inhom = inhomogeneity(c);
  BroadenedOptions bo;
  bo.scan.workers = ctx.workers;
  bo.nq = std::min(bo.nq, integer(c, "solver", "nq"));

  struct Line { int n, nprime; double area, center; };
  std::vector<Line> lines;
  for (const auto& l : c.at("spectrum").at("line_areas")) {
    Line x{l.at("n").get<int>(), l.at("nprime").get<int>(), l.at("area_pi").get<double>(), 0.0};
    x.center = m.motion.line_center(x.n, x.nprime) - carrier;
    lines.push_back(x);
  }

  std::vector<double> transfer(rel.size(), 0.0);
  auto scan = [&](const Pulse& pulse, const std::vector<std::size_t>& idx) {
    std::vector<double> det;
    for (auto i : idx) det.push_back(carrier + rel[i]);
    const auto y = broadened_spectrum(m.cfg, m.motion, spin, pops, pulse, det, inhom, bo);
    for (std::size_t k = 0; k < idx.size(); ++k) transfer[idx[k]] = y[k];
  };
  // Each grid point is driven with the area chosen for its nearest line.
  std::vector<std::vector<std::size_t>> segments(std::max<std::size_t>(lines.size(), 1));
  for (std::size_t i = 0; i < rel.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t l = 1; l < lines.size(); ++l)
      if (std::abs(rel[i] - lines[l].center) < std::abs(rel[i] - lines[best].center)) best = l;
    segments[best].push_back(i);
  }
  if (lines.empty()) {
    scan(make_pulse(c), segments[0]);
  } else {
    for (std::size_t l = 0; l < lines.size(); ++l) {
      if (segments[l].empty()) continue;
      auto p = Pulse::with_area(lines[l].area, envelope(c), m.motion.line_coupling(lines[l].n, lines[l].nprime));
      p.phase = num(c, "drive", "phase_rad");
      scan(p, segments[l]);
    }
  }

  RunResult r;
  Table t{"spectrum", {"detuning_kHz", "transfer"}, {}};
  for (std::size_t i = 0; i < rel.size(); ++i) t.rows.push_back({rel[i] / khz, transfer[i]});
  r.tables.push_back(std::move(t));

  json& s = r.summary;
  s["lattice"] = lattice_summary(m.cfg);
  s["model"] = kind;
  s["carrier_Hz"] = carrier;
  s["trap_frequency_Hz"] = m.motion.trap_frequency;
  s["initial_populations"] = std::vector<double>(pops.data(), pops.data() + pops.size());
  if (!lines.empty()) {
    // Light-shift slope d(center) / d(ln depth) from the band structure.
    std::vector<std::pair<int, int>> pairs;
    for (const auto& l : lines) pairs.emplace_back(l.n, l.nprime);
    const double u = m.cfg.depth_plus;
    const std::vector<double> depths{0.99 * u, 1.01 * u};
    const auto shifts = light_shift_scan(m.cfg, depths, pairs, integer(c, "solver", "nq"));
    for (std::size_t l = 0; l < lines.size(); ++l) {
      std::vector<double> x, y;
      for (auto i : segments[l]) {
        x.push_back(rel[i]);
        y.push_back(transfer[i]);
      }
      json j = line_shape(x, y);
      j["n"] = lines[l].n;
      j["nprime"] = lines[l].nprime;
      j["area_pi"] = lines[l].area;
      j["center_kHz"] = lines[l].center / khz;
      j["coupling"] = m.motion.line_coupling(lines[l].n, lines[l].nprime);
      const double lo = shifts[l].row.center_frequency, hi = shifts[lines.size() + l].row.center_frequency;
      j["light_shift_slope_Hz"] = (hi - lo) / std::log(1.01 / 0.99);
      s["lines"].push_back(j);
    }
  }
  if (kind == "localized") {
    const double trap = m.motion.trap_frequency;
    const double hw = num(c, "thermometry", "half_width_kHz");
    const double half = hw > 0.0 ? hw * khz : trap / 3.0;
    if (rel.front() <= -trap - half && rel.back() >= trap + half) {
      try {
        const auto st = sideband_thermometry(rel, transfer, spin, 0.0, trap, half);
        s["sideband_thermometry"] = {{"ratio", st.ratio}, {"nbar", st.nbar}, {"p0", st.ground_population}};
      } catch (const DomainError& e) {
        s["sideband_thermometry"] = {{"error", e.what()}};
      }
    }
  }
  return r;
}

RunResult run_cool(const json& c, const RunContext& ctx) {
  auto cfg = lattice_config(c);
  cfg.theta = theta_for_displacement(num(c, "cooling", "delta_x_nm") * nm, cfg);
  const double bare = num(c, "cooling", "bare_rabi_kHz") * khz;
  auto opts = coupling_options(c);
  opts.workers = ctx.workers;
  const auto setup = build_coupling(cfg, bare, opts);
  const TrapSpec trap;
  const double eta_cfg = num(c, "cooling", "optical_eta");
  const double eta = eta_cfg >= 0.0 ? eta_cfg : default_optical_eta(trap, cfg.params);
  const int levels = integer(c, "cooling", "levels");
  const double tol = num(c, "cooling", "redistribution_tolerance");
  auto p = cooling_params(setup, levels, bare, num(c, "cooling", "repump_rate_per_s"), eta,
                          num(c, "cooling", "duration_ms") * 1e-3, tol);
  p.samples = integer(c, "cooling", "samples");
  TrapSpec t = trap;
  t.axial_frequency = p.levels0[1] - p.levels0[0];
  const auto init = ThermalEnsemble::from_nbar(num(c, "cooling", "initial_nbar"), t).folded(levels);
  const auto res = cool(init, p);

  RunResult r;
  Table tab{"cool", {"t_ms", "nbar", "p0"}, {}};
  for (std::size_t i = 0; i < res.times.size(); ++i)
    tab.rows.push_back({res.times[i] * 1e3, res.nbar[i], res.ground[i]});
  r.tables.push_back(std::move(tab));

  const auto heating = [&](const Eigen::MatrixXd& q) { return 1.0 - q(0, 0); };
  const auto q_projection = redistribution_matrix(setup.states0, setup.states1, 0.0, levels, tol);
  json& s = r.summary;
  s["lattice"] = lattice_summary(cfg);
  s["final_nbar"] = res.final_nbar;
  s["ground_population"] = res.ground_population;
  s["steady_nbar"] = res.steady_nbar;
  s["steady"] = res.steady;
  s["converged"] = res.converged;
  s["norm_error"] = res.norm_error;
  s["optical_eta"] = eta;
  s["sideband_rabi_Hz"] = p.sideband_rabi(1);
  s["redistribution_heating"] = {{"displaced_wells_only", heating(q_projection)},
                                 {"with_photon_recoil", heating(p.redistribution)}};
  if (!res.converged) r.flags.push_back("cooling did not reach a steady state within 10 durations");
  return r;
}

RunResult run_thermometry(const json& c, const RunContext& ctx) {
  const std::string method = str(c, "thermometry", "method");
  const std::string input = str(c, "thermometry", "input");
  RunResult r;
  json& s = r.summary;
  s["method"] = method;
  if (method == "sideband") {
    std::vector<double> det, tr;
    double trap = 0.0;
    if (input.empty()) {
      const auto spec = run_spectrum(c, ctx);
      det = column(spec.tables.front(), "detuning_kHz");
      tr = column(spec.tables.front(), "transfer");
      trap = spec.summary.at("trap_frequency_Hz").get<double>();
    } else {
      auto cols = read_csv(input, {"detuning_kHz", "transfer"});
      det = cols["detuning_kHz"];
      tr = cols["transfer"];
      trap = make_model(c, "localized", integer(c, "solver", "max_levels"), 0.0, ctx.workers).motion.trap_frequency;
    }
    for (auto& d : det) d *= khz;
    const double hw = num(c, "thermometry", "half_width_kHz");
    const auto st = sideband_thermometry(det, tr, spin_from(str(c, "spectrum", "initial_spin")), 0.0, trap,
                                         hw > 0.0 ? hw * khz : trap / 3.0);
    s["nbar"] = st.nbar;
    s["p0"] = st.ground_population;
    s["T_uK"] = temperature_from_nbar(st.nbar, trap) * 1e6;
    s["residual"] = nullptr;
    s["ratio"] = st.ratio;
    s["trap_frequency_Hz"] = trap;
    return r;
  }

  const double bare = bare_rabi(c);
  RabiTrace trace;
  if (input.empty()) {
    const auto rabi = run_rabi(c, ctx);
    trace.times = column(rabi.tables.front(), "t_us");
    trace.p0 = column(rabi.tables.front(), "P0");
    trace.p1 = column(rabi.tables.front(), "P1");
  } else {
    auto cols = read_csv(input, {"t_us", "P0", "P1"});
    trace.times = cols["t_us"];
    trace.p0 = cols["P0"];
    trace.p1 = cols["P1"];
  }
  for (auto& t : trace.times) t *= um;
  trace.initial_spin = spin_from(str(c, "rabi", "initial_spin"));
  trace.transfer = trace.initial_spin == SpinState::S0 ? trace.p1 : trace.p0;
  const Model m = make_model(c, "localized", integer(c, "solver", "max_levels"), bare, ctx.workers);
  const auto b = beat_thermometry(trace, m.setup->matrix, m.motion.trap_frequency, integer(c, "thermometry", "levels"));
  s["nbar"] = b.nbar;
  s["p0"] = b.populations[0];
  s["T_uK"] = b.temperature * 1e6;
  s["residual"] = b.residual;
  s["trace_residual"] = b.trace_residual;
  s["trap_frequency_Hz"] = m.motion.trap_frequency;
  Table t{"populations", {"n", "frequency_Hz", "population"}, {}};
  for (Eigen::Index n = 0; n < b.populations.size(); ++n)
    t.rows.push_back({static_cast<long long>(n), b.frequencies[n], b.populations[n]});
  r.tables.push_back(std::move(t));
  return r;
}

RunResult run_walk(const json& c, const RunContext&) {
  const auto cfg = lattice_config(c);
  const auto setup = walk_from_lattice(cfg, bare_rabi(c), integer(c, "walk", "sites"), integer(c, "solver", "nq"));
  const double period = 1.0 / setup.single_pair_rabi;
  const double periods = num(c, "walk", "periods");
  const int per = integer(c, "walk", "samples_per_period");
  if (!(periods > 0.0) || per < 4) throw ConfigError("walk: need periods > 0 and samples_per_period >= 4");
  const auto times = linspace(0.0, periods * period, static_cast<int>(std::lround(periods * per)) + 1);
  const auto w = quantum_walk(setup.params, times);

  RunResult r;
  Table t{"walk", {"t_us", "sigma_x_nm", "P0", "norm"}, {}};
  for (std::size_t i = 0; i < times.size(); ++i)
    t.rows.push_back({times[i] / um, w.sigma_x[i] / nm, w.p0[i], w.norm[i]});
  r.tables.push_back(std::move(t));
  Table d{"walk_sites", {"position_nm", "spin", "population"}, {}};
  for (Eigen::Index e = 0; e < w.positions.size(); ++e)
    d.rows.push_back({w.positions[e] / nm, std::string(e % 2 == 0 ? "S0" : "S1"), w.populations(e, w.populations.cols() - 1)});
  r.tables.push_back(std::move(d));

  json& s = r.summary;
  s["lattice"] = lattice_summary(cfg);
  s["single_pair_rabi_Hz"] = setup.single_pair_rabi;
  s["coupling_right"] = std::abs(setup.params.coupling_right);
  s["coupling_left"] = std::abs(setup.params.coupling_left);
  s["tunneling_Hz"] = {setup.params.tunneling0, setup.params.tunneling1};
  s["sites"] = w.sites;
  s["edge_population"] = w.edge_population;
  s["valid"] = w.valid;
  const auto fit = ballistic_fit(w, num(c, "walk", "fit_from_periods") * period);
  s["ballistic_exponent"] = fit.exponent;
  s["velocity_m_per_s"] = fit.velocity;
  const double vp = num(c, "walk", "visibility_periods");
  const double v1 = spin_visibility(w, 0.0, period);
  const double vn = spin_visibility(w, (vp - 1.0) * period, vp * period);
  s["visibility_first_period"] = v1;
  s["visibility_last_period"] = vn;
  s["visibility_ratio"] = v1 > 0.0 ? vn / v1 : 0.0;
  if (!w.valid) r.flags.push_back("walk population reached the chain edges");
  return r;
}

RunResult run_sweep(const json& c, const RunContext& ctx) {
  const std::string inner = str(c, "sweep", "subcommand");
  const std::string path = str(c, "sweep", "parameter");
  (void)at_path(c, path);
  const auto values = linspace(num(c, "sweep", "start"), num(c, "sweep", "stop"), integer(c, "sweep", "steps"));

  struct Point { std::optional<RunResult> result; std::string error; };
  std::vector<Point> points(values.size());
  std::vector<json> configs(values.size(), c);
  for (std::size_t i = 0; i < values.size(); ++i) {
    set_path(configs[i], path, values[i]);
    validate(configs[i]);
  }
  parallel_for(values.size(), ctx.workers, [&](std::size_t i) {
    try {
      points[i].result = run(inner, configs[i], RunContext{1});
    } catch (const std::exception& e) {
      points[i].error = e.what();
    }
  });

  std::vector<std::string> inner_cols;
  for (const auto& p : points)
    if (p.result && !p.result->tables.empty()) {
      inner_cols = p.result->tables.front().columns;
      break;
    }
  RunResult r;
  Table t{"sweep", {path, "status"}, {}};
  t.columns.insert(t.columns.end(), inner_cols.begin(), inner_cols.end());
  t.columns.push_back("error");
  int failed = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& p = points[i];
    json entry{{"value", values[i]}};
    if (!p.result) {
      ++failed;
      std::vector<Cell> row{values[i], std::string("failed")};
      row.resize(t.columns.size() - 1);
      std::string msg = p.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      row.push_back(msg);
      t.rows.push_back(std::move(row));
      entry["status"] = "failed";
      entry["error"] = p.error;
    } else {
      const std::string status = p.result->invalid() ? "invalid" : "ok";
      if (p.result->invalid()) ++failed;
      if (!p.result->tables.empty())
        for (const auto& inner_row : p.result->tables.front().rows) {
          std::vector<Cell> row{values[i], status};
          row.insert(row.end(), inner_row.begin(), inner_row.end());
          row.push_back(std::string());
          t.rows.push_back(std::move(row));
        }
      entry["status"] = status;
      entry["summary"] = p.result->summary;
      if (p.result->invalid()) entry["flags"] = p.result->flags;
    }
    r.summary["points"].push_back(entry);
  }
  r.summary["subcommand"] = inner;
  r.summary["parameter"] = path;
  r.summary["failed"] = failed;
  r.tables.push_back(std::move(t));
  if (failed > 0) r.flags.push_back(std::to_string(failed) + " sweep point(s) failed or invalid");
  return r;
}

} // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"bandstructure", "transitions", "couplings", "rabi", "spectrum",
                                          "cool", "thermometry", "walk", "sweep"};
  return s;
}

RunResult run(const std::string& subcommand, const json& config, const RunContext& context) {
  validate(config);
  RunResult r;
  if (subcommand == "bandstructure") r = run_bandstructure(config, context);
  else if (subcommand == "transitions") r = run_transitions(config, context);
  else if (subcommand == "couplings") r = run_couplings(config, context);
  else if (subcommand == "rabi") r = run_rabi(config, context);
  else if (subcommand == "spectrum") r = run_spectrum(config, context);
  else if (subcommand == "cool") r = run_cool(config, context);
  else if (subcommand == "thermometry") r = run_thermometry(config, context);
  else if (subcommand == "walk") r = run_walk(config, context);
  else if (subcommand == "sweep") r = run_sweep(config, context);
  else throw ConfigError("unknown subcommand '" + subcommand + "'");
  r.subcommand = subcommand;
  return r;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e)) return 2;
  return 3;
}

json error_json(const std::exception& e) {
  std::string kind = "error";
  if (dynamic_cast<const ConfigError*>(&e)) kind = "config";
  else if (dynamic_cast<const DomainError*>(&e)) kind = "domain";
  else if (dynamic_cast<const RangeError*>(&e)) kind = "range";
  else if (dynamic_cast<const ContractError*>(&e)) kind = "contract";
  else if (dynamic_cast<const NumericalError*>(&e)) kind = "numerical";
  return {{"error", {{"kind", kind}, {"message", e.what()}, {"exit_code", exit_code(e)}}}};
}

} // namespace mwl::cli
