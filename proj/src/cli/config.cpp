#include "mwlattice/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>
#include <utility>

namespace mwl::cli {

namespace detail {
// Generated at configure time from presets/*.json.
const std::vector<std::pair<std::string_view, std::string_view>>& embedded_presets();
} // namespace detail

namespace {

json parse_text(std::string_view text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

const std::map<std::string, json>& presets() {
  static const std::map<std::string, json> table = [] {
    std::map<std::string, json> t;
    for (const auto& [name, text] : detail::embedded_presets())
      t.emplace(std::string(name), parse_text(text, "preset " + std::string(name)));
    return t;
  }();
  return table;
}

// Arrays of objects: element schema by path.
const std::map<std::string, json>& item_templates() {
  static const std::map<std::string, json> t{
      {"spectrum.line_areas", json{{"n", 0}, {"nprime", 0}, {"area_pi", 1.0}}},
  };
  return t;
}

const std::map<std::string, std::set<std::string>>& choices() {
  static const std::map<std::string, std::set<std::string>> c{
      {"lattice.sign", {"attractive", "repulsive"}},
      {"drive.envelope", {"rectangular", "gaussian"}},
      {"rabi.model", {"localized", "bloch"}},
      {"rabi.initial_spin", {"s0", "s1"}},
      {"spectrum.model", {"localized", "bloch"}},
      {"spectrum.initial_spin", {"s0", "s1"}},
      {"thermometry.method", {"sideband", "beat"}},
      {"output.format", {"csv", "json"}},
      {"sweep.subcommand",
       {"bandstructure", "transitions", "couplings", "rabi", "spectrum", "cool", "thermometry", "walk"}},
  };
  return c;
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void check(const json& value, const json& schema, const std::string& path) {
  auto fail = [&](const std::string& what) { throw ConfigError("config key '" + path + "': " + what); };
  switch (schema.type()) {
  case json::value_t::object:
    if (!value.is_object()) fail("expected an object");
    for (const auto& [key, v] : value.items()) {
      if (!schema.contains(key)) throw ConfigError("unknown config key '" + join(path, key) + "'");
      check(v, schema.at(key), join(path, key));
    }
    break;
  case json::value_t::array: {
    if (!value.is_array()) fail("expected an array");
    if (auto it = item_templates().find(path); it != item_templates().end()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        const std::string item = path + "[" + std::to_string(i) + "]";
        check(value[i], it->second, item);
        for (const auto& [key, v] : it->second.items())
          if (!value[i].contains(key)) throw ConfigError("config key '" + item + "': missing '" + key + "'");
      }
    } else if (!schema.empty()) {
      if (value.size() != schema.size()) fail("expected " + std::to_string(schema.size()) + " elements");
      for (std::size_t i = 0; i < value.size(); ++i) check(value[i], schema[i], path + "[" + std::to_string(i) + "]");
    }
    break;
  }
  case json::value_t::number_integer:
  case json::value_t::number_unsigned:
    if (!value.is_number_integer()) fail("expected an integer");
    break;
  case json::value_t::number_float:
    if (!value.is_number()) fail("expected a number");
    if (!std::isfinite(value.get<double>())) fail("must be finite");
    break;
  case json::value_t::string:
    if (!value.is_string()) fail("expected a string");
    if (auto it = choices().find(path); it != choices().end() && !it->second.count(value.get<std::string>())) {
      std::string allowed;
      for (const auto& c : it->second) allowed += (allowed.empty() ? "" : ", ") + c;
      fail("'" + value.get<std::string>() + "' is not one of {" + allowed + "}");
    }
    break;
  case json::value_t::boolean:
    if (!value.is_boolean()) fail("expected a boolean");
    break;
  default:
    fail("unsupported schema entry");
  }
}

} // namespace

const json& default_config() {
  static const json d = [] {
    const auto& t = presets();
    auto it = t.find("defaults");
    if (it == t.end()) throw std::logic_error("embedded defaults missing");
    return it->second;
  }();
  return d;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, doc] : presets())
    if (name != "defaults") names.push_back(name);
  return names;
}

const json& preset(const std::string& name) {
  auto it = presets().find(name);
  if (it == presets().end() || name == "defaults") throw ConfigError("unknown preset '" + name + "'");
  return it->second;
}

void validate(const json& config) { check(config, default_config(), ""); }

json resolve(const std::string& preset_name, const json& document) {
  json config = default_config();
  if (!preset_name.empty()) {
    const json& p = preset(preset_name);
    validate(p);
    config.merge_patch(p);
  }
  if (!document.is_null()) {
    validate(document);
    config.merge_patch(document);
  }
  validate(config);
  return config;
}

json load_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

const json& at_path(const json& config, const std::string& path) {
  const json* node = &config;
  std::stringstream ss(path);
  for (std::string key; std::getline(ss, key, '.');) {
    if (!node->is_object() || !node->contains(key)) throw ConfigError("config path '" + path + "' does not exist");
    node = &node->at(key);
  }
  return *node;
}

void set_path(json& config, const std::string& path, double value) {
  const json& schema = at_path(default_config(), path);
  if (!schema.is_number()) throw ConfigError("config path '" + path + "' is not a numeric leaf");
  json* node = &config;
  std::stringstream ss(path);
  for (std::string key; std::getline(ss, key, '.');) node = &(*node)[key];
  if (schema.is_number_integer()) *node = static_cast<long long>(std::llround(value));
  else *node = value;
}

LatticeConfig lattice_config(const json& config) {
  const json& l = config.at("lattice");
  const auto params = PhysicalParams::cesium(l.at("wavelength_nm").get<double>() * nm);
  auto cfg = LatticeConfig::with_depth_er(l.at("depth_plus_Er").get<double>(), params);
  cfg.depth_ratio = l.at("depth_ratio").get<double>();
  for (int s = 0; s < 2; ++s) {
    const json& w = l.at("weights").at(s == 0 ? "s0" : "s1");
    cfg.weights[s] = SigmaWeights{w[0].get<double>(), w[1].get<double>()};
  }
  cfg.sign = l.at("sign").get<std::string>() == "repulsive" ? PotentialSign::Repulsive : PotentialSign::Attractive;
  cfg.theta = l.at("theta_rad").get<double>();
  cfg.validate();
  const double dx = l.at("delta_x_nm").get<double>();
  if (dx >= 0.0) cfg.theta = theta_for_displacement(dx * nm, cfg);
  return cfg;
}

double field_tesla(const json& config) { return config.at("field").at("B_gauss").get<double>() * gauss; }

CouplingOptions coupling_options(const json& config) {
  const json& s = config.at("solver");
  CouplingOptions o;
  o.nq = s.at("nq").get<int>();
  o.sites_each_side = s.at("sites_each_side").get<int>();
  o.max_sites_each_side = std::max(o.max_sites_each_side, o.sites_each_side);
  o.points_per_site = s.at("points_per_site").get<int>();
  o.continuum_margin = s.at("continuum_margin").get<int>();
  o.max_levels = s.at("max_levels").get<int>();
  return o;
}

Envelope envelope(const json& config) {
  const json& d = config.at("drive");
  if (d.at("envelope").get<std::string>() == "gaussian")
    return Envelope::gaussian(d.at("fwhm_us").get<double>() * um, d.at("truncation").get<double>());
  return Envelope::rectangular(d.at("duration_us").get<double>() * um);
}

SpinState spin_from(const std::string& name) { return name == "s0" ? SpinState::S0 : SpinState::S1; }

InhomogeneityModel inhomogeneity(const json& config) {
  const json& i = config.at("inhom");
  InhomogeneityModel m;
  m.sigma_depth_frac = i.at("sigma_U_frac").get<double>();
  m.sigma_field = i.at("sigma_B_gauss").get<double>() * gauss;
  const json& r = i.at("radial");
  m.radial.temperature = r.at("T_uK").get<double>() * 1e-6;
  m.radial.frequency = r.at("omega_kHz").get<double>() * khz;
  m.radial.waist = r.at("waist_um").get<double>() * um;
  m.samples = r.at("samples").get<int>();
  m.seed = seed(config);
  m.validate();
  return m;
}

std::uint64_t seed(const json& config) {
  const json& s = config.at("seed");
  if (s.is_number_unsigned()) return s.get<std::uint64_t>();
  const auto v = s.get<long long>();
  if (v < 0) throw ConfigError("config key 'seed': must be >= 0");
  return static_cast<std::uint64_t>(v);
}

std::string canonical(const json& config) { return config.dump(2) + "\n"; }

} // namespace mwl::cli
