#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mwlattice/ensembles.hpp"

namespace mwl::cli {

using nlohmann::json;

/// Invalid configuration document or command line (exit code 2).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Built-in defaults; every accepted key appears here.
const json& default_config();
std::vector<std::string> preset_names();
const json& preset(const std::string& name);

/// Rejects unknown keys and type mismatches against the defaults tree.
void validate(const json& config);

/// defaults <- preset <- file document, validated after every merge.
json resolve(const std::string& preset_name, const json& document);
json load_document(const std::string& path);

/// Dotted path access ("lattice.theta_rad").
const json& at_path(const json& config, const std::string& path);
void set_path(json& config, const std::string& path, double value);

/// Typed views of a resolved config.
LatticeConfig lattice_config(const json& config);
double field_tesla(const json& config);
CouplingOptions coupling_options(const json& config);
Envelope envelope(const json& config);
SpinState spin_from(const std::string& name);
InhomogeneityModel inhomogeneity(const json& config);
std::uint64_t seed(const json& config);

/// Canonical serialization used for hashing and the config echo.
std::string canonical(const json& config);

} // namespace mwl::cli
