#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mwlattice/cli/output.hpp"

using namespace mwl::cli;

namespace {

int fail(const std::exception& e) {
  std::cerr << error_json(e).dump() << "\n";
  return exit_code(e);
}

json theta_scan(const std::string& spec) {
  std::stringstream ss(spec);
  std::string a, b, n;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, n) )
    throw ConfigError("--theta-scan expects start:stop:steps");
  try {
    return {{"start", std::stod(a)}, {"stop", std::stod(b)}, {"steps", std::stoi(n)}};
  } catch (const std::exception&) {
    throw ConfigError("--theta-scan expects start:stop:steps");
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Microwave spectroscopy of state-dependent optical lattices"};
  std::string subcommand, config_path, preset_name, out_dir, format, scan;
  unsigned workers = 1;
  std::uint64_t seed = 0;
  bool list = false;

  app.add_option("subcommand", subcommand, "bandstructure | transitions | couplings | rabi | spectrum | cool | "
                                           "thermometry | walk | sweep");
  app.add_option("--config", config_path, "JSON config document");
  app.add_option("--preset", preset_name, "built-in preset");
  app.add_option("--out", out_dir, "output directory (overrides output.dir)");
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides seed)");
  app.add_option("--format", format, "table format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--theta-scan", scan, "couplings: start:stop:steps in radians");
  app.add_flag("--list-presets", list, "print preset names and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ConfigError(e.what()));
  }

  try {
    if (list) {
      for (const auto& p : preset_names()) std::cout << p << "\n";
      return 0;
    }
    if (subcommand.empty()) throw ConfigError("missing subcommand");
    if (std::find(subcommands().begin(), subcommands().end(), subcommand) == subcommands().end())
      throw ConfigError("unknown subcommand '" + subcommand + "'");

    json overrides = json::object();
    if (!out_dir.empty()) overrides["output"]["dir"] = out_dir;
    if (!format.empty()) overrides["output"]["format"] = format;
    if (*seed_opt) overrides["seed"] = seed;
    if (!scan.empty()) {
      if (subcommand != "couplings") throw ConfigError("--theta-scan applies to couplings only");
      overrides["couplings"]["theta_scan"] = theta_scan(scan);
    }
    json config = resolve(preset_name, config_path.empty() ? json() : load_document(config_path));
    validate(overrides);
    config.merge_patch(overrides);
    validate(config);

    WriteInfo info;
    info.started = utc_now();
    info.workers = workers;
    info.format = config.at("output").at("format").get<std::string>();
    const auto result = run(subcommand, config, RunContext{workers});
    write_outputs(result, config, config.at("output").at("dir").get<std::string>(), info);
    if (result.invalid()) {
      json err{{"error", {{"kind", "invalid_result"}, {"message", result.flags}, {"exit_code", 4}}}};
      std::cerr << err.dump() << "\n";
      return 4;
    }
    return 0;
  } catch (const std::exception& e) {
    return fail(e);
  }
}
