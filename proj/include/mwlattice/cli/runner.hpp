#pragma once

#include <string>
#include <variant>
#include <vector>

#include "mwlattice/cli/config.hpp"

namespace mwl::cli {

using Cell = std::variant<std::monostate, long long, double, std::string>;

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

struct RunResult {
  std::string subcommand;
  std::vector<Table> tables;
  json summary = json::object();
  /// Reasons the result is flagged invalid (exit code 4).
  std::vector<std::string> flags;

  bool invalid() const { return !flags.empty(); }
};

struct RunContext {
  unsigned workers = 1;
};

const std::vector<std::string>& subcommands();

/// Executes one subcommand on a resolved config. Throws ConfigError and the
/// library exceptions; invalid-result conditions are reported in `flags`.
RunResult run(const std::string& subcommand, const json& config, const RunContext& context = {});

/// Exit code and machine-readable description of an exception.
int exit_code(const std::exception& e);
json error_json(const std::exception& e);

} // namespace mwl::cli
