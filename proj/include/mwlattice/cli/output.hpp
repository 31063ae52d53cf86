#pragma once

#include <string>

#include "mwlattice/cli/runner.hpp"

namespace mwl::cli {

std::string format_number(double x);
std::string to_csv(const Table& table);
json to_json(const Table& table);

std::string sha256_hex(const std::string& bytes);

struct WriteInfo {
  std::string format = "csv";
  std::string started;  ///< ISO 8601 UTC
  std::string finished;
  unsigned workers = 1;
};

/// Writes tables, summary.json, config.json and metadata.json, then the
/// manifest with checksums (atomically, last). Returns the manifest.
json write_outputs(const RunResult& result, const json& config, const std::string& dir,
                   const WriteInfo& info);

std::string utc_now();
const char* code_version();

} // namespace mwl::cli
