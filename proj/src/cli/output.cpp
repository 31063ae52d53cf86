#include "mwlattice/cli/output.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <openssl/evp.h>

#ifndef MWL_VERSION
#define MWL_VERSION "unknown"
#endif

namespace fs = std::filesystem;

namespace mwl::cli {

const char* code_version() { return MWL_VERSION; }

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

namespace {

std::string cell_text(const Cell& c) {
  struct {
    std::string operator()(std::monostate) const { return ""; }
    std::string operator()(long long v) const { return std::to_string(v); }
    std::string operator()(double v) const { return format_number(v); }
    std::string operator()(const std::string& v) const { return v; }
  } visit;
  return std::visit(visit, c);
}

json cell_json(const Cell& c) {
  struct {
    json operator()(std::monostate) const { return nullptr; }
    json operator()(long long v) const { return v; }
    json operator()(double v) const { return v; }
    json operator()(const std::string& v) const { return v; }
  } visit;
  return std::visit(visit, c);
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

} // namespace

std::string to_csv(const Table& table) {
  std::string s;
  for (std::size_t i = 0; i < table.columns.size(); ++i) s += (i ? "," : "") + table.columns[i];
  s += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + cell_text(row[i]);
    s += '\n';
  }
  return s;
}

json to_json(const Table& table) {
  json rows = json::array();
  for (const auto& row : table.rows) {
    json r = json::array();
    for (const auto& c : row) r.push_back(cell_json(c));
    rows.push_back(std::move(r));
  }
  return {{"columns", table.columns}, {"rows", std::move(rows)}};
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json write_outputs(const RunResult& result, const json& config, const std::string& dir,
                   const WriteInfo& info) {
  const fs::path root(dir);
  fs::create_directories(root);
  const std::string config_text = canonical(config);
  const std::string config_hash = sha256_hex(config_text);

  std::vector<std::pair<std::string, std::string>> files;
  json table_list = json::array();
  for (const auto& t : result.tables) {
    const bool csv = info.format == "csv";
    const std::string name = t.name + (csv ? ".csv" : ".json");
    files.emplace_back(name, csv ? to_csv(t) : to_json(t).dump(2) + "\n");
    table_list.push_back({{"file", name}, {"columns", t.columns}, {"rows", t.rows.size()}});
  }
  const json summary{{"subcommand", result.subcommand},
                     {"status", result.invalid() ? "invalid" : "ok"},
                     {"flags", result.flags},
                     {"summary", result.summary}};
  files.emplace_back("summary.json", summary.dump(2) + "\n");
  files.emplace_back("config.json", config_text);
  const json meta{{"subcommand", result.subcommand},
                  {"code_version", code_version()},
                  {"config_hash", config_hash},
                  {"tables", table_list},
                  {"config", config}};
  files.emplace_back("metadata.json", meta.dump(2) + "\n");

  json manifest{{"subcommand", result.subcommand},
                {"config_hash", config_hash},
                {"code_version", code_version()},
                {"started", info.started},
                {"finished", info.finished.empty() ? utc_now() : info.finished},
                {"workers", info.workers},
                {"files", json::array()}};
  for (const auto& [name, bytes] : files) {
    write_file(root / name, bytes);
    manifest["files"].push_back({{"name", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }
  const fs::path tmp = root / "manifest.json.tmp";
  write_file(tmp, manifest.dump(2) + "\n");
  fs::rename(tmp, root / "manifest.json");
  return manifest;
}

} // namespace mwl::cli
