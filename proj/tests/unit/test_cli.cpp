#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "mwlattice/cli/config.hpp"
#include "mwlattice/cli/output.hpp"
#include "mwlattice/cli/runner.hpp"

using namespace mwl;
using namespace mwl::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mwl_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(MWL_EXE) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json quick_couplings(double theta) {
  json doc{{"lattice", {{"theta_rad", theta}}}, {"solver", {{"nq", 16}}}, {"couplings", {{"n_max", 2}}}};
  return resolve("", doc);
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("schema rejects unknown keys and type mismatches") {
  CHECK_NOTHROW(validate(default_config()));
  CHECK_THROWS_AS(resolve("", json{{"lattice", {{"depth", 3.0}}}}), ConfigError);
  CHECK_THROWS_AS(resolve("", json{{"lattice", {{"theta_rad", "wide"}}}}), ConfigError);
  CHECK_THROWS_AS(resolve("", json{{"solver", {{"nq", 8.5}}}}), ConfigError);
  CHECK_THROWS_AS(resolve("", json{{"lattice", {{"sign", "sideways"}}}}), ConfigError);
  CHECK_THROWS_AS(resolve("", json{{"spectrum", {{"line_areas", json::array({json{{"n", 0}}})}}}}), ConfigError);
  CHECK_THROWS_AS(resolve("no_such_preset", json()), ConfigError);
  CHECK_THROWS_AS(resolve("", json{{"solver", {{"nq", 8.0}}}}), ConfigError);
  CHECK_NOTHROW(resolve("", json{{"solver", {{"nq", 8}}}, {"lattice", {{"theta_rad", 1}}}}));
}

TEST_CASE("every preset resolves to a valid configuration") {
  const auto names = preset_names();
  CHECK(names.size() >= 7);
  for (const auto& name : names) {
    CAPTURE(name);
    json c;
    CHECK_NOTHROW(c = resolve(name, json()));
    CHECK_NOTHROW(lattice_config(c).validate());
    CHECK_NOTHROW(coupling_options(c));
  }
  const auto fig3a = resolve("fig3a", json());
  CHECK(std::abs(displacement(lattice_config(fig3a))) == doctest::Approx(24e-9).epsilon(1e-8));
}

TEST_CASE("dotted paths read and write config leaves") {
  json c = default_config();
  set_path(c, "lattice.theta_rad", 0.25);
  CHECK(at_path(c, "lattice.theta_rad").get<double>() == 0.25);
  set_path(c, "solver.nq", 15.6);
  CHECK(at_path(c, "solver.nq").get<int>() == 16);
  CHECK_THROWS_AS(at_path(c, "lattice.nothing"), ConfigError);
}

TEST_CASE("single-point sweep reproduces the direct run") {
  json c = quick_couplings(0.2);
  const auto direct = run("couplings", c);
  c["sweep"] = {{"subcommand", "couplings"}, {"parameter", "lattice.theta_rad"}, {"start", 0.2}, {"stop", 0.2}, {"steps", 1}};
  const auto swept = run("sweep", c);
  REQUIRE_FALSE(swept.invalid());
  const auto& a = direct.tables.front();
  const auto& b = swept.tables.front();
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const std::vector<Cell> inner(b.rows[i].begin() + 2, b.rows[i].end() - 1);
    CHECK(inner == a.rows[i]);
  }
}

TEST_CASE("outputs do not depend on the worker count") {
  json c = quick_couplings(0.2);
  c["solver"]["nq"] = 32;
  c["couplings"]["theta_scan"] = {{"start", 0.1}, {"stop", 0.5}, {"steps", 4}};
  const auto one = run("couplings", c, RunContext{1});
  const auto three = run("couplings", c, RunContext{3});
  CHECK(to_csv(one.tables.front()) == to_csv(three.tables.front()));
  CHECK(one.summary == three.summary);
}

TEST_CASE("manifest checksums match the written files") {
  const json c = quick_couplings(0.2);
  const auto r = run("couplings", c);
  const auto dir = scratch("manifest");
  WriteInfo info;
  info.started = utc_now();
  const auto manifest = write_outputs(r, c, dir.string(), info);
  CHECK(manifest["config_hash"] == sha256_hex(canonical(c)));
  CHECK(manifest["files"].size() == 4);
  for (const auto& f : manifest["files"]) {
    const auto bytes = slurp(dir / f["name"].get<std::string>());
    CHECK(f["sha256"] == sha256_hex(bytes));
    CHECK(f["bytes"] == bytes.size());
  }
  CHECK(json::parse(slurp(dir / "manifest.json")) == manifest);
  CHECK_FALSE(fs::exists(dir / "manifest.json.tmp"));
  CHECK(json::parse(slurp(dir / "config.json")) == c);
  fs::remove_all(dir);
}

TEST_CASE("hashing and number formatting") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0 / 3.0) == "0.333333333333");
  Table t{"x", {"a", "b"}, {{1LL, 2.5}, {std::monostate{}, std::string("s")}}};
  CHECK(to_csv(t) == "a,b\n1,2.5\n,s\n");
  CHECK(to_json(t)["rows"][1][0].is_null());
}

TEST_CASE("errors map to exit codes") {
  CHECK(exit_code(ConfigError("x")) == 2);
  CHECK(exit_code(DomainError("x")) == 2);
  CHECK(exit_code(RangeError("x")) == 3);
  CHECK(exit_code(SolverError("x")) == 3);
  const auto j = error_json(RangeError("out"));
  CHECK(j["error"]["kind"] == "range");
  CHECK(j["error"]["exit_code"] == 3);
  CHECK_THROWS_AS(run("nonsense", default_config()), ConfigError);
}

TEST_CASE("command-line tool exit codes") {
  const auto dir = scratch("tool");
  const std::string out = " --out " + (dir / "o").string();
  CHECK(run_tool("--list-presets") == 0);
  CHECK(run_tool("transitions --preset fig3a" + out) == 0);
  CHECK(fs::exists(dir / "o" / "manifest.json"));
  CHECK(run_tool("transitions --preset nope" + out) == 2);
  CHECK(run_tool("frobnicate" + out) == 2);
  CHECK(run_tool("transitions --workers 0" + out) == 2);
  CHECK(run_tool("rabi --theta-scan 0:1:3" + out) == 2);
  {
    std::ofstream(dir / "bad.json") << R"({"lattice": {"depth_plus_Er": -5}})";
    CHECK(run_tool("transitions --config " + (dir / "bad.json").string() + out) == 2);
  }
  {
    // A displacement no polarization angle can reach fails the point; the
    // sweep is then flagged invalid.
    std::ofstream(dir / "sweep.json") << R"({"solver": {"nq": 16},
      "sweep": {"subcommand": "couplings", "parameter": "lattice.delta_x_nm", "start": 20, "stop": 400, "steps": 2}})";
    CHECK(run_tool("sweep --config " + (dir / "sweep.json").string() + out) == 4);
    const auto summary = json::parse(slurp(dir / "o" / "summary.json"));
    CHECK(summary["status"] == "invalid");
    CHECK(summary["summary"]["failed"] == 1);
  }
  fs::remove_all(dir);
}

}
