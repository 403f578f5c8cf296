#include <catch_amalgamated.hpp>

#include "semigroup_lab/lab_cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sglab;
using cli::json;
namespace fs = std::filesystem;

namespace {

json heat_config() {
  return json::parse(R"({
    "schema_version": 1,
    "field": {"family": "heat", "d": 2, "m": 2, "potential": {"kind": "weight", "v0": 1.0, "beta": 1.0}},
    "sample_plan": {"kind": "grid", "box": [-3, 3], "points": 7},
    "weights": {"gamma": 0.8},
    "exponents": [1.5, 2.0, 3.0],
    "test_functions": {"count": 3},
    "quadrature": {"h": 0.0625},
    "evolve": {"n": 24, "box": [-4, 4], "dt": 0.002, "steps": 40, "p_list": [1.8, 2.0, 2.2]},
    "seed": 5
  })");
}

json case_II_config() {
  return json::parse(R"({
    "schema_version": 1,
    "field": {"family": "case_II", "d": 2, "m": 2, "Lambda_G": 0.2, "alpha": 0.2, "seed": 3},
    "tasks": ["hypotheses", "intervals"]
  })");
}

std::string config_error(const json& j) {
  try {
    cli::parse_config(j);
  } catch (const cli::ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("semigroup_lab_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

struct Proc {
  int code;
  std::string out;
};

Proc run_cli(const std::string& args) {
  const char* bin = std::getenv("SEMIGROUP_LAB_BIN");
  REQUIRE(bin != nullptr);
  std::string cmd = std::string(bin) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) out += buf;
  const int st = pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("unknown keys are rejected by name") {
  json j = heat_config();
  j["phi"] = 1;
  CHECK(config_error(j).find("\"phi\"") != std::string::npos);
  j = heat_config();
  j["field"]["phi"] = 1;
  CHECK(config_error(j).find("\"phi\" in field") != std::string::npos);
  j = heat_config();
  j["evolve"]["phi"] = 1;
  CHECK(config_error(j).find("\"phi\" in evolve") != std::string::npos);
}

TEST_CASE("schema violations") {
  json j = heat_config();
  j["schema_version"] = 2;
  CHECK_FALSE(config_error(j).empty());
  j = heat_config();
  j.erase("schema_version");
  CHECK_FALSE(config_error(j).empty());
  j = heat_config();
  j.erase("weights");
  CHECK(config_error(j).find("weights") != std::string::npos);
  j = heat_config();
  j["field"]["family"] = "custom";
  CHECK(config_error(j).find("library API") != std::string::npos);
  j = heat_config();
  j["field"]["k0"] = 0.1;
  CHECK_FALSE(config_error(j).empty());
  j = case_II_config();
  j["field"].erase("Lambda_G");
  CHECK(config_error(j).find("Lambda_G") != std::string::npos);
  j = heat_config();
  j["tasks"] = {"hypotheses", "plots"};
  CHECK(config_error(j).find("plots") != std::string::npos);
  j = heat_config();
  j["exponents"] = {0.5};
  CHECK_FALSE(config_error(j).empty());
  j = heat_config();
  j["evolve"]["solver_tol"] = 1e-6;
  CHECK_FALSE(config_error(j).empty());
  j = heat_config();
  j["seed"] = "seven";
  CHECK(config_error(j).find("config.seed") != std::string::npos);
  CHECK(config_error(heat_config()).empty());
}

TEST_CASE("case II intervals report the exact window") {
  auto r = cli::run(cli::parse_config(case_II_config()));
  CHECK(r.exit_code == 0);
  CHECK(r.report["constants"]["scriptC"].get<double>() == 0.2);
  CHECK(r.report["constants"]["scriptC_text"] == "1/5");
  CHECK(r.report["tasks"]["intervals"]["J"]["text"] == "[9/7, 27]");
  CHECK(std::abs(r.report["constants"]["scriptC_empirical"].get<double>() - 0.2) <= 1e-8);
  // the task list controls which tasks run; hypotheses always come first
  auto keys = std::vector<std::string>();
  for (auto& [k, v] : r.report["tasks"].items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"hypotheses", "intervals"});
}

TEST_CASE("heat pipeline passes end to end") {
  auto r = cli::run(cli::parse_config(heat_config()));
  INFO(r.report.dump(2));
  CHECK(r.exit_code == 0);
  CHECK(r.hard_failures == 0);
  const auto& t = r.report["tasks"];
  CHECK(t["dissipativity"]["margin"]["min"].get<double>() >= -1e-6);
  CHECK(t["evolve"]["violations"].empty());
  CHECK(t["weighted"]["status"] == "ok");
  CHECK(t["analyticity"]["status"] == "ok");
  CHECK(std::isfinite(t["analyticity"]["sup_ratio"].get<double>()));
  for (const char* f : {"conditions.csv", "constants.csv", "identity.csv", "dissipativity.csv", "analyticity.csv",
                        "weighted.csv", "appendix_b.csv", "evolve_norms.csv", "evolve_violations.csv"}) {
    bool found = false;
    for (const auto& [name, body] : r.files) found = found || name == f;
    CHECK(found);
  }
}

TEST_CASE("runs are reproducible and the seed override is honoured") {
  auto cfg = cli::parse_config(heat_config());
  auto a = cli::run(cfg), b = cli::run(cfg);
  CHECK(a.report.dump() == b.report.dump());
  CHECK(a.files == b.files);
  cli::RunOptions o;
  o.seed = 99;
  auto c = cli::run(cfg, o);
  CHECK(c.report["seed"] == 99);
  CHECK(c.report["tasks"]["identity"].dump() != a.report["tasks"]["identity"].dump());
}

TEST_CASE("exit code contract") {
  json j = heat_config();
  j["tasks"] = {"evolve"};
  j["evolve"]["audit_tol"] = -1.0;  // every step counts as a violation
  auto cfg = cli::parse_config(j);
  auto r = cli::run(cfg);
  CHECK(r.warnings > 0);
  CHECK(r.exit_code == 0);
  cli::RunOptions strict;
  strict.strict = true;
  CHECK(cli::run(cfg, strict).exit_code == 1);

  j = heat_config();
  j["tasks"] = {"weighted"};
  j["weights"]["gamma"] = 5.0;  // Lambda_p < 0
  r = cli::run(cli::parse_config(j));
  CHECK(r.report["tasks"]["weighted"]["status"] == "failed");
  CHECK(r.exit_code == 1);
}

TEST_CASE("subcommands restrict the task list") {
  cli::RunOptions o;
  o.only_tasks = std::vector<std::string>{"appendixB"};
  auto r = cli::run(cli::parse_config(heat_config()), o);
  std::vector<std::string> keys;
  for (auto& [k, v] : r.report["tasks"].items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"hypotheses", "appendixB"});
  CHECK(cli::task_for_subcommand("appendix-b") == "appendixB");
  CHECK(cli::task_for_subcommand("check-hypotheses") == "hypotheses");
  CHECK_FALSE(cli::task_for_subcommand("plot"));
}

TEST_CASE("binary: exit codes and byte-identical reports") {
  const fs::path dir = scratch("binary");
  json bad = case_II_config();
  bad["phi"] = 0;
  auto p = run_cli("intervals --config " + write_config(dir, bad).string() + " --out " + (dir / "x").string());
  CHECK(p.code == 2);
  CHECK(p.out.find("phi") != std::string::npos);

  CHECK(run_cli("intervals --config " + (dir / "missing.json").string()).code == 2);
  CHECK(run_cli("frobnicate").code == 2);
  CHECK(run_cli("intervals").code == 2);

  const fs::path cfg = write_config(dir, heat_config());
  auto r1 = run_cli("all --config " + cfg.string() + " --out " + (dir / "a").string());
  auto r2 = run_cli("all --config " + cfg.string() + " --out " + (dir / "b").string());
  INFO(r1.out);
  CHECK(r1.code == 0);
  CHECK(r2.code == 0);
  int compared = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const auto name = e.path().filename();
    if (name == "timing.json") continue;
    CHECK(slurp(e.path()) == slurp(dir / "b" / name));
    ++compared;
  }
  CHECK(compared >= 10);
  CHECK(fs::exists(dir / "a" / "timing.json"));
  const json rep = json::parse(slurp(dir / "a" / "report.json"));
  CHECK(rep["summary"]["exit_code"] == 0);

  json warn = heat_config();
  warn["tasks"] = {"evolve"};
  warn["evolve"]["audit_tol"] = -1.0;
  const fs::path wcfg = write_config(dir, warn);
  CHECK(run_cli("evolve --config " + wcfg.string() + " --out " + (dir / "w").string()).code == 0);
  CHECK(run_cli("evolve --strict --config " + wcfg.string() + " --out " + (dir / "w").string()).code == 1);
}

TEST_CASE("shipped configs parse") {
  const char* dir = std::getenv("SEMIGROUP_LAB_CONFIGS");
  REQUIRE(dir != nullptr);
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    INFO(e.path());
    CHECK_NOTHROW(cli::load_config(e.path().string()));
    ++n;
  }
  CHECK(n >= 4);
}
