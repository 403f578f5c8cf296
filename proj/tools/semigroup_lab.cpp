#include "semigroup_lab/lab_cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

const char* const kSubcommands[] = {"check-hypotheses", "intervals",   "identity", "dissipativity", "analyticity",
                                    "weighted",         "appendix-b", "evolve",   "all"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semigroup-lab: constants, inequality audits and semigroup simulation for coupled elliptic systems"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  bool strict = false;
  for (const char* name : kSubcommands) {
    auto* sub = app.add_subcommand(name, std::string("run ") + (std::string(name) == "all" ? "every configured task" : name));
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_flag("--strict", strict, "treat warnings as failures");
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = sglab::cli::load_config(config_path);
    sglab::cli::RunOptions opt;
    opt.seed = seed;
    opt.strict = strict;
    if (cmd != "all") opt.only_tasks = std::vector<std::string>{*sglab::cli::task_for_subcommand(cmd)};
    const auto result = sglab::cli::run(cfg, opt);
    const std::string dir = out_dir.empty() ? cfg.output : out_dir;
    sglab::cli::write_outputs(result, dir);
    for (const auto& [name, task] : result.report["tasks"].items()) {
      std::cout << name << ": " << task["status"].get<std::string>() << "\n";
      for (const auto& m : task["messages"]) std::cout << "  " << m.get<std::string>() << "\n";
    }
    std::cout << "report written to " << dir << " (exit " << result.exit_code << ")\n";
    return result.exit_code;
  } catch (const sglab::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
