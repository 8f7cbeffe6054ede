// metafit: generate tasks, train initializers, fit, and run the ablation and
// domain-shift studies.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metafit/harness.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "flat key = value config file")->check(CLI::ExistingFile);
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&args](const std::uint64_t& s) { args.seed = s, args.seed_given = true; }, "master seed");
  cmd->add_option("--out", args.out, "output directory");
  cmd->add_option("--set", args.overrides, "override a config key (key=value), repeatable")->take_all();
}

metafit::ExperimentConfig build_config(const CommonArgs& args) {
  metafit::ExperimentConfig cfg;
  if (!args.config.empty()) metafit::load_config_file(cfg, args.config);
  if (args.seed_given) cfg.seed = args.seed;
  if (!args.out.empty()) cfg.out = args.out;
  for (const auto& o : args.overrides) metafit::apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learned, uncertainty-aware keypoint fitting experiments"};
  app.require_subcommand(1);
  CommonArgs args;

  using Driver = metafit::CommandResult (*)(const metafit::ExperimentConfig&);
  struct Command {
    const char* name;
    const char* help;
    Driver run;
    bool fatal_divergence;
  };
  const std::vector<Command> commands = {
      {"gen-tasks", "write a seeded task file", metafit::run_gen_tasks, false},
      {"train", "meta-train the initializer and write a checkpoint", metafit::run_train, false},
      {"fit", "refine tasks from a checkpoint, writing trace.csv and summary.csv", metafit::run_fit, true},
      {"ablate", "component and variance ablations", metafit::run_ablation, false},
      {"domain-shift", "train on the source domain, report the target-domain degradation",
       metafit::run_domain_shift, false},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, args);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      const metafit::ExperimentConfig cfg = build_config(args);
      const metafit::CommandResult result = commands[i].run(cfg);
      std::cerr << commands[i].name << ": " << result.message << '\n';
      if (commands[i].fatal_divergence && result.diverged_tasks > 0) {
        std::cerr << commands[i].name << ": numeric divergence in " << result.diverged_tasks << " task(s)\n";
        return 3;
      }
      return 0;
    } catch (const metafit::Error& e) {
      std::cerr << commands[i].name << ": " << e.what() << '\n';
      return metafit::exit_code(e.code());
    } catch (const std::exception& e) {
      std::cerr << commands[i].name << ": " << e.what() << '\n';
      return 2;
    }
  }
  return 2;
}
