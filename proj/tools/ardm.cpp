#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ardm/commands.hpp"
#include "ardm/error.hpp"
#include "ardm/report.hpp"

namespace {

using ardm::CommandContext;

struct Flags {
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool force = false;
  std::string out;
  std::string data;
  std::string initial_states;
  std::string sweep_dir;
  std::vector<std::string> checkpoints;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key = value configuration file");
  cmd->add_option("--set", f.overrides, "override one key (key=value); repeatable");
  cmd->add_option("--seed", f.seed, "root seed (overrides the seed key)");
  cmd->add_option("--threads", f.threads, "worker threads; 1 is the reference path")->check(CLI::PositiveNumber);
  cmd->add_flag("--force", f.force, "write into a non-empty output directory");
  cmd->add_option("--out", f.out, "output directory");
}

CommandContext make_context(const Flags& f, const std::string& command, const CLI::App* cmd) {
  CommandContext ctx;
  if (!f.config.empty()) ctx.config = ardm::RunConfig::load(f.config);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ardm::ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    ctx.config.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (cmd->count("--seed")) ctx.config.set("seed", std::to_string(f.seed));
  ctx.threads = f.threads;
  ctx.force = f.force;
  ctx.out = f.out.empty() ? ardm::default_output_dir(command) : std::filesystem::path(f.out);
  ctx.data = f.data;
  ctx.initial_states = f.initial_states;
  ctx.sweep_dir = f.sweep_dir;
  ctx.checkpoints.assign(f.checkpoints.begin(), f.checkpoints.end());
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedforward and autoregressive dynamics models for off-policy evaluation and planning"};
  app.set_version_flag("--version", std::string("ardm ") + ardm::kToolkitVersion);
  app.require_subcommand(1);
  Flags f;

  using Handler = void (*)(const CommandContext&);
  struct Command {
    const char* name;
    const char* help;
    Handler run;
    bool data, initial_states, sweep, checkpoint;
  };
  const Command commands[] = {
      {"gen-data", "collect a dataset and initial states from the configured environment", ardm::cmd_gen_data, false, false, false, false},
      {"train", "train one dynamics model", ardm::cmd_train, true, false, false, false},
      {"sweep", "train a hyperparameter grid and rank it by validation NLL", ardm::cmd_sweep, true, false, false, false},
      {"ope", "model-based off-policy evaluation of the policy set, with metrics", ardm::cmd_ope, false, true, false, true},
      {"plan-eval", "paired evaluation of MPPI planning against the raw policy", ardm::cmd_plan_eval, false, false, false, true},
      {"augment", "append model-generated transitions to a dataset", ardm::cmd_augment, true, false, false, true},
      {"study", "validation NLL versus OPE correlation across a sweep", ardm::cmd_study, false, true, true, false},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, f);
    if (c.data) sub->add_option("--data", f.data, "dataset file")->required();
    if (c.initial_states) sub->add_option("--initial-states", f.initial_states, "initial-state file")->required();
    if (c.sweep) sub->add_option("--sweep", f.sweep_dir, "sweep output directory")->required();
    if (c.checkpoint) sub->add_option("--checkpoint", f.checkpoints, "model checkpoint; repeat for an ensemble")->required();
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ardm::ExitCode::kConfig);
  }

  try {
    for (const auto& [sub, command] : subs) {
      if (!sub->parsed()) continue;
      command->run(make_context(f, command->name, sub));
    }
  } catch (const ardm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ardm::ExitCode::kConfig);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
