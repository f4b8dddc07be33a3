#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ardm/config.hpp"
#include "ardm/planning.hpp"
#include "ardm/training.hpp"

namespace ardm {

struct CommandContext {
  RunConfig config;
  std::size_t threads = 1;
  bool force = false;
  std::filesystem::path out;
  std::filesystem::path data;
  std::filesystem::path initial_states;
  std::filesystem::path sweep_dir;
  std::vector<std::filesystem::path> checkpoints;
  std::ostream* log = nullptr;
};

/// Output directory when --out is absent: $ARDM_OUT_ROOT/<command>, else ./ardm-out/<command>.
std::filesystem::path default_output_dir(const std::string& command);

void cmd_gen_data(const CommandContext& ctx);
void cmd_train(const CommandContext& ctx);
void cmd_sweep(const CommandContext& ctx);
void cmd_ope(const CommandContext& ctx);
void cmd_plan_eval(const CommandContext& ctx);
void cmd_augment(const CommandContext& ctx);
void cmd_study(const CommandContext& ctx);

/// Training configuration described by the train.* keys.
TrainConfig train_config(const RunConfig& config);
/// Grid described by the sweep.* keys.
std::vector<TrainConfig> sweep_grid(const RunConfig& config);
MppiConfig mppi_config(const RunConfig& config);

}  // namespace ardm
