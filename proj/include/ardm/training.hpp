#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ardm/dataset.hpp"
#include "ardm/dynamics.hpp"
#include "ardm/mlp.hpp"
#include "ardm/optimizer.hpp"

namespace ardm {

struct TrainConfig {
  ModelKind model_kind = ModelKind::kFeedforward;
  std::size_t layers = 3;
  std::size_t width = 512;
  double input_noise_sigma = 0.0;
  double weight_decay = 0.0;
  double learning_rate = 1e-3;
  std::size_t epochs = 500;
  std::size_t batch_size = 256;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 0;
  Activation activation = Activation::kRelu;
  std::vector<std::uint32_t> dimension_order;  // autoregressive only; empty = column order

  void validate() const;
  /// True when every grid field takes one of the values of the 48-point grid.
  bool on_full_grid() const;
  /// Canonical text of every field except the seed; equal keys mean equal runs up to seeding.
  std::string key() const;
  std::uint64_t digest() const;
};

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct DatasetSplit {
  TransitionBatch train;
  TransitionBatch validation;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> validation_indices;
};

/// Seeded shuffle, then the first floor(fraction * N) indices go to training.
DatasetSplit split_dataset(const TransitionBatch& data, double train_fraction, std::uint64_t seed);

struct TrainReport {
  std::vector<double> train_nll;       // mean minibatch loss per epoch, raw units
  std::vector<double> validation_nll;  // entry 0 is the untrained model
  double best_validation_nll = 0.0;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
  std::string checkpoint;
};

/// Observer for individual optimizer steps.
struct StepInfo {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // global, 0-based
  std::span<const std::size_t> batch;  // indices into the training split
  double loss = 0.0;      // raw-unit NLL per transition, before the update
  double lr = 0.0;
};

struct TrainOptions {
  std::function<void(const StepInfo&)> on_step;
  std::function<void(std::size_t epoch, double train_nll, double validation_nll)> on_epoch;
};

struct TrainResult {
  std::unique_ptr<DynamicsModel> model;
  TrainReport report;
};

/**
 * Minibatch maximum-likelihood training. Normalization statistics come from
 * the training split. With a non-empty validation split the parameters of the
 * best validation epoch are returned (epoch 0 = initialization); otherwise the
 * final parameters.
 */
TrainResult train_model(const TrainConfig& config, const TransitionBatch& train,
                        const TransitionBatch& validation, const TrainOptions& options = {});

struct NllBreakdown {
  Vector per_dimension;  // length n + 1, reward last
  double total = 0.0;
};

NllBreakdown evaluate_nll(const DynamicsModel& model, const TransitionBatch& data);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepGrid {
  std::vector<ModelKind> kinds{ModelKind::kFeedforward, ModelKind::kAutoregressive};
  std::vector<std::size_t> layers{3, 4};
  std::vector<std::size_t> widths{512, 1024};
  std::vector<double> input_noise{0.0, 1e-6, 1e-7};
  std::vector<double> weight_decay{0.0, 1e-6};
  std::vector<double> learning_rates{1e-3, 3e-4};
  std::size_t epochs = 500;
  std::size_t batch_size = 256;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  Activation activation = Activation::kRelu;

  /// Cartesian product, kind outermost.
  std::vector<TrainConfig> expand() const;
};

/// The 2 x 2 x 3 x 2 x 2 = 48-point grid for each requested family.
SweepGrid full_grid(std::vector<ModelKind> kinds = {ModelKind::kFeedforward, ModelKind::kAutoregressive});

struct SweepRun {
  TrainConfig config;
  bool diverged = false;
  std::string error;
  double validation_nll = 0.0;
  TrainReport report;
  std::shared_ptr<const DynamicsModel> model;
};

struct SweepResult {
  std::vector<SweepRun> runs;         // grid order
  std::vector<std::size_t> ranking;   // non-diverged runs, ascending validation NLL
  std::size_t diverged_count() const;

  /// Ranked runs of one family.
  std::vector<std::size_t> ranking_of(ModelKind kind) const;
  /// Mean validation NLL of the best k runs of a family (fewer if fewer ran). NaN if none.
  double top_k_mean(ModelKind kind, std::size_t k) const;
  const SweepRun* best(ModelKind kind) const;
};

struct SweepOptions {
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::size_t threads = 1;
  /// Called once per finished run, from the worker thread that ran it.
  std::function<void(std::size_t index, const SweepRun&)> on_run;
};

/**
 * Trains every config on one shared split. Each run is seeded from the sweep
 * seed and the config key, so a run's result does not depend on what else is
 * in the grid or on thread scheduling. Diverged runs are kept but unranked.
 */
SweepResult hyperparameter_sweep(const std::vector<TrainConfig>& grid, const TransitionBatch& data,
                                 const SweepOptions& options);

/// Seed used for a config inside a sweep.
std::uint64_t sweep_run_seed(std::uint64_t sweep_seed, const TrainConfig& config);

}  // namespace ardm
