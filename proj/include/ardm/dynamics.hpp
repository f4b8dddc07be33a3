#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ardm/dataset.hpp"
#include "ardm/linalg.hpp"
#include "ardm/mlp.hpp"

namespace ardm {

class Rng;

/// z-score statistics for the state, action and reward channels.
struct NormalizationStats {
  static constexpr double kStdFloor = 1e-8;

  Vector state_mean;
  Vector state_std;
  Vector action_mean;
  Vector action_std;
  double reward_mean = 0.0;
  double reward_std = 1.0;

  static NormalizationStats identity(std::size_t state_dim, std::size_t action_dim);

  std::size_t state_dim() const { return static_cast<std::size_t>(state_mean.size()); }
  std::size_t action_dim() const { return static_cast<std::size_t>(action_mean.size()); }

  Matrix normalize_states(const Eigen::Ref<const Matrix>& s) const;
  Matrix denormalize_states(const Eigen::Ref<const Matrix>& z) const;
  Matrix normalize_actions(const Eigen::Ref<const Matrix>& a) const;
  Matrix denormalize_actions(const Eigen::Ref<const Matrix>& z) const;
  double normalize_reward(double r) const { return (r - reward_mean) / reward_std; }
  double denormalize_reward(double z) const { return z * reward_std + reward_mean; }

  /// Standard deviation of predicted dimension d (d == n is the reward).
  double target_std(std::size_t d) const;
  /// log |d raw / d normalized| summed over the n + 1 predicted dimensions.
  double log_jacobian() const;

  bool operator==(const NormalizationStats& other) const;
};

/// Per-dimension mean and population std of the training batch, std floored at 1e-8.
NormalizationStats fit_normalization(const TransitionBatch& batch);
TransitionBatch normalize(const NormalizationStats& stats, const TransitionBatch& batch);
TransitionBatch denormalize(const NormalizationStats& stats, const TransitionBatch& batch);

/// Diagonal Gaussian in normalized units.
struct GaussianPrediction {
  static constexpr double kLogVarMin = -10.0;
  static constexpr double kLogVarMax = 5.0;

  Vector mean;
  Vector log_variance;
};

double clamp_log_variance(double raw);

/**
 * Elementwise Gaussian NLL for a network head. `outputs` holds k mean rows
 * followed by k raw log-variance rows; `targets` is k x rows. Returns the
 * k x rows matrix of 0.5 log 2pi + 0.5 l + (x - mu)^2 / (2 e^l).
 */
Matrix gaussian_nll_terms(const Eigen::Ref<const Matrix>& outputs, const Eigen::Ref<const Matrix>& targets);

/// d(scale * sum of terms) / d outputs. Log-variance gradients vanish where the clamp binds.
Matrix gaussian_nll_gradient(const Eigen::Ref<const Matrix>& outputs,
                             const Eigen::Ref<const Matrix>& targets, double scale);

/// Anything that can draw (s', r') given (s, a). Learned models and the true environment both qualify.
class TransitionModel {
 public:
  virtual ~TransitionModel() = default;

  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_dim() const = 0;

  virtual std::pair<Vector, double> sample(const Vector& state, const Vector& action, Rng& rng) const = 0;

  /**
   * Samples one transition per column. Column j draws only from rngs[j], in
   * the same order sample() would, so batched and one-at-a-time rollouts see
   * the same random numbers.
   */
  virtual void sample_batch(const Matrix& states, const Matrix& actions, std::span<Rng* const> rngs,
                            Matrix& next_states, Vector& rewards) const;
};

enum class ModelKind : std::uint8_t { kFeedforward = 0, kAutoregressive = 1 };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Network inputs and regression targets (normalized units) for a batch of transitions.
struct NetworkRows {
  Matrix inputs;
  Matrix targets;
  /// Predicted dimension of each target row entry: for the feedforward family the
  /// row index of `targets`; for the autoregressive family one entry per column.
  std::vector<std::uint32_t> column_dims;
};

/// A learned Gaussian dynamics model over the n + 1 dimensions (next state, reward).
class DynamicsModel : public TransitionModel {
 public:
  DynamicsModel(ModelKind kind, std::size_t state_dim, std::size_t action_dim, MlpSpec spec,
                ParameterSet params, NormalizationStats stats);
  DynamicsModel(const DynamicsModel& other);
  DynamicsModel& operator=(const DynamicsModel& other);

  ModelKind kind() const { return kind_; }
  std::size_t state_dim() const override { return state_dim_; }
  std::size_t action_dim() const override { return action_dim_; }
  const MlpSpec& spec() const { return spec_; }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }
  const NormalizationStats& stats() const { return stats_; }

  /// Rows of the likelihood computation for an already-normalized batch.
  virtual NetworkRows build_rows(const TransitionBatch& normalized) const = 0;
  /// Rows per transition: 1 (feedforward) or n + 1 (autoregressive).
  virtual std::size_t rows_per_transition() const = 0;

  /// Mean NLL per transition in raw units (change of variables included).
  double nll(const TransitionBatch& batch) const;
  /// Mean NLL per transition split by predicted dimension (length n + 1); sums to nll().
  Vector nll_per_dimension(const TransitionBatch& batch) const;

  virtual std::unique_ptr<DynamicsModel> clone() const = 0;

  /// Number of network forward passes issued so far (diagnostics).
  std::size_t forward_passes() const { return forward_passes_.load(std::memory_order_relaxed); }

 protected:
  Matrix forward(const Eigen::Ref<const Matrix>& inputs) const;
  void check_state_action(const Vector& s, const Vector& a) const;

  ModelKind kind_;
  std::size_t state_dim_;
  std::size_t action_dim_;
  MlpSpec spec_;
  ParameterSet params_;
  NormalizationStats stats_;
  mutable std::atomic<std::size_t> forward_passes_{0};
};

/// Predicts all n + 1 dimensions at once as independent Gaussians.
class FeedforwardDynamics final : public DynamicsModel {
 public:
  static MlpSpec make_spec(std::size_t state_dim, std::size_t action_dim,
                           std::vector<std::size_t> hidden, Activation activation = Activation::kRelu);

  FeedforwardDynamics(std::size_t state_dim, std::size_t action_dim, MlpSpec spec, ParameterSet params,
                      NormalizationStats stats);
  /// He-initialized model.
  FeedforwardDynamics(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
                      NormalizationStats stats, std::uint64_t seed,
                      Activation activation = Activation::kRelu);

  /// Prediction in normalized units; index n is the reward.
  GaussianPrediction predict(const Vector& state, const Vector& action) const;

  NetworkRows build_rows(const TransitionBatch& normalized) const override;
  std::size_t rows_per_transition() const override { return 1; }

  std::pair<Vector, double> sample(const Vector& state, const Vector& action, Rng& rng) const override;
  void sample_batch(const Matrix& states, const Matrix& actions, std::span<Rng* const> rngs,
                    Matrix& next_states, Vector& rewards) const override;

  std::unique_ptr<DynamicsModel> clone() const override;
};

/**
 * Predicts one dimension at a time, conditioned on the dimensions already
 * generated. Network input: [state (n), action (m), previous next-state
 * dims (n, zero where not yet generated), one-hot of the predicted dimension
 * (n + 1; slot n is the reward)].
 */
class AutoregressiveDynamics final : public DynamicsModel {
 public:
  static MlpSpec make_spec(std::size_t state_dim, std::size_t action_dim,
                           std::vector<std::size_t> hidden, Activation activation = Activation::kRelu);
  static std::size_t input_width(std::size_t state_dim, std::size_t action_dim) {
    return 3 * state_dim + action_dim + 1;
  }

  AutoregressiveDynamics(std::size_t state_dim, std::size_t action_dim, MlpSpec spec,
                         ParameterSet params, NormalizationStats stats,
                         std::vector<std::uint32_t> dimension_order = {});
  AutoregressiveDynamics(std::size_t state_dim, std::size_t action_dim,
                         std::vector<std::size_t> hidden, NormalizationStats stats, std::uint64_t seed,
                         std::vector<std::uint32_t> dimension_order = {},
                         Activation activation = Activation::kRelu);

  const std::vector<std::uint32_t>& dimension_order() const { return order_; }
  /// State dimension generated at `step` (step n is the reward, returned as n).
  std::uint32_t dimension_at(std::size_t step) const;

  /**
   * Conditional p(x_step | s, a, earlier dims). `prev_dims` holds raw next-state
   * values indexed by state dimension and must be zero at every dimension
   * generated at or after `step`; violations raise MaskingError.
   */
  GaussianPrediction predict_dim(const Vector& state, const Vector& action, const Vector& prev_dims,
                                 std::size_t step) const;

  /// Input column for one conditional (normalized state/action/prev given).
  Vector make_input(const Vector& state_norm, const Vector& action_norm, const Vector& prev_norm,
                    std::size_t step) const;

  NetworkRows build_rows(const TransitionBatch& normalized) const override;
  std::size_t rows_per_transition() const override { return state_dim_ + 1; }

  /// Chain-rule NLL evaluated one conditional at a time through predict_dim().
  double nll_sequential(const TransitionBatch& batch) const;

  std::pair<Vector, double> sample(const Vector& state, const Vector& action, Rng& rng) const override;
  void sample_batch(const Matrix& states, const Matrix& actions, std::span<Rng* const> rngs,
                    Matrix& next_states, Vector& rewards) const override;

  std::unique_ptr<DynamicsModel> clone() const override;

 private:
  std::vector<std::uint32_t> order_;
  std::vector<std::uint32_t> rank_;  // rank_[dim] = step at which dim is generated
};

/// Builds an untrained model of the given family.
std::unique_ptr<DynamicsModel> make_model(ModelKind kind, std::size_t state_dim, std::size_t action_dim,
                                          const std::vector<std::size_t>& hidden,
                                          const NormalizationStats& stats, std::uint64_t seed,
                                          const std::vector<std::uint32_t>& dimension_order = {},
                                          Activation activation = Activation::kRelu);

/// Differential entropy (raw units) of the model's predictive distribution at (s, a),
/// for the feedforward family; the autoregressive family has no closed form.
double ff_entropy(const FeedforwardDynamics& model, const Vector& state, const Vector& action);

}  // namespace ardm
