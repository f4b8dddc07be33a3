#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ardm/dataset.hpp"
#include "ardm/dynamics.hpp"
#include "ardm/linalg.hpp"

namespace ardm {

class Rng;

/// Finite-horizon MDP with a sampled initial state and stochastic transitions.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual std::string name() const = 0;

  virtual Vector reset(Rng& rng) const = 0;
  /// Returns (s', r'); the reward is emitted on the transition.
  virtual std::pair<Vector, double> step(const Vector& state, const Vector& action, Rng& rng) const = 0;
};

/// s' = A s + B a + w, w ~ N(0, noise_cov); r' = -(s^T Q s + a^T R a) + reward_noise_std * xi.
struct LinearGaussianSpec {
  Matrix A;
  Matrix B;
  Matrix noise_cov;
  Matrix Q;
  Matrix R;
  Vector init_mean;
  Matrix init_cov;
  double reward_noise_std = 0.0;
  std::size_t horizon = 50;

  std::size_t state_dim() const { return static_cast<std::size_t>(A.rows()); }
  std::size_t action_dim() const { return static_cast<std::size_t>(B.cols()); }
  /// Shape, symmetry, definiteness and stability checks.
  void validate() const;
};

class LinearGaussianEnv : public Environment {
 public:
  explicit LinearGaussianEnv(LinearGaussianSpec spec);

  std::size_t state_dim() const override { return spec_.state_dim(); }
  std::size_t action_dim() const override { return spec_.action_dim(); }
  std::size_t horizon() const override { return spec_.horizon; }
  std::string name() const override { return "linear_gaussian"; }

  Vector reset(Rng& rng) const override;
  std::pair<Vector, double> step(const Vector& state, const Vector& action, Rng& rng) const override;

  const LinearGaussianSpec& spec() const { return spec_; }
  double reward_mean(const Vector& state, const Vector& action) const;

  /// 0.5 log(det Diag(noise_cov) / det noise_cov): the per-transition NLL a
  /// diagonal-Gaussian model gives up against the exact joint.
  double diagonal_nll_gap() const;

 private:
  LinearGaussianSpec spec_;
  Matrix noise_chol_;
  Matrix init_chol_;
};

/// Linear-Gaussian environment whose transition noise has every off-diagonal correlation equal to rho.
class CorrelatedChainEnv : public LinearGaussianEnv {
 public:
  struct Options {
    std::size_t state_dim = 4;
    std::size_t action_dim = 1;
    double rho = 0.9;
    double noise_std = 0.5;
    double decay = 0.8;
    double reward_noise_std = 0.5;
    std::size_t horizon = 50;
  };

  explicit CorrelatedChainEnv(Options options);
  CorrelatedChainEnv() : CorrelatedChainEnv(Options{}) {}

  std::string name() const override { return "correlated_chain"; }
  double rho() const { return options_.rho; }
  const Options& options() const { return options_; }

  static LinearGaussianSpec make_spec(const Options& options);

 private:
  Options options_;
};

/// Damped pendulum, state (angle, angular velocity), one torque action. Value by Monte Carlo only.
class PendulumEnv : public Environment {
 public:
  struct Options {
    double dt = 0.05;
    double gravity_over_length = 9.81;
    double damping = 0.1;
    double noise_std = 0.02;
    double init_angle_std = 0.5;
    std::size_t horizon = 100;
  };

  explicit PendulumEnv(Options options) : options_(options) {}
  PendulumEnv() : PendulumEnv(Options{}) {}

  std::size_t state_dim() const override { return 2; }
  std::size_t action_dim() const override { return 1; }
  std::size_t horizon() const override { return options_.horizon; }
  std::string name() const override { return "pendulum"; }

  Vector reset(Rng& rng) const override;
  std::pair<Vector, double> step(const Vector& state, const Vector& action, Rng& rng) const override;

  const Options& options() const { return options_; }

 private:
  Options options_;
};

/// The 4-state, 2-action instance used for OPE ranking experiments.
LinearGaussianSpec default_ope_env_spec();
/// Small regulator instance used for planning experiments.
LinearGaussianSpec default_planning_env_spec();

/// Wraps an environment's own step function as a transition model.
class EnvironmentModel final : public TransitionModel {
 public:
  explicit EnvironmentModel(std::shared_ptr<const Environment> env) : env_(std::move(env)) {}

  std::size_t state_dim() const override { return env_->state_dim(); }
  std::size_t action_dim() const override { return env_->action_dim(); }
  std::pair<Vector, double> sample(const Vector& state, const Vector& action, Rng& rng) const override {
    return env_->step(state, action, rng);
  }

 private:
  std::shared_ptr<const Environment> env_;
};

// ---------------------------------------------------------------------------
// Policies

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual Vector sample(const Vector& state, Rng& rng) const = 0;
  virtual double log_density(const Vector& state, const Vector& action) const = 0;

  /// One action per column; column j draws only from rngs[j].
  virtual Matrix sample_batch(const Matrix& states, std::span<Rng* const> rngs) const;
};

/// a = gain * s + bias + noise_std .* xi.
class GaussianLinearPolicy final : public Policy {
 public:
  GaussianLinearPolicy(Matrix gain, Vector bias, Vector noise_std);

  std::size_t state_dim() const override { return static_cast<std::size_t>(gain_.cols()); }
  std::size_t action_dim() const override { return static_cast<std::size_t>(gain_.rows()); }
  Vector sample(const Vector& state, Rng& rng) const override;
  double log_density(const Vector& state, const Vector& action) const override;
  Matrix sample_batch(const Matrix& states, std::span<Rng* const> rngs) const override;

  Vector mean(const Vector& state) const { return gain_ * state + bias_; }
  const Matrix& gain() const { return gain_; }
  const Vector& bias() const { return bias_; }
  const Vector& noise_std() const { return noise_std_; }

 private:
  Matrix gain_;
  Vector bias_;
  Vector noise_std_;
};

struct NamedPolicy {
  std::string name;
  GaussianLinearPolicy policy;
  /// Interpolation weight toward a random gain (0 = regulator gain).
  double mix = 0.0;
};

struct PolicySet {
  std::vector<NamedPolicy> policies;
  std::size_t size() const { return policies.size(); }
};

/// Discounted LQR feedback gain K (a = K s) for the spec's quadratic cost.
Matrix discounted_lqr_gain(const LinearGaussianSpec& spec, double gamma);

struct PolicySetOptions {
  std::size_t count = 10;
  double quality_spread = 1.0;
  double random_gain_scale = 0.7;
  double min_noise_std = 0.1;
  double max_noise_std = 0.4;
  double gamma = 0.995;
  /// Random gains and their blends must keep the closed loop below this spectral radius.
  double max_closed_loop_radius = 0.98;
};

/**
 * Policies interpolating between the discounted LQR gain and random
 * stabilizing gains: policy i uses mix_i = quality_spread * i / (count - 1).
 * Noise levels are drawn per policy; any pair of policies whose analytic
 * values tie is regenerated.
 */
PolicySet make_policy_set(const LinearGaussianEnv& env, const PolicySetOptions& options, std::uint64_t seed);

/// The policy used to collect offline data: the middle member of the set.
const GaussianLinearPolicy& behavior_policy(const PolicySet& set);
/// The behavior policy with its action noise raised to at least `min_noise_std`.
GaussianLinearPolicy exploratory_behavior_policy(const PolicySet& set, double min_noise_std);

// ---------------------------------------------------------------------------
// Data collection and ground truth

struct CollectedData {
  TransitionBatch transitions;
  InitialStates initial_states;
};

/// Rolls episodes to the horizon, resetting after each; every reset state goes into S0.
CollectedData collect_dataset(const Environment& env, const Policy& behavior, std::size_t num_transitions,
                              std::uint64_t seed);

struct ValueEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Monte-Carlo mean of sum_t gamma^t r_{t+1} on the true environment.
ValueEstimate true_policy_value_mc(const Environment& env, const Policy& policy, double gamma,
                                   std::size_t horizon, std::size_t n_rollouts, std::uint64_t seed);

/// Exact expected discounted return by propagating the closed-loop state mean and covariance.
double analytic_value_linear_gaussian(const LinearGaussianEnv& env, const GaussianLinearPolicy& policy,
                                      double gamma, std::size_t horizon);

/// Q(s, a) = z'Wz + w'z + c with z = [s; a].
struct QuadraticQFunction {
  Matrix W;
  Vector w;
  double c = 0.0;
  std::size_t state_dim = 0;

  double operator()(const Vector& state, const Vector& action) const;
};

/**
 * Action-value of `policy` over `remaining` steps (the current step
 * included), by backward recursion of the quadratic value function.
 */
QuadraticQFunction linear_quadratic_q(const LinearGaussianEnv& env, const GaussianLinearPolicy& policy,
                                      double gamma, std::size_t remaining);

}  // namespace ardm
