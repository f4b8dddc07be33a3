#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ardm/dataset.hpp"
#include "ardm/dynamics.hpp"
#include "ardm/envs.hpp"

namespace ardm {

struct MppiConfig {
  std::size_t iterations = 3;   // M
  std::size_t candidates = 16;  // N
  std::size_t horizon = 10;     // H
  double beta = 0.1;
  double sigma_sq = 0.01;
  double gamma = 0.995;

  void validate() const;
};

class Critic {
 public:
  virtual ~Critic() = default;
  virtual double operator()(const Vector& state, const Vector& action) const = 0;
};

class ZeroCritic final : public Critic {
 public:
  double operator()(const Vector&, const Vector&) const override { return 0.0; }
};

class QuadraticCritic final : public Critic {
 public:
  explicit QuadraticCritic(QuadraticQFunction q) : q_(std::move(q)) {}
  double operator()(const Vector& state, const Vector& action) const override { return q_(state, action); }
  const QuadraticQFunction& q() const { return q_; }

 private:
  QuadraticQFunction q_;
};

/// exp(R_n / beta) normalized; non-finite returns get weight 0. Throws PlanningError if none is finite.
std::vector<double> softmax_weights(std::span<const double> returns, double beta);

/// Everything the planner looked at, for inspection in tests.
struct MppiTrace {
  struct Iteration {
    std::vector<Matrix> actions;  // slot tau: action_dim x N
    std::vector<double> returns;  // NaN for excluded candidates
    std::vector<double> weights;
  };
  std::vector<Iteration> iterations;
  std::size_t chosen = 0;
};

/**
 * Truncated MPPI. Each of M iterations rolls N candidates for H model steps,
 * scores them with the discounted model reward plus gamma^H Q(s^H, a^H), and
 * replaces the proposal at every slot tau by the softmax(R / beta)-weighted
 * mixture of N(a^tau_n, sigma_sq I). The first iteration samples from the
 * policy, as does a^H. Returns a first action drawn with the final weights.
 */
Vector mppi_plan(const Vector& state, const Policy& policy, const TransitionModel& model, const Critic& critic,
                 const MppiConfig& config, std::uint64_t seed, MppiTrace* trace = nullptr);

struct ArmSummary {
  std::vector<double> returns;
  double mean = 0.0;
  double standard_error = 0.0;
};

struct PlannerEvaluation {
  ArmSummary planned;
  ArmSummary raw;
  double difference = 0.0;  // mean of planned - raw
  double difference_standard_error = 0.0;
  double z = 0.0;
};

/**
 * Runs the planner and the bare policy on the true environment. Episode e of
 * both arms shares its reset state and environment noise, so the difference
 * is a paired comparison.
 */
PlannerEvaluation evaluate_planner(const Environment& env, const Policy& policy, const TransitionModel& model,
                                   const Critic& critic, const MppiConfig& config, std::size_t n_episodes,
                                   std::uint64_t seed, std::size_t threads = 1);

/// ceil(ratio * N), ignoring rounding noise below 1e-9.
std::size_t augmentation_size(std::size_t original, double ratio);

/**
 * Original transitions (flag 0) followed by augmentation_size() synthetic
 * ones (flag 1): each takes a uniformly drawn dataset state, an action from
 * `policy` and a model transition.
 */
TransitionDataset augment_dataset(const TransitionBatch& dataset, const Policy& policy,
                                  const TransitionModel& model, double ratio, std::uint64_t seed);

}  // namespace ardm
