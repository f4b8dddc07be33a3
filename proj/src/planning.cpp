#include "ardm/planning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ardm/error.hpp"
#include "ardm/parallel.hpp"
#include "ardm/rng.hpp"

namespace ardm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t draw_categorical(std::span<const double> weights, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

ArmSummary summarize(std::vector<double> returns) {
  ArmSummary arm;
  const auto n = static_cast<double>(returns.size());
  double sum = 0.0;
  for (double r : returns) sum += r;
  arm.mean = sum / n;
  double ss = 0.0;
  for (double r : returns) ss += (r - arm.mean) * (r - arm.mean);
  arm.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  arm.returns = std::move(returns);
  return arm;
}

}  // namespace

void MppiConfig::validate() const {
  if (iterations < 1) throw ConfigError("MPPI: M must be at least 1");
  if (candidates < 1) throw ConfigError("MPPI: N must be at least 1");
  if (!(beta > 0.0)) throw ConfigError("MPPI: beta must be positive");
  if (!(sigma_sq >= 0.0)) throw ConfigError("MPPI: sigma_sq must be non-negative");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("MPPI: gamma must lie in [0, 1]");
}

std::vector<double> softmax_weights(std::span<const double> returns, double beta) {
  if (!(beta > 0.0)) throw ConfigError("softmax_weights: beta must be positive");
  double top = -std::numeric_limits<double>::infinity();
  for (double r : returns) {
    if (std::isfinite(r)) top = std::max(top, r);
  }
  if (!std::isfinite(top)) throw PlanningError("MPPI: every candidate rollout was excluded");
  std::vector<double> w(returns.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < returns.size(); ++i) {
    if (!std::isfinite(returns[i])) continue;
    w[i] = std::exp((returns[i] - top) / beta);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

Vector mppi_plan(const Vector& state, const Policy& policy, const TransitionModel& model, const Critic& critic,
                 const MppiConfig& config, std::uint64_t seed, MppiTrace* trace) {
  config.validate();
  const std::size_t n = model.state_dim();
  const std::size_t m = model.action_dim();
  require_dim(state.size(), static_cast<std::ptrdiff_t>(n), "planner state");
  require_dim(static_cast<std::ptrdiff_t>(policy.state_dim()), static_cast<std::ptrdiff_t>(n), "policy state");
  require_dim(static_cast<std::ptrdiff_t>(policy.action_dim()), static_cast<std::ptrdiff_t>(m), "policy action");

  const std::size_t N = config.candidates;
  const std::size_t H = config.horizon;
  const auto cols = static_cast<Eigen::Index>(N);
  const double sigma = std::sqrt(config.sigma_sq);
  // a proposal exists for slots 0..H-1, or for the single bootstrap slot when H == 0
  const std::size_t slots = std::max<std::size_t>(H, 1);

  std::vector<Matrix> previous_actions;
  std::vector<double> weights;
  if (trace) trace->iterations.clear();

  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::vector<Rng> rngs;
    rngs.reserve(N);
    for (std::size_t c = 0; c < N; ++c) rngs.push_back(Rng::stream(seed, it, c));
    std::vector<Rng*> streams(N);
    for (std::size_t c = 0; c < N; ++c) streams[c] = &rngs[c];

    auto propose = [&](std::size_t tau, const Matrix& states) -> Matrix {
      if (it == 0 || tau >= slots) return policy.sample_batch(states, streams);
      Matrix actions(static_cast<Eigen::Index>(m), cols);
      for (std::size_t c = 0; c < N; ++c) {
        const std::size_t k = draw_categorical(weights, rngs[c]);
        for (Eigen::Index i = 0; i < actions.rows(); ++i) {
          actions(i, static_cast<Eigen::Index>(c)) =
              previous_actions[tau](i, static_cast<Eigen::Index>(k)) + sigma * rngs[c].normal();
        }
      }
      return actions;
    };

    Matrix states = state.replicate(1, cols);
    std::vector<double> returns(N, 0.0);
    std::vector<Matrix> actions_taken;
    actions_taken.reserve(slots);
    double discount = 1.0;
    Matrix next;
    Vector rewards;
    for (std::size_t tau = 0; tau < H; ++tau) {
      Matrix actions = propose(tau, states);
      for (std::size_t c = 0; c < N; ++c) {
        if (!actions.col(static_cast<Eigen::Index>(c)).allFinite()) returns[c] = kNaN;
      }
      model.sample_batch(states, actions, streams, next, rewards);
      for (std::size_t c = 0; c < N; ++c) {
        const auto j = static_cast<Eigen::Index>(c);
        if (!std::isfinite(rewards(j)) || !next.col(j).allFinite()) returns[c] = kNaN;
        if (std::isnan(returns[c])) {
          next.col(j).setZero();
          continue;
        }
        returns[c] += discount * rewards(j);
      }
      discount *= config.gamma;
      actions_taken.push_back(std::move(actions));
      states.swap(next);
    }
    const Matrix final_actions = propose(H, states);
    if (H == 0) actions_taken.push_back(final_actions);
    for (std::size_t c = 0; c < N; ++c) {
      if (std::isnan(returns[c])) continue;
      const auto j = static_cast<Eigen::Index>(c);
      const double q = critic(states.col(j), final_actions.col(j));
      returns[c] = std::isfinite(q) ? returns[c] + discount * q : kNaN;
    }
    weights = softmax_weights(returns, config.beta);
    if (trace) trace->iterations.push_back({actions_taken, returns, weights});
    previous_actions = std::move(actions_taken);
  }

  Rng pick_rng = Rng::stream(seed, 0xF17A1, config.iterations);
  const std::size_t chosen = draw_categorical(weights, pick_rng);
  if (trace) trace->chosen = chosen;
  return previous_actions.front().col(static_cast<Eigen::Index>(chosen));
}

PlannerEvaluation evaluate_planner(const Environment& env, const Policy& policy, const TransitionModel& model,
                                   const Critic& critic, const MppiConfig& config, std::size_t n_episodes,
                                   std::uint64_t seed, std::size_t threads) {
  if (n_episodes < 2) throw ConfigError("evaluate_planner: need at least 2 episodes");
  config.validate();
  require_dim(static_cast<std::ptrdiff_t>(model.state_dim()), static_cast<std::ptrdiff_t>(env.state_dim()),
              "model state");
  require_dim(static_cast<std::ptrdiff_t>(model.action_dim()), static_cast<std::ptrdiff_t>(env.action_dim()),
              "model action");
  std::vector<double> planned(n_episodes);
  std::vector<double> raw(n_episodes);
  parallel_for(n_episodes, threads, [&](std::size_t e) {
    for (int arm = 0; arm < 2; ++arm) {
      Rng env_rng = Rng::stream(seed, e, 0);
      Rng policy_rng = Rng::stream(seed, e, 1);
      Vector s = env.reset(env_rng);
      double total = 0.0;
      double discount = 1.0;
      for (std::size_t t = 0; t < env.horizon(); ++t) {
        const Vector a = arm == 0 ? mppi_plan(s, policy, model, critic, config, mix64(seed ^ mix64(e)) + t)
                                  : policy.sample(s, policy_rng);
        auto [next, r] = env.step(s, a, env_rng);
        total += discount * r;
        discount *= config.gamma;
        s = std::move(next);
      }
      (arm == 0 ? planned : raw)[e] = total;
    }
  });
  std::vector<double> diff(n_episodes);
  for (std::size_t e = 0; e < n_episodes; ++e) diff[e] = planned[e] - raw[e];
  PlannerEvaluation out;
  out.planned = summarize(std::move(planned));
  out.raw = summarize(std::move(raw));
  const ArmSummary d = summarize(diff);
  out.difference = d.mean;
  out.difference_standard_error = d.standard_error;
  if (d.standard_error > 0.0) {
    out.z = d.mean / d.standard_error;
  } else {
    out.z = d.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), d.mean);
  }
  return out;
}

std::size_t augmentation_size(std::size_t original, double ratio) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) throw ConfigError("augmentation ratio must be positive");
  return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(original) - 1e-9));
}

TransitionDataset augment_dataset(const TransitionBatch& dataset, const Policy& policy,
                                  const TransitionModel& model, double ratio, std::uint64_t seed) {
  if (dataset.empty()) throw EmptyInputError("augment_dataset: empty dataset");
  const std::size_t count = augmentation_size(dataset.size(), ratio);
  const std::size_t n = dataset.state_dim();
  const std::size_t m = dataset.action_dim();
  require_dim(static_cast<std::ptrdiff_t>(model.state_dim()), static_cast<std::ptrdiff_t>(n), "model state");
  require_dim(static_cast<std::ptrdiff_t>(model.action_dim()), static_cast<std::ptrdiff_t>(m), "model action");
  require_dim(static_cast<std::ptrdiff_t>(policy.state_dim()), static_cast<std::ptrdiff_t>(n), "policy state");

  TransitionDataset synthetic;
  synthetic.transitions = TransitionBatch(n, m, count);
  synthetic.synthetic.assign(count, 1);
  constexpr std::size_t kChunk = 256;
  for (std::size_t first = 0; first < count; first += kChunk) {
    const std::size_t len = std::min(kChunk, count - first);
    std::vector<Rng> rngs;
    rngs.reserve(len);
    for (std::size_t j = 0; j < len; ++j) rngs.push_back(Rng::stream(seed, first + j));
    std::vector<Rng*> streams(len);
    Matrix states(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(len));
    for (std::size_t j = 0; j < len; ++j) {
      streams[j] = &rngs[j];
      states.col(static_cast<Eigen::Index>(j)) = dataset.states.col(static_cast<Eigen::Index>(rngs[j].index(dataset.size())));
    }
    const Matrix actions = policy.sample_batch(states, streams);
    Matrix next;
    Vector rewards;
    model.sample_batch(states, actions, streams, next, rewards);
    const auto lo = static_cast<Eigen::Index>(first);
    const auto w = static_cast<Eigen::Index>(len);
    synthetic.transitions.states.middleCols(lo, w) = states;
    synthetic.transitions.actions.middleCols(lo, w) = actions;
    synthetic.transitions.next_states.middleCols(lo, w) = next;
    synthetic.transitions.rewards.segment(lo, w) = rewards;
  }
  TransitionDataset original;
  original.transitions = dataset;
  original.synthetic.assign(dataset.size(), 0);
  return TransitionDataset::concat(original, synthetic);
}

}  // namespace ardm
