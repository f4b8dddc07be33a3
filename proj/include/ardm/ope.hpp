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
#include "ardm/envs.hpp"

namespace ardm {

struct OpeConfig {
  std::size_t n_rollouts = 100;
  double gamma = 0.995;
  std::size_t horizon = 50;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

struct RolloutDivergence {
  std::size_t rollout = 0;
  std::size_t step = 0;
};

struct OpeReport {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t n_rollouts = 0;  // rollouts that finished and entered the estimate
  std::size_t requested = 0;
  double gamma = 0.0;
  std::size_t horizon = 0;
  std::vector<double> returns;  // per requested rollout; NaN where excluded
  std::vector<RolloutDivergence> divergences;
};

/**
 * Monte-Carlo return of `policy` under `model`: every rollout starts from a
 * state drawn uniformly from S0 and alternates policy and model draws for
 * `horizon` steps. Rollout i draws only from Rng::stream(seed, i); rollouts
 * whose state or reward becomes non-finite are excluded and listed.
 */
OpeReport mb_ope(const TransitionModel& model, const Policy& policy, const InitialStates& initial_states,
                 const OpeConfig& config);

/// As mb_ope, but each transition is drawn from a member chosen uniformly at random for that step.
OpeReport ensemble_mb_ope(std::span<const TransitionModel* const> models, const Policy& policy,
                          const InitialStates& initial_states, const OpeConfig& config);

// ---------------------------------------------------------------------------
// Metrics

/// Ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

double spearman_rho(std::span<const double> estimates, std::span<const double> truths);
double pearson_r(std::span<const double> estimates, std::span<const double> truths);
double absolute_error(std::span<const double> estimates, std::span<const double> truths);

struct Regret {
  double raw = 0.0;
  double normalized = 0.0;
};

/**
 * Best true value overall minus the best true value among the k highest
 * estimates. Equal estimates are ordered by index, earlier first.
 */
Regret regret_at_k(std::span<const double> estimates, std::span<const double> truths, std::size_t k);

using MetricFunction = std::function<double(std::span<const double>, std::span<const double>)>;

struct BootstrapResult {
  double mean = 0.0;
  double std = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;  // resamples on which the metric was undefined
};

/// Resamples (estimate, truth) pairs with replacement B times; std uses B - 1.
BootstrapResult bootstrap_metric(const MetricFunction& metric, std::span<const double> estimates,
                                 std::span<const double> truths, std::size_t resamples, std::uint64_t seed);

struct MetricEntry {
  std::string name;
  double value = 0.0;  // NaN when undefined on the full sample
  BootstrapResult bootstrap;
};

struct MetricsReport {
  std::vector<MetricEntry> metrics;  // spearman_rho, pearson_r, absolute_error, regret@k, normalized_regret@k
  std::size_t k = 5;
  const MetricEntry& get(const std::string& name) const;
};

MetricsReport compute_metrics(std::span<const double> estimates, std::span<const double> truths, std::size_t k,
                              std::size_t resamples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// NLL versus OPE quality

struct StudyModel {
  std::string id;
  std::string config_digest;
  double validation_nll = 0.0;
  std::shared_ptr<const TransitionModel> model;
};

struct StudyEstimate {
  std::size_t model = 0;
  std::size_t policy = 0;
  OpeReport report;
};

struct StudyRow {
  std::string model_id;
  std::string config_digest;
  double validation_nll = 0.0;
  double pearson = 0.0;   // NaN if undefined
  double spearman = 0.0;  // NaN if undefined
};

struct StudyResult {
  std::vector<StudyEstimate> estimates;  // model-major
  std::vector<StudyRow> rows;            // one per model
  /// Spearman correlation between -validation NLL and Pearson r; NaN if undefined.
  double trend = 0.0;
};

/**
 * Runs mb_ope for every (model, policy) pair and scores each model's
 * estimates against `truths`. Policy j uses the same rollout seed for every
 * model, so models are compared on common random numbers.
 */
StudyResult nll_vs_ope_study(const std::vector<StudyModel>& models, const PolicySet& policies,
                             std::span<const double> truths, const InitialStates& initial_states,
                             const OpeConfig& config);

}  // namespace ardm
