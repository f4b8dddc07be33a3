#include "ardm/ope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ardm/error.hpp"
#include "ardm/parallel.hpp"
#include "ardm/rng.hpp"

namespace ardm {

namespace {

constexpr std::size_t kRolloutChunk = 64;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_same_length(std::span<const double> a, std::span<const double> b, std::size_t min_len,
                         const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": estimates and truths differ in length (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
  if (a.size() < min_len) {
    throw ShapeError(std::string(what) + ": need at least " + std::to_string(min_len) + " pairs");
  }
}

struct ChunkOutcome {
  std::vector<RolloutDivergence> divergences;
};

OpeReport run_rollouts(std::span<const TransitionModel* const> models, const Policy& policy,
                       const InitialStates& initial_states, const OpeConfig& config) {
  config.validate();
  if (models.empty()) throw ConfigError("model-based OPE: no models");
  const std::size_t n = models.front()->state_dim();
  const std::size_t m = models.front()->action_dim();
  for (const TransitionModel* model : models) {
    if (model->state_dim() != n || model->action_dim() != m) {
      throw ShapeError("model-based OPE: ensemble members differ in dimensions");
    }
  }
  require_dim(static_cast<std::ptrdiff_t>(policy.state_dim()), static_cast<std::ptrdiff_t>(n), "policy state");
  require_dim(static_cast<std::ptrdiff_t>(policy.action_dim()), static_cast<std::ptrdiff_t>(m), "policy action");
  if (initial_states.size() == 0) throw EmptyInputError("model-based OPE: empty initial-state set");
  require_dim(static_cast<std::ptrdiff_t>(initial_states.state_dim()), static_cast<std::ptrdiff_t>(n),
              "initial state");

  OpeReport report;
  report.requested = config.n_rollouts;
  report.gamma = config.gamma;
  report.horizon = config.horizon;
  report.returns.assign(config.n_rollouts, 0.0);
  if (config.horizon == 0) {
    report.n_rollouts = config.n_rollouts;
    return report;
  }

  const std::size_t chunks = (config.n_rollouts + kRolloutChunk - 1) / kRolloutChunk;
  std::vector<ChunkOutcome> outcomes(chunks);
  const std::size_t s0_count = initial_states.size();

  parallel_for(chunks, config.threads, [&](std::size_t chunk) {
    const std::size_t first = chunk * kRolloutChunk;
    const std::size_t count = std::min(kRolloutChunk, config.n_rollouts - first);
    const auto cols = static_cast<Eigen::Index>(count);
    std::vector<Rng> rngs;
    rngs.reserve(count);
    for (std::size_t j = 0; j < count; ++j) rngs.push_back(Rng::stream(config.seed, first + j));
    std::vector<Rng*> streams(count);
    for (std::size_t j = 0; j < count; ++j) streams[j] = &rngs[j];

    Matrix states(static_cast<Eigen::Index>(n), cols);
    for (std::size_t j = 0; j < count; ++j) {
      states.col(static_cast<Eigen::Index>(j)) = initial_states.states.col(static_cast<Eigen::Index>(rngs[j].index(s0_count)));
    }
    std::vector<char> alive(count, 1);
    std::vector<double> discount(count, 1.0);
    Matrix next;
    Vector rewards;
    std::vector<std::size_t> member(count, 0);

    for (std::size_t t = 0; t < config.horizon; ++t) {
      if (models.size() > 1) {
        for (std::size_t j = 0; j < count; ++j) member[j] = rngs[j].index(models.size());
      }
      const Matrix actions = policy.sample_batch(states, streams);
      if (models.size() == 1) {
        models.front()->sample_batch(states, actions, streams, next, rewards);
      } else {
        next.resize(static_cast<Eigen::Index>(n), cols);
        rewards.resize(cols);
        for (std::size_t k = 0; k < models.size(); ++k) {
          std::vector<Eigen::Index> idx;
          std::vector<Rng*> sub_streams;
          for (std::size_t j = 0; j < count; ++j) {
            if (member[j] == k) {
              idx.push_back(static_cast<Eigen::Index>(j));
              sub_streams.push_back(streams[j]);
            }
          }
          if (idx.empty()) continue;
          Matrix sub_next;
          Vector sub_rewards;
          models[k]->sample_batch(states(Eigen::all, idx), actions(Eigen::all, idx), sub_streams, sub_next,
                                  sub_rewards);
          for (std::size_t q = 0; q < idx.size(); ++q) {
            next.col(idx[q]) = sub_next.col(static_cast<Eigen::Index>(q));
            rewards(idx[q]) = sub_rewards(static_cast<Eigen::Index>(q));
          }
        }
      }
      for (std::size_t j = 0; j < count; ++j) {
        if (!alive[j]) continue;
        const auto c = static_cast<Eigen::Index>(j);
        if (!std::isfinite(rewards(c)) || !next.col(c).allFinite()) {
          alive[j] = 0;
          report.returns[first + j] = kNaN;
          outcomes[chunk].divergences.push_back({first + j, t});
          next.col(c).setZero();
          continue;
        }
        report.returns[first + j] += discount[j] * rewards(c);
        discount[j] *= config.gamma;
      }
      for (std::size_t j = 0; j < count; ++j) {
        if (!alive[j]) next.col(static_cast<Eigen::Index>(j)).setZero();
      }
      states.swap(next);
    }
  });

  for (auto& outcome : outcomes) {
    report.divergences.insert(report.divergences.end(), outcome.divergences.begin(), outcome.divergences.end());
  }
  double sum = 0.0;
  std::size_t used = 0;
  for (double r : report.returns) {
    if (std::isnan(r)) continue;
    sum += r;
    ++used;
  }
  report.n_rollouts = used;
  if (used == 0) throw DivergenceError("model-based OPE: every rollout diverged");
  report.value = sum / static_cast<double>(used);
  if (used >= 2) {
    double ss = 0.0;
    for (double r : report.returns) {
      if (!std::isnan(r)) ss += (r - report.value) * (r - report.value);
    }
    report.standard_error = std::sqrt(ss / static_cast<double>(used - 1)) / std::sqrt(static_cast<double>(used));
  }
  return report;
}

}  // namespace

void OpeConfig::validate() const {
  if (n_rollouts < 2) throw ConfigError("OPE: n_rollouts must be at least 2");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("OPE: gamma must lie in [0, 1]");
}

OpeReport mb_ope(const TransitionModel& model, const Policy& policy, const InitialStates& initial_states,
                 const OpeConfig& config) {
  const TransitionModel* models[] = {&model};
  return run_rollouts(models, policy, initial_states, config);
}

OpeReport ensemble_mb_ope(std::span<const TransitionModel* const> models, const Policy& policy,
                          const InitialStates& initial_states, const OpeConfig& config) {
  return run_rollouts(models, policy, initial_states, config);
}

// ---------------------------------------------------------------------------

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t q = i; q <= j; ++q) ranks[order[q]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson_r(std::span<const double> estimates, std::span<const double> truths) {
  require_same_length(estimates, truths, 2, "pearson_r");
  const auto n = static_cast<double>(estimates.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    mx += estimates[i];
    my += truths[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double dx = estimates[i] - mx;
    const double dy = truths[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("pearson_r: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman_rho(std::span<const double> estimates, std::span<const double> truths) {
  require_same_length(estimates, truths, 2, "spearman_rho");
  const std::vector<double> re = average_ranks(estimates);
  const std::vector<double> rt = average_ranks(truths);
  return pearson_r(re, rt);
}

double absolute_error(std::span<const double> estimates, std::span<const double> truths) {
  require_same_length(estimates, truths, 1, "absolute_error");
  double sum = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) sum += std::abs(estimates[i] - truths[i]);
  return sum / static_cast<double>(estimates.size());
}

Regret regret_at_k(std::span<const double> estimates, std::span<const double> truths, std::size_t k) {
  require_same_length(estimates, truths, 1, "regret_at_k");
  if (k < 1 || k > estimates.size()) {
    throw ConfigError("regret_at_k: k must lie in [1, " + std::to_string(estimates.size()) + "]");
  }
  std::vector<std::size_t> order(estimates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return estimates[a] > estimates[b]; });
  double best_in_top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) best_in_top = std::max(best_in_top, truths[order[i]]);
  const auto [lo, hi] = std::minmax_element(truths.begin(), truths.end());
  Regret r;
  r.raw = *hi - best_in_top;
  const double range = *hi - *lo;
  r.normalized = range == 0.0 ? 0.0 : r.raw / range;
  return r;
}

BootstrapResult bootstrap_metric(const MetricFunction& metric, std::span<const double> estimates,
                                 std::span<const double> truths, std::size_t resamples, std::uint64_t seed) {
  require_same_length(estimates, truths, 1, "bootstrap_metric");
  if (resamples < 2) throw ConfigError("bootstrap_metric: need at least 2 resamples");
  const std::size_t n = estimates.size();
  std::vector<double> values;
  values.reserve(resamples);
  std::vector<double> e(n);
  std::vector<double> t(n);
  BootstrapResult result;
  for (std::size_t b = 0; b < resamples; ++b) {
    Rng rng = Rng::stream(seed, b);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pick = rng.index(n);
      e[i] = estimates[pick];
      t[i] = truths[pick];
    }
    try {
      values.push_back(metric(e, t));
    } catch (const UndefinedCorrelationError&) {
      ++result.skipped;
    }
  }
  result.used = values.size();
  if (values.empty()) throw UndefinedCorrelationError("bootstrap_metric: every resample was degenerate");
  double sum = 0.0;
  for (double v : values) sum += v;
  result.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - result.mean) * (v - result.mean);
    result.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return result;
}

const MetricEntry& MetricsReport::get(const std::string& name) const {
  for (const auto& entry : metrics) {
    if (entry.name == name) return entry;
  }
  throw ConfigError("metrics report has no entry '" + name + "'");
}

MetricsReport compute_metrics(std::span<const double> estimates, std::span<const double> truths, std::size_t k,
                              std::size_t resamples, std::uint64_t seed) {
  require_same_length(estimates, truths, 2, "compute_metrics");
  MetricsReport report;
  report.k = std::clamp<std::size_t>(k, 1, estimates.size());
  const std::size_t kk = report.k;
  const std::string suffix = "@" + std::to_string(kk);
  const std::vector<std::pair<std::string, MetricFunction>> table = {
      {"spearman_rho", spearman_rho},
      {"pearson_r", pearson_r},
      {"absolute_error", absolute_error},
      {"regret" + suffix, [kk](auto e, auto t) { return regret_at_k(e, t, kk).raw; }},
      {"normalized_regret" + suffix, [kk](auto e, auto t) { return regret_at_k(e, t, kk).normalized; }},
  };
  for (std::size_t i = 0; i < table.size(); ++i) {
    MetricEntry entry;
    entry.name = table[i].first;
    try {
      entry.value = table[i].second(estimates, truths);
    } catch (const UndefinedCorrelationError&) {
      entry.value = kNaN;
    }
    try {
      entry.bootstrap = bootstrap_metric(table[i].second, estimates, truths, resamples, seed);
    } catch (const UndefinedCorrelationError&) {
      entry.bootstrap = {kNaN, kNaN, 0, resamples};
    }
    report.metrics.push_back(std::move(entry));
  }
  return report;
}

// ---------------------------------------------------------------------------

StudyResult nll_vs_ope_study(const std::vector<StudyModel>& models, const PolicySet& policies,
                             std::span<const double> truths, const InitialStates& initial_states,
                             const OpeConfig& config) {
  if (models.size() < 2) throw ConfigError("nll_vs_ope_study: need at least 2 models");
  if (policies.size() < 2) throw ConfigError("nll_vs_ope_study: need at least 2 policies");
  if (truths.size() != policies.size()) throw ShapeError("nll_vs_ope_study: one true value per policy required");
  config.validate();

  const std::size_t pairs = models.size() * policies.size();
  StudyResult result;
  result.estimates.resize(pairs);
  OpeConfig inner = config;
  inner.threads = 1;
  parallel_for(pairs, config.threads, [&](std::size_t idx) {
    const std::size_t mi = idx / policies.size();
    const std::size_t pj = idx % policies.size();
    OpeConfig pair_config = inner;
    pair_config.seed = mix64(config.seed ^ mix64(pj + 1));
    result.estimates[idx] = {mi, pj, mb_ope(*models[mi].model, policies.policies[pj].policy, initial_states,
                                            pair_config)};
  });

  std::vector<double> neg_nll;
  std::vector<double> pearsons;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    std::vector<double> est(policies.size());
    for (std::size_t pj = 0; pj < policies.size(); ++pj) est[pj] = result.estimates[mi * policies.size() + pj].report.value;
    StudyRow row{models[mi].id, models[mi].config_digest, models[mi].validation_nll, kNaN, kNaN};
    try {
      row.pearson = pearson_r(est, truths);
    } catch (const UndefinedCorrelationError&) {
    }
    try {
      row.spearman = spearman_rho(est, truths);
    } catch (const UndefinedCorrelationError&) {
    }
    if (!std::isnan(row.pearson) && std::isfinite(row.validation_nll)) {
      neg_nll.push_back(-row.validation_nll);
      pearsons.push_back(row.pearson);
    }
    result.rows.push_back(std::move(row));
  }
  result.trend = kNaN;
  if (neg_nll.size() >= 2) {
    try {
      result.trend = spearman_rho(neg_nll, pearsons);
    } catch (const UndefinedCorrelationError&) {
    }
  }
  return result;
}

}  // namespace ardm
