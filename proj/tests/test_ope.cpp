#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "ardm/envs.hpp"
#include "ardm/error.hpp"
#include "ardm/ope.hpp"
#include "ardm/rng.hpp"

using namespace ardm;

namespace {

// State stays put, reward is a constant.
class ConstantRewardModel : public TransitionModel {
 public:
  explicit ConstantRewardModel(double r, std::size_t n = 1) : r_(r), n_(n) {}
  std::size_t state_dim() const override { return n_; }
  std::size_t action_dim() const override { return 1; }
  std::pair<Vector, double> sample(const Vector& s, const Vector&, Rng&) const override { return {s, r_}; }

 private:
  double r_;
  std::size_t n_;
};

// Blows up with probability 0.2 per step.
class FlakyModel : public TransitionModel {
 public:
  std::size_t state_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }
  std::pair<Vector, double> sample(const Vector& s, const Vector&, Rng& rng) const override {
    if (rng.uniform() < 0.2) return {Vector::Constant(1, INFINITY), 1.0};
    return {s, 1.0};
  }
};

GaussianLinearPolicy scalar_policy() { return GaussianLinearPolicy(Matrix::Zero(1, 1), Vector::Zero(1), Vector::Ones(1)); }

InitialStates one_state(std::size_t n = 1) {
  InitialStates s;
  s.states = Matrix::Zero(static_cast<Eigen::Index>(n), 1);
  return s;
}

OpeConfig config(std::size_t rollouts, double gamma, std::size_t horizon, std::uint64_t seed = 1) {
  OpeConfig c;
  c.n_rollouts = rollouts;
  c.gamma = gamma;
  c.horizon = horizon;
  c.seed = seed;
  return c;
}

// Stable 2-state instance with a fixed start so S0 = {mu0} is exact.
LinearGaussianSpec fixed_start_spec() {
  LinearGaussianSpec s;
  s.A = (Matrix(2, 2) << 0.8, 0.1, 0.0, 0.7).finished();
  s.B = (Matrix(2, 1) << 0.0, 0.5).finished();
  s.noise_cov = (Matrix(2, 2) << 0.2, 0.1, 0.1, 0.2).finished();
  s.Q = Matrix::Identity(2, 2);
  s.R = 0.1 * Matrix::Identity(1, 1);
  s.init_mean = (Vector(2) << 1.0, -0.5).finished();
  s.init_cov = Matrix::Zero(2, 2);
  s.reward_noise_std = 0.1;
  s.horizon = 15;
  return s;
}

double direct_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

}  // namespace

TEST(MbOpe, EmptyHorizon) {
  const OpeReport r = mb_ope(ConstantRewardModel(1.0), scalar_policy(), one_state(), config(10, 0.9, 0));
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.standard_error, 0.0);
}

TEST(MbOpe, GeometricSum) {
  const OpeReport r = mb_ope(ConstantRewardModel(1.0), scalar_policy(), one_state(), config(4, 0.995, 1000));
  EXPECT_NEAR(r.value, (1 - std::pow(0.995, 1000)) / 0.005, 1e-9);
  EXPECT_NEAR(r.value, 198.669, 1e-3);
  EXPECT_EQ(r.standard_error, 0.0);
  EXPECT_EQ(r.n_rollouts, 4u);
}

TEST(MbOpe, RejectsBadInputs) {
  EXPECT_THROW(mb_ope(ConstantRewardModel(1.0), scalar_policy(), one_state(), config(1, 0.9, 5)), ConfigError);
  EXPECT_THROW(mb_ope(ConstantRewardModel(1.0), scalar_policy(), one_state(), config(5, 1.5, 5)), ConfigError);
  EXPECT_THROW(mb_ope(ConstantRewardModel(1.0), scalar_policy(), InitialStates{Matrix(1, 0)}, config(5, 0.9, 5)), EmptyInputError);
  EXPECT_THROW(mb_ope(ConstantRewardModel(1.0, 2), scalar_policy(), one_state(2), config(5, 0.9, 5)), ShapeError);
}

TEST(MbOpe, StandardErrorIsSampleStdOverRootN) {
  LinearGaussianEnv env(fixed_start_spec());
  auto model = std::make_shared<LinearGaussianEnv>(fixed_start_spec());
  GaussianLinearPolicy pi(Matrix::Constant(1, 2, -0.2), Vector::Zero(1), Vector::Constant(1, 0.3));
  InitialStates s0{env.spec().init_mean};
  const OpeReport r = mb_ope(EnvironmentModel(model), pi, s0, config(500, 0.99, 15, 3));
  ASSERT_EQ(r.returns.size(), 500u);
  double mean = 0.0;
  for (double v : r.returns) mean += v;
  mean /= 500;
  double ss = 0.0;
  for (double v : r.returns) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(r.value, mean, 1e-12);
  EXPECT_NEAR(r.standard_error, std::sqrt(ss / 499) / std::sqrt(500.0), 1e-12);
}

TEST(MbOpe, PerfectModelIsUnbiased) {
  auto env = std::make_shared<LinearGaussianEnv>(fixed_start_spec());
  GaussianLinearPolicy pi(Matrix::Constant(1, 2, -0.3), Vector::Constant(1, 0.1), Vector::Constant(1, 0.4));
  const double truth = analytic_value_linear_gaussian(*env, pi, 0.99, 15);
  InitialStates s0{env->spec().init_mean};
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const OpeReport r = mb_ope(EnvironmentModel(env), pi, s0, config(1000, 0.99, 15, seed));
    if (std::abs(r.value - truth) <= 3 * r.standard_error) ++inside;
  }
  EXPECT_GE(inside, 18);
  const ValueEstimate mc = true_policy_value_mc(*env, pi, 0.99, 15, 20000, 99);
  const OpeReport r = mb_ope(EnvironmentModel(env), pi, s0, config(20000, 0.99, 15, 7));
  EXPECT_LE(std::abs(r.value - mc.value), 3 * std::hypot(r.standard_error, mc.standard_error));
}

TEST(MbOpe, DeterministicAndThreadIndependent) {
  auto env = std::make_shared<LinearGaussianEnv>(default_ope_env_spec());
  GaussianLinearPolicy pi(Matrix::Zero(2, 4), Vector::Zero(2), Vector::Constant(2, 0.3));
  Rng rng(1);
  InitialStates s0;
  s0.states.resize(4, 7);
  for (auto& v : s0.states.reshaped()) v = rng.normal();
  OpeConfig c = config(200, 0.995, 30, 5);
  const OpeReport a = mb_ope(EnvironmentModel(env), pi, s0, c);
  const OpeReport b = mb_ope(EnvironmentModel(env), pi, s0, c);
  c.threads = 3;
  const OpeReport t = mb_ope(EnvironmentModel(env), pi, s0, c);
  EXPECT_EQ(a.returns, b.returns);
  EXPECT_EQ(a.returns, t.returns);
  EXPECT_EQ(a.value, t.value);
  EXPECT_EQ(a.standard_error, t.standard_error);
}

TEST(MbOpe, DivergedRolloutsAreExcludedAndCounted) {
  const OpeReport r = mb_ope(FlakyModel(), scalar_policy(), one_state(), config(200, 1.0, 5, 2));
  EXPECT_EQ(r.requested, 200u);
  EXPECT_EQ(r.divergences.size() + r.n_rollouts, 200u);
  EXPECT_GT(r.divergences.size(), 0u);
  std::size_t nan_count = 0;
  for (double v : r.returns) {
    if (std::isnan(v)) {
      ++nan_count;
    } else {
      EXPECT_EQ(v, 5.0);
    }
  }
  EXPECT_EQ(nan_count, r.divergences.size());
  for (const auto& d : r.divergences) {
    EXPECT_LT(d.step, 5u);
    EXPECT_TRUE(std::isnan(r.returns[d.rollout]));
  }
  EXPECT_EQ(r.value, 5.0);
}

TEST(EnsembleOpe, SingletonMatchesSingleModel) {
  auto env = std::make_shared<LinearGaussianEnv>(fixed_start_spec());
  EnvironmentModel model(env);
  GaussianLinearPolicy pi(Matrix::Constant(1, 2, -0.3), Vector::Zero(1), Vector::Constant(1, 0.4));
  InitialStates s0{env->spec().init_mean};
  const TransitionModel* members[] = {&model};
  const OpeReport a = ensemble_mb_ope(members, pi, s0, config(300, 0.99, 15, 4));
  const OpeReport b = mb_ope(model, pi, s0, config(300, 0.99, 15, 4));
  EXPECT_EQ(a.returns, b.returns);
}

TEST(EnsembleOpe, DuplicateMembersKeepDistribution) {
  auto env = std::make_shared<LinearGaussianEnv>(fixed_start_spec());
  EnvironmentModel model(env);
  GaussianLinearPolicy pi(Matrix::Constant(1, 2, -0.3), Vector::Zero(1), Vector::Constant(1, 0.4));
  InitialStates s0{env->spec().init_mean};
  const TransitionModel* members[] = {&model, &model, &model, &model};
  const OpeReport e = ensemble_mb_ope(members, pi, s0, config(10000, 0.99, 15, 4));
  const OpeReport s = mb_ope(model, pi, s0, config(10000, 0.99, 15, 5));
  EXPECT_LT(std::abs(e.value - s.value), 3 * std::hypot(e.standard_error, s.standard_error));
}

TEST(EnsembleOpe, MixtureMean) {
  ConstantRewardModel zero(0.0), two(2.0);
  const TransitionModel* members[] = {&zero, &two};
  const OpeReport r = ensemble_mb_ope(members, scalar_policy(), one_state(), config(10000, 1.0, 1, 6));
  EXPECT_NEAR(r.value, 1.0, 3 * r.standard_error);
  EXPECT_NEAR(r.standard_error, 1.0 / 100.0, 1e-3);
  ConstantRewardModel wide(1.0, 2);
  const TransitionModel* mixed[] = {&zero, &wide};
  EXPECT_THROW(ensemble_mb_ope(mixed, scalar_policy(), one_state(), config(10, 1.0, 1)), ShapeError);
  EXPECT_THROW(ensemble_mb_ope(std::span<const TransitionModel* const>{}, scalar_policy(), one_state(), config(10, 1.0, 1)), ConfigError);
}

TEST(Metrics, Spearman) {
  const std::vector<double> a{1, 2, 3, 4}, rev{4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman_rho(a, a), 1.0);
  EXPECT_DOUBLE_EQ(spearman_rho(a, rev), -1.0);
  EXPECT_DOUBLE_EQ(spearman_rho(std::vector<double>{3, 1, 2}, std::vector<double>{30, 10, 20}), 1.0);
  EXPECT_EQ(average_ranks(std::vector<double>{5, 1, 5, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
  EXPECT_THROW(spearman_rho(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Metrics, Pearson) {
  std::vector<double> x, affine, neg;
  for (int i = 0; i < 7; ++i) {
    x.push_back(i * 0.7 - 1);
    affine.push_back(2 * x.back() + 1);
    neg.push_back(-x.back());
  }
  EXPECT_NEAR(pearson_r(x, affine), 1.0, 1e-15);
  EXPECT_NEAR(pearson_r(x, neg), -1.0, 1e-15);
  Rng rng(3);
  std::vector<double> u(100), v(100);
  for (int i = 0; i < 100; ++i) {
    u[i] = rng.normal();
    v[i] = 0.5 * u[i] + rng.normal();
  }
  EXPECT_NEAR(pearson_r(u, v), direct_pearson(u, v), 1e-12);
  EXPECT_THROW(pearson_r(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedCorrelationError);
}

TEST(Metrics, AbsoluteError) {
  const std::vector<double> t{1, 2, 3};
  EXPECT_EQ(absolute_error(t, t), 0.0);
  EXPECT_EQ(absolute_error(std::vector<double>{0}, std::vector<double>{3}), 3.0);
  EXPECT_EQ(absolute_error(std::vector<double>{1, 2}, std::vector<double>{2, 4}), 1.5);
  EXPECT_THROW(absolute_error(std::vector<double>{1}, std::vector<double>{1, 2}), ShapeError);
}

TEST(Metrics, Regret) {
  const std::vector<double> truths{10, 0, 5}, est{0, 10, 5};
  const Regret r = regret_at_k(est, truths, 1);
  EXPECT_EQ(r.raw, 10.0);
  EXPECT_EQ(r.normalized, 1.0);
  EXPECT_EQ(regret_at_k(est, truths, 3).raw, 0.0);
  EXPECT_EQ(regret_at_k(truths, truths, 1).raw, 0.0);
  EXPECT_EQ(regret_at_k(est, truths, 2).raw, 5.0);
  EXPECT_EQ(regret_at_k(est, truths, 2).normalized, 0.5);
  const std::vector<double> flat{2, 2, 2};
  EXPECT_EQ(regret_at_k(est, flat, 1).normalized, 0.0);
  EXPECT_THROW(regret_at_k(est, truths, 0), ConfigError);
  EXPECT_THROW(regret_at_k(est, truths, 4), ConfigError);
}

TEST(Metrics, RankInvarianceAndMonotoneRegret) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> est(8), truth(8), warped(8);
    for (int i = 0; i < 8; ++i) {
      truth[i] = rng.normal();
      est[i] = truth[i] + rng.normal();
      warped[i] = std::exp(3 * est[i]) - 7;
    }
    EXPECT_NEAR(spearman_rho(est, truth), spearman_rho(warped, truth), 1e-12);
    double prev = INFINITY;
    for (std::size_t k = 1; k <= 8; ++k) {
      const Regret r = regret_at_k(est, truth, k);
      EXPECT_EQ(r.raw, regret_at_k(warped, truth, k).raw);
      EXPECT_LE(r.raw, prev);
      EXPECT_GE(r.normalized, 0.0);
      EXPECT_LE(r.normalized, 1.0);
      prev = r.raw;
      const std::size_t best = static_cast<std::size_t>(std::max_element(truth.begin(), truth.end()) - truth.begin());
      std::size_t better = 0;
      for (int i = 0; i < 8; ++i) better += est[i] > est[best];
      if (better < k) EXPECT_EQ(r.normalized, 0.0);
    }
  }
}

TEST(Bootstrap, ConstantMetricAndDeterminism) {
  const std::vector<double> t{1, 2, 3, 4, 5};
  const BootstrapResult c = bootstrap_metric(absolute_error, t, t, 200, 1);
  EXPECT_EQ(c.mean, 0.0);
  EXPECT_EQ(c.std, 0.0);
  const std::vector<double> e{1.5, 1.7, 3.2, 4.4, 4.1};
  const BootstrapResult a = bootstrap_metric(pearson_r, e, t, 300, 7);
  const BootstrapResult b = bootstrap_metric(pearson_r, e, t, 300, 7);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std, b.std);
  EXPECT_EQ(a.used + a.skipped, 300u);
  EXPECT_GT(a.skipped, 0u);  // five points: some resamples repeat one pair
  EXPECT_THROW(bootstrap_metric(pearson_r, std::vector<double>{1, 1}, std::vector<double>{1, 1}, 10, 1), UndefinedCorrelationError);
  EXPECT_THROW(bootstrap_metric(pearson_r, e, t, 1, 1), ConfigError);
}

TEST(Bootstrap, PearsonStdNearJackknife) {
  Rng rng(21);
  std::vector<double> x(10), y(10);
  for (int i = 0; i < 10; ++i) {
    x[i] = rng.normal();
    y[i] = 0.6 * x[i] + 0.8 * rng.normal();
  }
  std::vector<double> loo;
  for (int drop = 0; drop < 10; ++drop) {
    std::vector<double> xs, ys;
    for (int i = 0; i < 10; ++i)
      if (i != drop) {
        xs.push_back(x[i]);
        ys.push_back(y[i]);
      }
    loo.push_back(direct_pearson(xs, ys));
  }
  double mean = 0.0;
  for (double v : loo) mean += v / 10;
  double ss = 0.0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  const double jack = std::sqrt(9.0 / 10.0 * ss);
  const BootstrapResult b = bootstrap_metric(pearson_r, x, y, 2000, 3);
  EXPECT_GT(b.std, 0.5 * jack);
  EXPECT_LT(b.std, 2.0 * jack);
}

TEST(Metrics, ReportEntries) {
  const std::vector<double> truth{1, 2, 3, 4, 5, 6}, est{1.1, 2.5, 2.9, 4.2, 5.5, 5.8};
  const MetricsReport m = compute_metrics(est, truth, 5, 100, 1);
  EXPECT_NEAR(m.get("spearman_rho").value, spearman_rho(est, truth), 1e-15);
  EXPECT_NEAR(m.get("pearson_r").value, pearson_r(est, truth), 1e-15);
  EXPECT_NEAR(m.get("absolute_error").value, absolute_error(est, truth), 1e-15);
  EXPECT_EQ(m.get("regret@5").value, regret_at_k(est, truth, 5).raw);
  EXPECT_EQ(m.get("normalized_regret@5").value, regret_at_k(est, truth, 5).normalized);
  EXPECT_THROW(m.get("nope"), ConfigError);
  for (const auto& e : m.metrics) EXPECT_EQ(e.bootstrap.used + e.bootstrap.skipped, 100u);
}

TEST(Study, PerfectModelsCorrelateWithTruth) {
  auto env = std::make_shared<LinearGaussianEnv>(default_ope_env_spec());
  PolicySetOptions po;
  po.count = 6;
  const PolicySet set = make_policy_set(*env, po, 3);
  std::vector<double> truths;
  for (const auto& p : set.policies) truths.push_back(analytic_value_linear_gaussian(*env, p.policy, 0.995, 50));
  Rng rng(2);
  InitialStates s0;
  s0.states.resize(4, 2000);
  for (Eigen::Index j = 0; j < 2000; ++j) s0.states.col(j) = env->reset(rng);
  std::vector<StudyModel> models;
  for (int i = 0; i < 2; ++i) models.push_back({"m" + std::to_string(i), "d", 1.0 + i, std::make_shared<EnvironmentModel>(env)});
  OpeConfig c = config(400, 0.995, 50, 8);
  const StudyResult r = nll_vs_ope_study(models, set, truths, s0, c);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.estimates.size(), 12u);
  std::vector<double> est;
  for (std::size_t j = 0; j < 6; ++j) est.push_back(r.estimates[j].report.value);
  const BootstrapResult b = bootstrap_metric(pearson_r, est, truths, 500, 1);
  EXPECT_LE(1.0 - r.rows[0].pearson, 3 * b.std + 1e-12);
  EXPECT_GT(r.rows[0].pearson, 0.9);
  EXPECT_EQ(r.rows[0].pearson, r.rows[1].pearson);  // common random numbers, same model
  EXPECT_THROW(nll_vs_ope_study({models[0]}, set, truths, s0, c), ConfigError);
}
