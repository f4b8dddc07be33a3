#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "ardm/envs.hpp"
#include "ardm/error.hpp"
#include "ardm/rng.hpp"

using namespace ardm;

namespace {

// Deterministic single-state chain paying reward 1 on every step.
class UnitRewardEnv : public Environment {
 public:
  explicit UnitRewardEnv(std::size_t h) : h_(h) {}
  std::size_t state_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }
  std::size_t horizon() const override { return h_; }
  std::string name() const override { return "unit"; }
  Vector reset(Rng&) const override { return Vector::Zero(1); }
  std::pair<Vector, double> step(const Vector& s, const Vector&, Rng&) const override { return {s, 1.0}; }

 private:
  std::size_t h_;
};

LinearGaussianSpec simple_spec(std::size_t n, std::size_t m) {
  LinearGaussianSpec s;
  const auto N = static_cast<Eigen::Index>(n), M = static_cast<Eigen::Index>(m);
  s.A = 0.5 * Matrix::Identity(N, N);
  s.A(0, N - 1) = 0.2;
  s.B = Matrix::Ones(N, M) * 0.3;
  s.noise_cov = Matrix::Identity(N, N);
  s.Q = Matrix::Identity(N, N);
  s.R = Matrix::Identity(M, M);
  s.init_mean = Vector::Zero(N);
  s.init_cov = Matrix::Identity(N, N);
  s.horizon = 10;
  return s;
}

// Random stable instance with a random linear-Gaussian policy.
std::pair<LinearGaussianSpec, GaussianLinearPolicy> random_instance(std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::Index n = 2, m = 1;
  LinearGaussianSpec s;
  Matrix A(n, n);
  for (auto& v : A.reshaped()) v = rng.normal();
  s.A = A * (0.8 / std::max(spectral_radius(A), 1e-3));
  s.B.resize(n, m);
  for (auto& v : s.B.reshaped()) v = 0.5 * rng.normal();
  Matrix L(n, n);
  for (auto& v : L.reshaped()) v = 0.3 * rng.normal();
  s.noise_cov = L * L.transpose() + 0.1 * Matrix::Identity(n, n);
  s.Q = Matrix::Identity(n, n) * (0.5 + rng.uniform());
  s.R = Matrix::Identity(m, m) * rng.uniform();
  s.init_mean = Vector::Constant(n, rng.normal());
  s.init_cov = 0.5 * Matrix::Identity(n, n);
  s.reward_noise_std = 0.2;
  s.horizon = 8;
  Matrix K(m, n);
  for (auto& v : K.reshaped()) v = 0.2 * rng.normal();
  GaussianLinearPolicy pi(K, Vector::Constant(m, 0.1 * rng.normal()), Vector::Constant(m, 0.2 + 0.3 * rng.uniform()));
  return {s, pi};
}

}  // namespace

TEST(LinearGaussianEnv, ValidationRejectsBadSpecs) {
  auto s = simple_spec(2, 1);
  s.A = 1.2 * Matrix::Identity(2, 2);
  EXPECT_THROW(LinearGaussianEnv{s}, ConfigError);
  s = simple_spec(2, 1);
  s.noise_cov(0, 1) = 0.5;
  EXPECT_THROW(LinearGaussianEnv{s}, ConfigError);
  s = simple_spec(2, 1);
  s.B = Matrix::Ones(3, 1);
  EXPECT_THROW(LinearGaussianEnv{s}, ConfigError);
}

TEST(CollectDataset, HorizonOneGivesIndependentTuples) {
  auto s = simple_spec(2, 1);
  s.horizon = 1;
  LinearGaussianEnv env(s);
  GaussianLinearPolicy pi(Matrix::Zero(1, 2), Vector::Zero(1), Vector::Ones(1));
  const CollectedData d = collect_dataset(env, pi, 5, 3);
  EXPECT_EQ(d.transitions.size(), 5u);
  EXPECT_EQ(d.initial_states.size(), 5u);
  EXPECT_EQ(d.initial_states.states, d.transitions.states);
  std::set<double> firsts;
  for (std::size_t j = 0; j < 5; ++j) firsts.insert(d.transitions.states(0, static_cast<Eigen::Index>(j)));
  EXPECT_EQ(firsts.size(), 5u);
}

TEST(CollectDataset, EpisodesChainAndReset) {
  auto s = simple_spec(2, 1);
  s.horizon = 4;
  LinearGaussianEnv env(s);
  GaussianLinearPolicy pi(Matrix::Zero(1, 2), Vector::Zero(1), Vector::Ones(1));
  const CollectedData d = collect_dataset(env, pi, 10, 3);
  EXPECT_EQ(d.initial_states.size(), 3u);
  for (Eigen::Index j = 0; j + 1 < 10; ++j) {
    if ((j + 1) % 4 == 0) {
      EXPECT_EQ(d.transitions.states.col(j + 1), d.initial_states.states.col((j + 1) / 4));
    } else {
      EXPECT_EQ(d.transitions.states.col(j + 1), d.transitions.next_states.col(j));
    }
  }
}

TEST(CollectDataset, Deterministic) {
  CorrelatedChainEnv env;
  GaussianLinearPolicy pi(Matrix::Zero(1, 4), Vector::Zero(1), Vector::Ones(1));
  const auto a = collect_dataset(env, pi, 500, 9);
  const auto b = collect_dataset(env, pi, 500, 9);
  const auto c = collect_dataset(env, pi, 500, 10);
  EXPECT_TRUE(a.transitions == b.transitions);
  EXPECT_EQ(a.initial_states.states, b.initial_states.states);
  EXPECT_FALSE(a.transitions == c.transitions);
}

TEST(CollectDataset, ResidualCovarianceIsNoiseCovariance) {
  LinearGaussianEnv env(simple_spec(2, 1));
  GaussianLinearPolicy pi(Matrix::Constant(1, 2, -0.1), Vector::Zero(1), Vector::Ones(1));
  const auto d = collect_dataset(env, pi, 10000, 1).transitions;
  const Matrix resid = d.next_states - env.spec().A * d.states - env.spec().B * d.actions;
  const Vector mean = resid.rowwise().mean();
  const Matrix centered = resid.colwise() - mean;
  const Matrix cov = centered * centered.transpose() / static_cast<double>(d.size());
  EXPECT_LT((cov - Matrix::Identity(2, 2)).norm(), 0.1);
  // reward rides on the current state and action
  for (Eigen::Index j = 0; j < 20; ++j) {
    EXPECT_NEAR(d.rewards(j), env.reward_mean(d.states.col(j), d.actions.col(j)), 1e-12);
  }
}

TEST(TrueValueMc, GeometricSumAndMyopic) {
  UnitRewardEnv env(3);
  GaussianLinearPolicy pi(Matrix::Zero(1, 1), Vector::Zero(1), Vector::Ones(1));
  const ValueEstimate v = true_policy_value_mc(env, pi, 0.5, 3, 10, 1);
  EXPECT_EQ(v.value, 1.75);
  EXPECT_EQ(v.standard_error, 0.0);
  EXPECT_THROW(true_policy_value_mc(env, pi, 0.5, 3, 1, 1), ConfigError);

  // gamma = 0 keeps only E[r_1] = -(tr(Q Sigma0) + tr(R * noise^2)) for a zero-gain policy
  LinearGaussianEnv lg(simple_spec(2, 1));
  GaussianLinearPolicy quiet(Matrix::Zero(1, 2), Vector::Zero(1), Vector::Constant(1, 0.5));
  const ValueEstimate m = true_policy_value_mc(lg, quiet, 0.0, 10, 40000, 2);
  EXPECT_NEAR(m.value, -(2.0 + 0.25), 4 * m.standard_error);
}

TEST(AnalyticValue, ClosedFormCases) {
  auto s = simple_spec(3, 1);
  s.Q.setZero();
  s.R.setZero();
  GaussianLinearPolicy pi(Matrix::Constant(1, 3, 0.1), Vector::Constant(1, 0.4), Vector::Ones(1));
  EXPECT_EQ(analytic_value_linear_gaussian(LinearGaussianEnv(s), pi, 0.9, 20), 0.0);

  auto t = simple_spec(3, 1);
  t.R.setZero();
  EXPECT_DOUBLE_EQ(analytic_value_linear_gaussian(LinearGaussianEnv(t), pi, 1.0, 1), -3.0);
}

TEST(AnalyticValue, OverflowGuard) {
  LinearGaussianEnv env(simple_spec(2, 1));
  GaussianLinearPolicy wild(Matrix::Constant(1, 2, 30.0), Vector::Zero(1), Vector::Ones(1));
  EXPECT_THROW(analytic_value_linear_gaussian(env, wild, 1.0, 5000), DivergenceError);
}

TEST(AnalyticValue, AgreesWithMonteCarloOnRandomInstances) {
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto [spec, pi] = random_instance(seed);
    LinearGaussianEnv env(spec);
    const double exact = analytic_value_linear_gaussian(env, pi, 0.95, spec.horizon);
    const ValueEstimate mc = true_policy_value_mc(env, pi, 0.95, spec.horizon, 20000, seed + 100);
    if (std::abs(exact - mc.value) > 3 * mc.standard_error) {
      ++failures;
      ADD_FAILURE() << "seed " << seed << ": exact " << exact << " mc " << mc.value << " +- " << mc.standard_error;
    }
  }
  EXPECT_EQ(failures, 0);
}

TEST(AnalyticValue, AgreesWithLongMonteCarlo) {
  auto [spec, pi] = random_instance(1234);
  LinearGaussianEnv env(spec);
  const double exact = analytic_value_linear_gaussian(env, pi, 0.99, spec.horizon);
  const ValueEstimate mc = true_policy_value_mc(env, pi, 0.99, spec.horizon, 1000000, 5);
  EXPECT_NEAR(mc.value, exact, 3 * mc.standard_error);
}

TEST(LinearQuadraticQ, MatchesRolloutsFromFixedAction) {
  auto [spec, pi] = random_instance(77);
  LinearGaussianEnv env(spec);
  const double gamma = 0.9;
  const std::size_t remaining = 5;
  const QuadraticQFunction q = linear_quadratic_q(env, pi, gamma, remaining);
  const Vector s = (Vector(2) << 0.7, -0.4).finished();
  const Vector a = Vector::Constant(1, 0.3);
  const std::size_t count = 200000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng::stream(3, i);
    Vector state = s, action = a;
    double ret = 0.0, disc = 1.0;
    for (std::size_t t = 0; t < remaining; ++t) {
      if (t > 0) action = pi.sample(state, rng);
      auto [next, r] = env.step(state, action, rng);
      ret += disc * r;
      disc *= gamma;
      state = next;
    }
    sum += ret;
    sq += ret * ret;
  }
  const double mean = sum / count;
  const double se = std::sqrt((sq / count - mean * mean) / count);
  EXPECT_NEAR(q(s, a), mean, 4 * se);
  // averaging Q over the policy and the start distribution recovers the value
  const QuadraticQFunction full = linear_quadratic_q(env, pi, gamma, spec.horizon);
  double avg = 0.0;
  const int draws = 200000;
  Rng rng(8);
  for (int i = 0; i < draws; ++i) {
    const Vector s0 = env.reset(rng);
    avg += full(s0, pi.sample(s0, rng));
  }
  avg /= draws;
  const double exact = analytic_value_linear_gaussian(env, pi, gamma, spec.horizon);
  EXPECT_NEAR(avg, exact, 0.02 * std::abs(exact));
}

TEST(CorrelatedChain, DefaultGapIsPositive) {
  CorrelatedChainEnv env;
  EXPECT_EQ(env.state_dim(), 4u);
  EXPECT_EQ(env.rho(), 0.9);
  const Matrix& S = env.spec().noise_cov;
  const double closed = 0.5 * std::log(S.diagonal().prod() / S.determinant());
  EXPECT_NEAR(env.diagonal_nll_gap(), closed, 1e-12);
  EXPECT_GT(env.diagonal_nll_gap(), 0.2);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j)
      if (i != j) EXPECT_NEAR(S(i, j) / std::sqrt(S(i, i) * S(j, j)), 0.9, 1e-12);
}

TEST(Policy, LogDensityIntegratesToOne) {
  GaussianLinearPolicy pi(Matrix::Constant(1, 2, 0.5), Vector::Constant(1, -0.2), Vector::Constant(1, 0.3));
  const Vector s = (Vector(2) << 1.0, -2.0).finished();
  const double center = pi.mean(s)(0);
  const double h = 1e-3;
  double total = 0.0;
  for (double a = center - 3.0; a <= center + 3.0; a += h) total += std::exp(pi.log_density(s, Vector::Constant(1, a))) * h;
  EXPECT_NEAR(total, 1.0, 0.01);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(std::isfinite(pi.log_density(s, pi.sample(s, rng))));
}

TEST(Policy, BatchedSamplingMatchesSingle) {
  GaussianLinearPolicy pi(Matrix::Constant(2, 3, 0.2), Vector::Constant(2, 0.1), Vector::Constant(2, 0.5));
  Matrix states = Matrix::Random(3, 5);
  std::vector<Rng> a, b;
  std::vector<Rng*> ptrs;
  for (int j = 0; j < 5; ++j) {
    a.push_back(Rng::stream(1, j));
    b.push_back(Rng::stream(1, j));
  }
  for (auto& r : a) ptrs.push_back(&r);
  const Matrix batch = pi.sample_batch(states, ptrs);
  for (int j = 0; j < 5; ++j) EXPECT_EQ(Vector(batch.col(j)), pi.sample(states.col(j), b[static_cast<std::size_t>(j)]));
}

TEST(PolicySet, TwoPoliciesHaveDistinctValues) {
  LinearGaussianEnv env(default_ope_env_spec());
  PolicySetOptions o;
  o.count = 2;
  const PolicySet set = make_policy_set(env, o, 4);
  ASSERT_EQ(set.size(), 2u);
  const double v0 = analytic_value_linear_gaussian(env, set.policies[0].policy, o.gamma, env.horizon());
  const double v1 = analytic_value_linear_gaussian(env, set.policies[1].policy, o.gamma, env.horizon());
  EXPECT_NE(v0, v1);
  EXPECT_THROW(make_policy_set(env, PolicySetOptions{.count = 1}, 4), ConfigError);
}

TEST(PolicySet, ZeroSpreadVariesOnlyNoise) {
  LinearGaussianEnv env(default_ope_env_spec());
  PolicySetOptions o;
  o.count = 5;
  o.quality_spread = 0.0;
  const PolicySet set = make_policy_set(env, o, 4);
  std::set<double> values, noises;
  for (const auto& p : set.policies) {
    EXPECT_EQ(p.policy.gain(), set.policies[0].policy.gain());
    values.insert(analytic_value_linear_gaussian(env, p.policy, o.gamma, env.horizon()));
    noises.insert(p.policy.noise_std()(0));
  }
  EXPECT_EQ(values.size(), 5u);
  EXPECT_GT(noises.size(), 1u);
}

TEST(PolicySet, DefaultSetSpansValueRange) {
  LinearGaussianEnv env(default_ope_env_spec());
  const PolicySetOptions o;
  const PolicySet set = make_policy_set(env, o, 1);
  ASSERT_EQ(set.size(), 10u);
  double best = -INFINITY, worst = INFINITY;
  std::set<std::string> names;
  for (const auto& p : set.policies) {
    const double v = analytic_value_linear_gaussian(env, p.policy, o.gamma, env.horizon());
    best = std::max(best, v);
    worst = std::min(worst, v);
    names.insert(p.name);
    EXPECT_LT(spectral_radius(env.spec().A + env.spec().B * p.policy.gain()), 1.0);
  }
  EXPECT_EQ(names.size(), 10u);
  EXPECT_GE(best - worst, 0.2 * std::abs(best));
  const PolicySet again = make_policy_set(env, o, 1);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(again.policies[i].policy.gain(), set.policies[i].policy.gain());
}

TEST(PolicySet, BehaviorPolicyIsExploratoryMiddle) {
  LinearGaussianEnv env(default_ope_env_spec());
  const PolicySet set = make_policy_set(env, PolicySetOptions{}, 2);
  const auto& mid = behavior_policy(set);
  const auto wide = exploratory_behavior_policy(set, 0.8);
  EXPECT_EQ(wide.gain(), mid.gain());
  EXPECT_TRUE((wide.noise_std().array() >= 0.8).all());
}

TEST(Lqr, GainStabilizesAndBeatsZeroGain) {
  LinearGaussianEnv env(default_planning_env_spec());
  const Matrix K = discounted_lqr_gain(env.spec(), 0.995);
  EXPECT_LT(spectral_radius(env.spec().A + env.spec().B * K), 1.0);
  GaussianLinearPolicy lqr(K, Vector::Zero(1), Vector::Constant(1, 0.1));
  GaussianLinearPolicy zero(Matrix::Zero(1, 2), Vector::Zero(1), Vector::Constant(1, 0.1));
  EXPECT_GT(analytic_value_linear_gaussian(env, lqr, 0.995, 200), analytic_value_linear_gaussian(env, zero, 0.995, 200));
}

TEST(Pendulum, ShapesAndDeterminism) {
  PendulumEnv env;
  Rng a(3), b(3);
  Vector s1 = env.reset(a), s2 = env.reset(b);
  EXPECT_EQ(s1, s2);
  for (int t = 0; t < 20; ++t) {
    auto [n1, r1] = env.step(s1, Vector::Constant(1, 0.1), a);
    auto [n2, r2] = env.step(s2, Vector::Constant(1, 0.1), b);
    EXPECT_EQ(n1, n2);
    EXPECT_EQ(r1, r2);
    EXPECT_TRUE(n1.allFinite());
    s1 = n1;
    s2 = n2;
  }
  GaussianLinearPolicy pi(Matrix::Constant(1, 2, -0.5), Vector::Zero(1), Vector::Constant(1, 0.1));
  const auto v = true_policy_value_mc(env, pi, 0.99, env.horizon(), 50, 1);
  EXPECT_TRUE(std::isfinite(v.value));
}
