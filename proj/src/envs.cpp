#include "ardm/envs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "ardm/error.hpp"
#include "ardm/rng.hpp"

namespace ardm {

namespace {

Vector standard_normal(Rng& rng, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

void require_square(const Matrix& m, Eigen::Index n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    throw ConfigError(std::string(what) + " must be " + std::to_string(n) + "x" + std::to_string(n));
  }
}

void require_symmetric(const Matrix& m, const char* what) {
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ConfigError(std::string(what) + " must be symmetric");
  }
}

void require_psd(const Matrix& m, const char* what) {
  require_symmetric(m, what);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.eigenvalues().minCoeff() < -1e-12) throw ConfigError(std::string(what) + " must be positive semidefinite");
}

}  // namespace

void LinearGaussianSpec::validate() const {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  if (n == 0 || m == 0) throw ConfigError("linear-Gaussian env: empty state or action space");
  require_square(A, n, "A");
  if (B.rows() != n) throw ConfigError("B must have as many rows as A");
  require_square(noise_cov, n, "noise covariance");
  require_square(Q, n, "Q");
  require_square(R, m, "R");
  require_square(init_cov, n, "initial covariance");
  if (init_mean.size() != n) throw ConfigError("initial mean has wrong length");
  require_psd(Q, "Q");
  require_psd(R, "R");
  require_psd(init_cov, "initial covariance");
  require_symmetric(noise_cov, "noise covariance");
  cholesky_lower(noise_cov, "noise covariance");
  if (spectral_radius(A) >= 1.0) throw ConfigError("A must have spectral radius < 1");
  if (reward_noise_std < 0.0) throw ConfigError("reward noise std must be non-negative");
  if (horizon == 0) throw ConfigError("horizon must be positive");
}

LinearGaussianEnv::LinearGaussianEnv(LinearGaussianSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  noise_chol_ = cholesky_lower(spec_.noise_cov, "noise covariance");
  // semidefinite initial covariances (e.g. a fixed start state) use an eigen factor
  Eigen::SelfAdjointEigenSolver<Matrix> solver(spec_.init_cov);
  init_chol_ = solver.eigenvectors() * solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Vector LinearGaussianEnv::reset(Rng& rng) const {
  return spec_.init_mean + init_chol_ * standard_normal(rng, spec_.init_mean.size());
}

double LinearGaussianEnv::reward_mean(const Vector& state, const Vector& action) const {
  return -(state.dot(spec_.Q * state) + action.dot(spec_.R * action));
}

std::pair<Vector, double> LinearGaussianEnv::step(const Vector& state, const Vector& action, Rng& rng) const {
  require_dim(state.size(), spec_.A.rows(), "environment state");
  require_dim(action.size(), spec_.B.cols(), "environment action");
  Vector next = spec_.A * state + spec_.B * action + noise_chol_ * standard_normal(rng, spec_.A.rows());
  double reward = reward_mean(state, action);
  if (spec_.reward_noise_std > 0.0) reward += spec_.reward_noise_std * rng.normal();
  return {std::move(next), reward};
}

double LinearGaussianEnv::diagonal_nll_gap() const {
  const Matrix& s = spec_.noise_cov;
  const double log_det_diag = s.diagonal().array().log().sum();
  const double log_det = 2.0 * noise_chol_.diagonal().array().log().sum();
  return 0.5 * (log_det_diag - log_det);
}

LinearGaussianSpec CorrelatedChainEnv::make_spec(const Options& o) {
  if (o.state_dim < 2) throw ConfigError("correlated chain needs at least 2 state dimensions");
  if (!(o.rho > -1.0 / static_cast<double>(o.state_dim - 1) && o.rho < 1.0)) {
    throw ConfigError("correlated chain: rho outside the positive-definite range");
  }
  const auto n = static_cast<Eigen::Index>(o.state_dim);
  const auto m = static_cast<Eigen::Index>(o.action_dim);
  LinearGaussianSpec spec;
  spec.A = o.decay * Matrix::Identity(n, n);
  spec.B = Matrix::Constant(n, m, 0.5);
  const double var = o.noise_std * o.noise_std;
  spec.noise_cov = var * ((1.0 - o.rho) * Matrix::Identity(n, n) + o.rho * Matrix::Ones(n, n));
  spec.Q = 0.1 * Matrix::Identity(n, n);
  spec.R = 0.1 * Matrix::Identity(m, m);
  spec.init_mean = Vector::Zero(n);
  spec.init_cov = Matrix::Identity(n, n);
  spec.reward_noise_std = o.reward_noise_std;
  spec.horizon = o.horizon;
  return spec;
}

CorrelatedChainEnv::CorrelatedChainEnv(Options options)
    : LinearGaussianEnv(make_spec(options)), options_(options) {
  if (!(diagonal_nll_gap() > 0.0)) throw ConfigError("correlated chain: noise must be correlated");
}

Vector PendulumEnv::reset(Rng& rng) const {
  Vector s(2);
  s << options_.init_angle_std * rng.normal(), 0.0;
  return s;
}

std::pair<Vector, double> PendulumEnv::step(const Vector& state, const Vector& action, Rng& rng) const {
  require_dim(state.size(), 2, "pendulum state");
  require_dim(action.size(), 1, "pendulum action");
  const double angle = state(0);
  const double velocity = state(1);
  const double torque = action(0);
  const double accel = -options_.gravity_over_length * std::sin(angle) - options_.damping * velocity + torque;
  Vector next(2);
  next(1) = velocity + options_.dt * accel + options_.noise_std * rng.normal();
  next(0) = angle + options_.dt * next(1);
  const double reward = -(angle * angle + 0.1 * velocity * velocity + 0.01 * torque * torque);
  return {std::move(next), reward};
}

LinearGaussianSpec default_ope_env_spec() {
  constexpr Eigen::Index n = 4;
  constexpr Eigen::Index m = 2;
  LinearGaussianSpec spec;
  spec.A = 0.5 * Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) spec.A(i, i + 1) = 0.1;
  spec.B.resize(n, m);
  spec.B << 0.1727921, 0.41080907,
            0.16521854, -0.65157862,
            0.45267793, 0.22318729,
            -0.26847662, 0.29055905;
  // strongly correlated noise, with cost only on the directions a diagonal model gets wrong
  const double rho = 0.9;
  spec.noise_cov = 0.5 * ((1.0 - rho) * Matrix::Identity(n, n) + rho * Matrix::Ones(n, n));
  spec.Q = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  spec.R = 0.1 * Matrix::Identity(m, m);
  spec.init_mean = Vector::Zero(n);
  spec.init_cov = 0.1 * Matrix::Identity(n, n);
  spec.reward_noise_std = 0.0;
  spec.horizon = 50;
  return spec;
}

LinearGaussianSpec default_planning_env_spec() {
  LinearGaussianSpec spec;
  spec.A.resize(2, 2);
  spec.A << 0.9, 0.2,
            0.0, 0.9;
  spec.B.resize(2, 1);
  spec.B << 0.0, 0.5;
  spec.noise_cov = 0.01 * Matrix::Identity(2, 2);
  spec.Q = Matrix::Identity(2, 2);
  spec.R = 0.1 * Matrix::Identity(1, 1);
  spec.init_mean = Vector::Zero(2);
  spec.init_cov = Matrix::Identity(2, 2);
  spec.reward_noise_std = 0.0;
  spec.horizon = 10;
  return spec;
}

// ---------------------------------------------------------------------------

Matrix Policy::sample_batch(const Matrix& states, std::span<Rng* const> rngs) const {
  require_dim(static_cast<std::ptrdiff_t>(rngs.size()), states.cols(), "policy random streams");
  Matrix actions(static_cast<Eigen::Index>(action_dim()), states.cols());
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    actions.col(j) = sample(states.col(j), *rngs[static_cast<std::size_t>(j)]);
  }
  return actions;
}

GaussianLinearPolicy::GaussianLinearPolicy(Matrix gain, Vector bias, Vector noise_std)
    : gain_(std::move(gain)), bias_(std::move(bias)), noise_std_(std::move(noise_std)) {
  if (bias_.size() != gain_.rows() || noise_std_.size() != gain_.rows()) {
    throw ShapeError("GaussianLinearPolicy: gain, bias and noise dimensions disagree");
  }
  if ((noise_std_.array() < 0.0).any()) throw ConfigError("GaussianLinearPolicy: negative noise std");
}

Vector GaussianLinearPolicy::sample(const Vector& state, Rng& rng) const {
  require_dim(state.size(), gain_.cols(), "policy state");
  Vector a = mean(state);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) += noise_std_(i) * rng.normal();
  return a;
}

Matrix GaussianLinearPolicy::sample_batch(const Matrix& states, std::span<Rng* const> rngs) const {
  require_dim(states.rows(), gain_.cols(), "policy state");
  require_dim(static_cast<std::ptrdiff_t>(rngs.size()), states.cols(), "policy random streams");
  Matrix actions = gain_ * states;
  actions.colwise() += bias_;
  for (Eigen::Index j = 0; j < actions.cols(); ++j) {
    Rng& rng = *rngs[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < actions.rows(); ++i) actions(i, j) += noise_std_(i) * rng.normal();
  }
  return actions;
}

double GaussianLinearPolicy::log_density(const Vector& state, const Vector& action) const {
  require_dim(action.size(), gain_.rows(), "policy action");
  const Vector mu = mean(state);
  double total = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double sd = noise_std_(i);
    if (sd == 0.0) {
      if (action(i) != mu(i)) return -std::numeric_limits<double>::infinity();
      continue;  // point mass; density w.r.t. counting measure on that coordinate
    }
    const double z = (action(i) - mu(i)) / sd;
    total += -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return total;
}

Matrix discounted_lqr_gain(const LinearGaussianSpec& spec, double gamma) {
  const Matrix& A = spec.A;
  const Matrix& B = spec.B;
  Matrix P = spec.Q;
  Matrix K = Matrix::Zero(B.cols(), A.rows());
  for (int iter = 0; iter < 10000; ++iter) {
    const Matrix lhs = spec.R + gamma * B.transpose() * P * B;
    K = -lhs.ldlt().solve(gamma * B.transpose() * P * A);
    const Matrix closed = A + B * K;
    Matrix next = spec.Q + K.transpose() * spec.R * K + gamma * closed.transpose() * P * closed;
    next = 0.5 * (next + next.transpose());
    const double delta = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (delta < 1e-13 * std::max(1.0, P.cwiseAbs().maxCoeff())) break;
  }
  return K;
}

namespace {

std::vector<double> policy_values(const LinearGaussianEnv& env, const std::vector<NamedPolicy>& policies,
                                  double gamma) {
  std::vector<double> values;
  for (const auto& p : policies) values.push_back(analytic_value_linear_gaussian(env, p.policy, gamma, env.horizon()));
  return values;
}

}  // namespace

PolicySet make_policy_set(const LinearGaussianEnv& env, const PolicySetOptions& options, std::uint64_t seed) {
  if (options.count < 2) throw ConfigError("make_policy_set: need at least 2 policies");
  if (!(options.max_closed_loop_radius > 0.0 && options.max_closed_loop_radius < 1.0)) {
    throw ConfigError("make_policy_set: max_closed_loop_radius must lie in (0, 1)");
  }
  if (options.quality_spread < 0.0 || options.quality_spread > 1.0) {
    throw ConfigError("make_policy_set: quality_spread must lie in [0, 1]");
  }
  const LinearGaussianSpec& spec = env.spec();
  const Eigen::Index n = spec.A.rows();
  const Eigen::Index m = spec.B.cols();
  const Matrix regulator = discounted_lqr_gain(spec, options.gamma);

  Rng rng = Rng::stream(seed, 0x9011C1E5);
  auto draw_noise = [&]() {
    const double sd = options.min_noise_std + (options.max_noise_std - options.min_noise_std) * rng.uniform();
    return Vector::Constant(m, sd);
  };

  PolicySet set;
  for (std::size_t i = 0; i < options.count; ++i) {
    const double mix = options.quality_spread * static_cast<double>(i) / static_cast<double>(options.count - 1);
    Matrix gain = regulator;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw ConfigError("make_policy_set: cannot find a stabilizing random gain");
      Matrix random_gain(m, n);
      for (Eigen::Index r = 0; r < m; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) random_gain(r, c) = options.random_gain_scale * rng.normal();
      }
      if (spectral_radius(spec.A + spec.B * random_gain) >= options.max_closed_loop_radius) continue;
      gain = (1.0 - mix) * regulator + mix * random_gain;
      if (spectral_radius(spec.A + spec.B * gain) < options.max_closed_loop_radius) break;
    }
    char name[32];
    std::snprintf(name, sizeof name, "policy_%02zu", i);
    set.policies.push_back({name, GaussianLinearPolicy(gain, Vector::Zero(m), draw_noise()), mix});
  }

  // break ties by redrawing noise levels
  for (int round = 0; round < 1000; ++round) {
    const std::vector<double> values = policy_values(env, set.policies, options.gamma);
    bool tied = false;
    for (std::size_t i = 0; i < values.size() && !tied; ++i) {
      for (std::size_t j = i + 1; j < values.size(); ++j) {
        const double scale = std::max({1.0, std::abs(values[i]), std::abs(values[j])});
        if (std::abs(values[i] - values[j]) <= 1e-9 * scale) {
          auto& p = set.policies[j];
          p.policy = GaussianLinearPolicy(p.policy.gain(), p.policy.bias(), draw_noise());
          tied = true;
          break;
        }
      }
    }
    if (!tied) return set;
  }
  throw ConfigError("make_policy_set: could not make policy values distinct");
}

const GaussianLinearPolicy& behavior_policy(const PolicySet& set) {
  if (set.policies.empty()) throw ConfigError("behavior_policy: empty policy set");
  return set.policies[set.policies.size() / 2].policy;
}

GaussianLinearPolicy exploratory_behavior_policy(const PolicySet& set, double min_noise_std) {
  const GaussianLinearPolicy& base = behavior_policy(set);
  return GaussianLinearPolicy(base.gain(), base.bias(), base.noise_std().cwiseMax(min_noise_std));
}

// ---------------------------------------------------------------------------

CollectedData collect_dataset(const Environment& env, const Policy& behavior, std::size_t num_transitions,
                              std::uint64_t seed) {
  if (num_transitions == 0) throw ConfigError("collect_dataset: need at least one transition");
  require_dim(static_cast<std::ptrdiff_t>(behavior.state_dim()), static_cast<std::ptrdiff_t>(env.state_dim()),
              "behavior policy state");
  require_dim(static_cast<std::ptrdiff_t>(behavior.action_dim()), static_cast<std::ptrdiff_t>(env.action_dim()),
              "behavior policy action");
  CollectedData data;
  data.transitions = TransitionBatch(env.state_dim(), env.action_dim(), num_transitions);
  std::vector<Vector> resets;
  std::size_t written = 0;
  for (std::uint64_t episode = 0; written < num_transitions; ++episode) {
    Rng rng = Rng::stream(seed, episode);
    Vector s = env.reset(rng);
    resets.push_back(s);
    for (std::size_t t = 0; t < env.horizon() && written < num_transitions; ++t) {
      const Vector a = behavior.sample(s, rng);
      auto [next, r] = env.step(s, a, rng);
      data.transitions.set(written++, s, a, r, next);
      s = std::move(next);
    }
  }
  data.initial_states.states.resize(static_cast<Eigen::Index>(env.state_dim()),
                                     static_cast<Eigen::Index>(resets.size()));
  for (std::size_t i = 0; i < resets.size(); ++i) data.initial_states.states.col(static_cast<Eigen::Index>(i)) = resets[i];
  return data;
}

ValueEstimate true_policy_value_mc(const Environment& env, const Policy& policy, double gamma,
                                   std::size_t horizon, std::size_t n_rollouts, std::uint64_t seed) {
  if (n_rollouts < 2) throw ConfigError("true_policy_value_mc: need at least 2 rollouts");
  std::vector<double> returns(n_rollouts);
  for (std::size_t i = 0; i < n_rollouts; ++i) {
    Rng rng = Rng::stream(seed, i);
    Vector s = env.reset(rng);
    double ret = 0.0;
    double discount = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      const Vector a = policy.sample(s, rng);
      auto [next, r] = env.step(s, a, rng);
      ret += discount * r;
      discount *= gamma;
      s = std::move(next);
    }
    returns[i] = ret;
  }
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(n_rollouts);
  double ss = 0.0;
  for (double r : returns) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n_rollouts - 1));
  return {mean, sd / std::sqrt(static_cast<double>(n_rollouts))};
}

double analytic_value_linear_gaussian(const LinearGaussianEnv& env, const GaussianLinearPolicy& policy,
                                      double gamma, std::size_t horizon) {
  const LinearGaussianSpec& spec = env.spec();
  require_dim(static_cast<std::ptrdiff_t>(policy.state_dim()), spec.A.rows(), "policy state");
  require_dim(static_cast<std::ptrdiff_t>(policy.action_dim()), spec.B.cols(), "policy action");
  const Matrix& K = policy.gain();
  const Vector& k = policy.bias();
  const Matrix action_cov = policy.noise_std().array().square().matrix().asDiagonal();
  const Matrix closed = spec.A + spec.B * K;
  const Matrix injected = spec.B * action_cov * spec.B.transpose() + spec.noise_cov;

  Vector mean = spec.init_mean;
  Matrix cov = spec.init_cov;
  double value = 0.0;
  double discount = 1.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const Vector action_mean = K * mean + k;
    const Matrix action_second = K * cov * K.transpose() + action_cov + action_mean * action_mean.transpose();
    const Matrix state_second = cov + mean * mean.transpose();
    value -= discount * ((spec.Q * state_second).trace() + (spec.R * action_second).trace());
    discount *= gamma;
    mean = spec.A * mean + spec.B * action_mean;
    cov = closed * cov * closed.transpose() + injected;
    if (!std::isfinite(value) || !cov.allFinite() || cov.cwiseAbs().maxCoeff() > 1e150) {
      throw DivergenceError("analytic value: closed loop diverges at step " + std::to_string(t));
    }
  }
  return value;
}

double QuadraticQFunction::operator()(const Vector& state, const Vector& action) const {
  const auto n = static_cast<Eigen::Index>(state_dim);
  require_dim(state.size(), n, "critic state");
  require_dim(action.size(), W.rows() - n, "critic action");
  Vector z(W.rows());
  z << state, action;
  return z.dot(W * z) + w.dot(z) + c;
}

QuadraticQFunction linear_quadratic_q(const LinearGaussianEnv& env, const GaussianLinearPolicy& policy,
                                      double gamma, std::size_t remaining) {
  const LinearGaussianSpec& spec = env.spec();
  const Eigen::Index n = spec.A.rows();
  const Eigen::Index m = spec.B.cols();
  require_dim(static_cast<std::ptrdiff_t>(policy.state_dim()), n, "policy state");
  require_dim(static_cast<std::ptrdiff_t>(policy.action_dim()), m, "policy action");
  if (remaining == 0) throw ConfigError("linear_quadratic_q: remaining horizon must be positive");

  Matrix G(n, n + m);
  G << spec.A, spec.B;
  Matrix cost = Matrix::Zero(n + m, n + m);
  cost.topLeftCorner(n, n) = spec.Q;
  cost.bottomRightCorner(m, m) = spec.R;
  Matrix T(n + m, n);
  T << Matrix::Identity(n, n), policy.gain();
  Vector t0 = Vector::Zero(n + m);
  t0.tail(m) = policy.bias();
  const Vector action_var = policy.noise_std().array().square();

  // value of the remaining steps after the current one: V(s) = s'Ps + p's + v
  Matrix P = Matrix::Zero(n, n);
  Vector p = Vector::Zero(n);
  double v = 0.0;
  QuadraticQFunction q;
  q.state_dim = static_cast<std::size_t>(n);
  for (std::size_t h = 1; h <= remaining; ++h) {
    q.W = -cost + gamma * G.transpose() * P * G;
    q.W = 0.5 * (q.W + q.W.transpose());
    q.w = gamma * G.transpose() * p;
    q.c = gamma * ((P * spec.noise_cov).trace() + v);
    if (h == remaining) break;
    const Matrix next_P = T.transpose() * q.W * T;
    p = 2.0 * T.transpose() * q.W * t0 + T.transpose() * q.w;
    v = t0.dot(q.W * t0) + q.w.dot(t0) + q.c + (q.W.bottomRightCorner(m, m).diagonal().array() * action_var.array()).sum();
    P = 0.5 * (next_P + next_P.transpose());
    if (!P.allFinite() || !std::isfinite(v)) throw DivergenceError("linear_quadratic_q: value recursion diverges");
  }
  return q;
}

}  // namespace ardm
