#include "ardm/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ardm/rng.hpp"

namespace ardm {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

Vector floored_std(const Matrix& columns, const Vector& mean) {
  const auto count = static_cast<double>(columns.cols());
  Vector std = ((columns.colwise() - mean).array().square().rowwise().sum() / count).sqrt().matrix();
  return std.cwiseMax(NormalizationStats::kStdFloor);
}

}  // namespace

NormalizationStats NormalizationStats::identity(std::size_t state_dim, std::size_t action_dim) {
  NormalizationStats s;
  s.state_mean = Vector::Zero(static_cast<Eigen::Index>(state_dim));
  s.state_std = Vector::Ones(static_cast<Eigen::Index>(state_dim));
  s.action_mean = Vector::Zero(static_cast<Eigen::Index>(action_dim));
  s.action_std = Vector::Ones(static_cast<Eigen::Index>(action_dim));
  s.reward_mean = 0.0;
  s.reward_std = 1.0;
  return s;
}

Matrix NormalizationStats::normalize_states(const Eigen::Ref<const Matrix>& s) const {
  return ((s.colwise() - state_mean).array().colwise() / state_std.array()).matrix();
}

Matrix NormalizationStats::denormalize_states(const Eigen::Ref<const Matrix>& z) const {
  return ((z.array().colwise() * state_std.array()).matrix().colwise() + state_mean);
}

Matrix NormalizationStats::normalize_actions(const Eigen::Ref<const Matrix>& a) const {
  return ((a.colwise() - action_mean).array().colwise() / action_std.array()).matrix();
}

Matrix NormalizationStats::denormalize_actions(const Eigen::Ref<const Matrix>& z) const {
  return ((z.array().colwise() * action_std.array()).matrix().colwise() + action_mean);
}

double NormalizationStats::target_std(std::size_t d) const {
  return d < state_dim() ? state_std(static_cast<Eigen::Index>(d)) : reward_std;
}

double NormalizationStats::log_jacobian() const {
  return state_std.array().log().sum() + std::log(reward_std);
}

bool NormalizationStats::operator==(const NormalizationStats& o) const {
  return state_mean == o.state_mean && state_std == o.state_std && action_mean == o.action_mean &&
         action_std == o.action_std && reward_mean == o.reward_mean && reward_std == o.reward_std;
}

NormalizationStats fit_normalization(const TransitionBatch& batch) {
  if (batch.empty()) throw EmptyInputError("fit_normalization: empty batch");
  NormalizationStats s;
  s.state_mean = batch.states.rowwise().mean();
  s.state_std = floored_std(batch.states, s.state_mean);
  s.action_mean = batch.actions.rowwise().mean();
  s.action_std = floored_std(batch.actions, s.action_mean);
  s.reward_mean = batch.rewards.mean();
  const double var = (batch.rewards.array() - s.reward_mean).square().mean();
  s.reward_std = std::max(std::sqrt(var), NormalizationStats::kStdFloor);
  return s;
}

TransitionBatch normalize(const NormalizationStats& stats, const TransitionBatch& batch) {
  require_dim(batch.states.rows(), stats.state_mean.size(), "normalize state");
  require_dim(batch.actions.rows(), stats.action_mean.size(), "normalize action");
  TransitionBatch out;
  out.states = stats.normalize_states(batch.states);
  out.actions = stats.normalize_actions(batch.actions);
  out.rewards = ((batch.rewards.array() - stats.reward_mean) / stats.reward_std).matrix();
  out.next_states = stats.normalize_states(batch.next_states);
  return out;
}

TransitionBatch denormalize(const NormalizationStats& stats, const TransitionBatch& batch) {
  TransitionBatch out;
  out.states = stats.denormalize_states(batch.states);
  out.actions = stats.denormalize_actions(batch.actions);
  out.rewards = (batch.rewards.array() * stats.reward_std + stats.reward_mean).matrix();
  out.next_states = stats.denormalize_states(batch.next_states);
  return out;
}

double clamp_log_variance(double raw) {
  return std::clamp(raw, GaussianPrediction::kLogVarMin, GaussianPrediction::kLogVarMax);
}

Matrix gaussian_nll_terms(const Eigen::Ref<const Matrix>& outputs, const Eigen::Ref<const Matrix>& targets) {
  const Eigen::Index k = targets.rows();
  require_dim(outputs.rows(), 2 * k, "gaussian head outputs");
  require_dim(outputs.cols(), targets.cols(), "gaussian head batch");
  Matrix terms(k, targets.cols());
  for (Eigen::Index c = 0; c < targets.cols(); ++c) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const double mu = outputs(i, c);
      const double l = clamp_log_variance(outputs(k + i, c));
      const double diff = targets(i, c) - mu;
      terms(i, c) = kHalfLog2Pi + 0.5 * l + 0.5 * diff * diff * std::exp(-l);
    }
  }
  return terms;
}

Matrix gaussian_nll_gradient(const Eigen::Ref<const Matrix>& outputs,
                             const Eigen::Ref<const Matrix>& targets, double scale) {
  const Eigen::Index k = targets.rows();
  Matrix grad(outputs.rows(), outputs.cols());
  for (Eigen::Index c = 0; c < targets.cols(); ++c) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const double mu = outputs(i, c);
      const double raw = outputs(k + i, c);
      const double l = clamp_log_variance(raw);
      const double inv_var = std::exp(-l);
      const double diff = targets(i, c) - mu;
      grad(i, c) = -scale * diff * inv_var;
      const bool inside = raw > GaussianPrediction::kLogVarMin && raw < GaussianPrediction::kLogVarMax;
      grad(k + i, c) = inside ? scale * (0.5 - 0.5 * diff * diff * inv_var) : 0.0;
    }
  }
  return grad;
}

void TransitionModel::sample_batch(const Matrix& states, const Matrix& actions, std::span<Rng* const> rngs,
                                   Matrix& next_states, Vector& rewards) const {
  const Eigen::Index count = states.cols();
  require_dim(static_cast<std::ptrdiff_t>(rngs.size()), count, "sample_batch random streams");
  next_states.resize(static_cast<Eigen::Index>(state_dim()), count);
  rewards.resize(count);
  for (Eigen::Index j = 0; j < count; ++j) {
    auto [next, r] = sample(states.col(j), actions.col(j), *rngs[static_cast<std::size_t>(j)]);
    next_states.col(j) = next;
    rewards(j) = r;
  }
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kFeedforward ? "feedforward" : "autoregressive";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "feedforward" || name == "ff") return ModelKind::kFeedforward;
  if (name == "autoregressive" || name == "ar") return ModelKind::kAutoregressive;
  throw ConfigError("unknown model kind '" + name + "'");
}

DynamicsModel::DynamicsModel(ModelKind kind, std::size_t state_dim, std::size_t action_dim, MlpSpec spec,
                             ParameterSet params, NormalizationStats stats)
    : kind_(kind),
      state_dim_(state_dim),
      action_dim_(action_dim),
      spec_(std::move(spec)),
      params_(std::move(params)),
      stats_(std::move(stats)) {
  if (state_dim_ == 0 || action_dim_ == 0) throw ConfigError("dynamics model: dimensions must be positive");
  spec_.validate();
  require_dim(static_cast<std::ptrdiff_t>(params_.size()),
              static_cast<std::ptrdiff_t>(spec_.parameter_count()), "dynamics model parameters");
  require_dim(stats_.state_mean.size(), static_cast<std::ptrdiff_t>(state_dim_), "normalization state");
  require_dim(stats_.action_mean.size(), static_cast<std::ptrdiff_t>(action_dim_), "normalization action");
}

DynamicsModel::DynamicsModel(const DynamicsModel& other)
    : TransitionModel(other),
      kind_(other.kind_),
      state_dim_(other.state_dim_),
      action_dim_(other.action_dim_),
      spec_(other.spec_),
      params_(other.params_),
      stats_(other.stats_) {}

DynamicsModel& DynamicsModel::operator=(const DynamicsModel& other) {
  kind_ = other.kind_;
  state_dim_ = other.state_dim_;
  action_dim_ = other.action_dim_;
  spec_ = other.spec_;
  params_ = other.params_;
  stats_ = other.stats_;
  return *this;
}

Matrix DynamicsModel::forward(const Eigen::Ref<const Matrix>& inputs) const {
  forward_passes_.fetch_add(1, std::memory_order_relaxed);
  return mlp_forward(spec_, params_, inputs);
}

void DynamicsModel::check_state_action(const Vector& s, const Vector& a) const {
  require_dim(s.size(), static_cast<std::ptrdiff_t>(state_dim_), "model state");
  require_dim(a.size(), static_cast<std::ptrdiff_t>(action_dim_), "model action");
}

Vector DynamicsModel::nll_per_dimension(const TransitionBatch& batch) const {
  if (batch.empty()) throw EmptyInputError("nll: empty batch");
  require_dim(batch.states.rows(), static_cast<std::ptrdiff_t>(state_dim_), "nll batch state");
  require_dim(batch.actions.rows(), static_cast<std::ptrdiff_t>(action_dim_), "nll batch action");
  const NetworkRows rows = build_rows(normalize(stats_, batch));
  const Matrix outputs = forward(rows.inputs);
  const Matrix terms = gaussian_nll_terms(outputs, rows.targets);
  const auto dims = static_cast<Eigen::Index>(state_dim_ + 1);
  Vector per_dim = Vector::Zero(dims);
  if (kind_ == ModelKind::kFeedforward) {
    per_dim = terms.rowwise().sum();
  } else {
    for (Eigen::Index c = 0; c < terms.cols(); ++c) {
      per_dim(rows.column_dims[static_cast<std::size_t>(c)]) += terms(0, c);
    }
  }
  per_dim /= static_cast<double>(batch.size());
  for (Eigen::Index d = 0; d < dims; ++d) per_dim(d) += std::log(stats_.target_std(static_cast<std::size_t>(d)));
  return per_dim;
}

double DynamicsModel::nll(const TransitionBatch& batch) const { return nll_per_dimension(batch).sum(); }

// ---------------------------------------------------------------------------

MlpSpec FeedforwardDynamics::make_spec(std::size_t state_dim, std::size_t action_dim,
                                       std::vector<std::size_t> hidden, Activation activation) {
  return MlpSpec{state_dim + action_dim, std::move(hidden), 2 * (state_dim + 1), activation};
}

FeedforwardDynamics::FeedforwardDynamics(std::size_t state_dim, std::size_t action_dim, MlpSpec spec,
                                         ParameterSet params, NormalizationStats stats)
    : DynamicsModel(ModelKind::kFeedforward, state_dim, action_dim, std::move(spec), std::move(params),
                    std::move(stats)) {
  require_dim(static_cast<std::ptrdiff_t>(spec_.input_dim), static_cast<std::ptrdiff_t>(state_dim + action_dim),
              "feedforward input width");
  require_dim(static_cast<std::ptrdiff_t>(spec_.output_dim), static_cast<std::ptrdiff_t>(2 * (state_dim + 1)),
              "feedforward output width");
}

FeedforwardDynamics::FeedforwardDynamics(std::size_t state_dim, std::size_t action_dim,
                                         std::vector<std::size_t> hidden, NormalizationStats stats,
                                         std::uint64_t seed, Activation activation)
    : FeedforwardDynamics(state_dim, action_dim, make_spec(state_dim, action_dim, hidden, activation),
                          init_parameters(make_spec(state_dim, action_dim, hidden, activation), seed),
                          std::move(stats)) {}

GaussianPrediction FeedforwardDynamics::predict(const Vector& state, const Vector& action) const {
  check_state_action(state, action);
  Vector input(static_cast<Eigen::Index>(state_dim_ + action_dim_));
  input << stats_.normalize_states(state), stats_.normalize_actions(action);
  const Matrix out = forward(input);
  const auto k = static_cast<Eigen::Index>(state_dim_ + 1);
  GaussianPrediction p;
  p.mean = out.col(0).head(k);
  p.log_variance = out.col(0).tail(k).unaryExpr([](double v) { return clamp_log_variance(v); });
  return p;
}

NetworkRows FeedforwardDynamics::build_rows(const TransitionBatch& normalized) const {
  const auto n = static_cast<Eigen::Index>(state_dim_);
  const auto m = static_cast<Eigen::Index>(action_dim_);
  const Eigen::Index count = normalized.states.cols();
  NetworkRows rows;
  rows.inputs.resize(n + m, count);
  rows.inputs.topRows(n) = normalized.states;
  rows.inputs.bottomRows(m) = normalized.actions;
  rows.targets.resize(n + 1, count);
  rows.targets.topRows(n) = normalized.next_states;
  rows.targets.row(n) = normalized.rewards.transpose();
  rows.column_dims.clear();
  return rows;
}

std::pair<Vector, double> FeedforwardDynamics::sample(const Vector& state, const Vector& action, Rng& rng) const {
  const GaussianPrediction p = predict(state, action);
  const auto n = static_cast<Eigen::Index>(state_dim_);
  Vector z(n + 1);
  for (Eigen::Index i = 0; i <= n; ++i) z(i) = p.mean(i) + std::exp(0.5 * p.log_variance(i)) * rng.normal();
  Vector next = stats_.denormalize_states(z.head(n));
  return {std::move(next), stats_.denormalize_reward(z(n))};
}

void FeedforwardDynamics::sample_batch(const Matrix& states, const Matrix& actions, std::span<Rng* const> rngs,
                                       Matrix& next_states, Vector& rewards) const {
  const auto n = static_cast<Eigen::Index>(state_dim_);
  const auto m = static_cast<Eigen::Index>(action_dim_);
  const Eigen::Index count = states.cols();
  require_dim(states.rows(), n, "sample_batch state");
  require_dim(actions.rows(), m, "sample_batch action");
  require_dim(static_cast<std::ptrdiff_t>(rngs.size()), count, "sample_batch random streams");
  Matrix inputs(n + m, count);
  inputs.topRows(n) = stats_.normalize_states(states);
  inputs.bottomRows(m) = stats_.normalize_actions(actions);
  const Matrix out = forward(inputs);
  Matrix z(n + 1, count);
  for (Eigen::Index j = 0; j < count; ++j) {
    Rng& rng = *rngs[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i <= n; ++i) {
      const double l = clamp_log_variance(out(n + 1 + i, j));
      z(i, j) = out(i, j) + std::exp(0.5 * l) * rng.normal();
    }
  }
  next_states = stats_.denormalize_states(z.topRows(n));
  rewards = (z.row(n).transpose().array() * stats_.reward_std + stats_.reward_mean).matrix();
}

std::unique_ptr<DynamicsModel> FeedforwardDynamics::clone() const {
  return std::make_unique<FeedforwardDynamics>(*this);
}

// ---------------------------------------------------------------------------

MlpSpec AutoregressiveDynamics::make_spec(std::size_t state_dim, std::size_t action_dim,
                                          std::vector<std::size_t> hidden, Activation activation) {
  return MlpSpec{input_width(state_dim, action_dim), std::move(hidden), 2, activation};
}

AutoregressiveDynamics::AutoregressiveDynamics(std::size_t state_dim, std::size_t action_dim, MlpSpec spec,
                                               ParameterSet params, NormalizationStats stats,
                                               std::vector<std::uint32_t> dimension_order)
    : DynamicsModel(ModelKind::kAutoregressive, state_dim, action_dim, std::move(spec), std::move(params),
                    std::move(stats)),
      order_(std::move(dimension_order)) {
  require_dim(static_cast<std::ptrdiff_t>(spec_.input_dim),
              static_cast<std::ptrdiff_t>(input_width(state_dim, action_dim)), "autoregressive input width");
  require_dim(static_cast<std::ptrdiff_t>(spec_.output_dim), 2, "autoregressive output width");
  if (order_.empty()) {
    for (std::uint32_t d = 0; d < state_dim; ++d) order_.push_back(d);
  }
  if (order_.size() != state_dim) throw ConfigError("dimension order must list every state dimension");
  rank_.assign(state_dim, state_dim);
  for (std::size_t step = 0; step < order_.size(); ++step) {
    const std::uint32_t d = order_[step];
    if (d >= state_dim || rank_[d] != state_dim) throw ConfigError("dimension order is not a permutation");
    rank_[d] = static_cast<std::uint32_t>(step);
  }
}

AutoregressiveDynamics::AutoregressiveDynamics(std::size_t state_dim, std::size_t action_dim,
                                               std::vector<std::size_t> hidden, NormalizationStats stats,
                                               std::uint64_t seed, std::vector<std::uint32_t> dimension_order,
                                               Activation activation)
    : AutoregressiveDynamics(state_dim, action_dim, make_spec(state_dim, action_dim, hidden, activation),
                             init_parameters(make_spec(state_dim, action_dim, hidden, activation), seed),
                             std::move(stats), std::move(dimension_order)) {}

std::uint32_t AutoregressiveDynamics::dimension_at(std::size_t step) const {
  if (step > state_dim_) throw ShapeError("autoregressive step out of range");
  return step == state_dim_ ? static_cast<std::uint32_t>(state_dim_) : order_[step];
}

Vector AutoregressiveDynamics::make_input(const Vector& state_norm, const Vector& action_norm,
                                          const Vector& prev_norm, std::size_t step) const {
  const auto n = static_cast<Eigen::Index>(state_dim_);
  const auto m = static_cast<Eigen::Index>(action_dim_);
  Vector input = Vector::Zero(static_cast<Eigen::Index>(spec_.input_dim));
  input.segment(0, n) = state_norm;
  input.segment(n, m) = action_norm;
  input.segment(n + m, n) = prev_norm;
  input(2 * n + m + dimension_at(step)) = 1.0;
  return input;
}

GaussianPrediction AutoregressiveDynamics::predict_dim(const Vector& state, const Vector& action,
                                                       const Vector& prev_dims, std::size_t step) const {
  check_state_action(state, action);
  require_dim(prev_dims.size(), static_cast<std::ptrdiff_t>(state_dim_), "autoregressive prev_dims");
  if (step > state_dim_) throw ShapeError("autoregressive step out of range");
  const auto n = static_cast<Eigen::Index>(state_dim_);
  Vector prev_norm = Vector::Zero(n);
  for (Eigen::Index d = 0; d < n; ++d) {
    if (rank_[static_cast<std::size_t>(d)] >= step) {
      if (prev_dims(d) != 0.0) {
        throw MaskingError("prev_dims carries a value for state dimension " + std::to_string(d) +
                           ", which is generated at or after step " + std::to_string(step));
      }
    } else {
      prev_norm(d) = (prev_dims(d) - stats_.state_mean(d)) / stats_.state_std(d);
    }
  }
  const Vector input = make_input(stats_.normalize_states(state), stats_.normalize_actions(action), prev_norm, step);
  const Matrix out = forward(input);
  GaussianPrediction p;
  p.mean = Vector::Constant(1, out(0, 0));
  p.log_variance = Vector::Constant(1, clamp_log_variance(out(1, 0)));
  return p;
}

NetworkRows AutoregressiveDynamics::build_rows(const TransitionBatch& normalized) const {
  const auto n = static_cast<Eigen::Index>(state_dim_);
  const auto m = static_cast<Eigen::Index>(action_dim_);
  const Eigen::Index count = normalized.states.cols();
  const Eigen::Index per = n + 1;
  NetworkRows rows;
  rows.inputs = Matrix::Zero(static_cast<Eigen::Index>(spec_.input_dim), count * per);
  rows.targets.resize(1, count * per);
  rows.column_dims.resize(static_cast<std::size_t>(count * per));
  for (Eigen::Index t = 0; t < count; ++t) {
    for (Eigen::Index step = 0; step < per; ++step) {
      const Eigen::Index c = t * per + step;
      const std::uint32_t dim = dimension_at(static_cast<std::size_t>(step));
      rows.inputs.block(0, c, n, 1) = normalized.states.col(t);
      rows.inputs.block(n, c, m, 1) = normalized.actions.col(t);
      // teacher forcing: ground-truth values of every dimension generated earlier
      for (Eigen::Index earlier = 0; earlier < step && earlier < n; ++earlier) {
        const std::uint32_t d = order_[static_cast<std::size_t>(earlier)];
        rows.inputs(n + m + d, c) = normalized.next_states(d, t);
      }
      rows.inputs(2 * n + m + dim, c) = 1.0;
      rows.targets(0, c) = dim == state_dim_ ? normalized.rewards(t) : normalized.next_states(dim, t);
      rows.column_dims[static_cast<std::size_t>(c)] = dim;
    }
  }
  return rows;
}

double AutoregressiveDynamics::nll_sequential(const TransitionBatch& batch) const {
  if (batch.empty()) throw EmptyInputError("nll: empty batch");
  const auto n = static_cast<Eigen::Index>(state_dim_);
  double total = 0.0;
  for (Eigen::Index t = 0; t < batch.states.cols(); ++t) {
    Vector prev = Vector::Zero(n);
    double transition = 0.0;
    for (std::size_t step = 0; step <= state_dim_; ++step) {
      const GaussianPrediction p = predict_dim(batch.states.col(t), batch.actions.col(t), prev, step);
      const std::uint32_t dim = dimension_at(step);
      const double raw = dim == state_dim_ ? batch.rewards(t) : batch.next_states(dim, t);
      const double sd = stats_.target_std(dim);
      const double mean = dim == state_dim_ ? stats_.reward_mean : stats_.state_mean(dim);
      const double z = (raw - mean) / sd;
      const double l = p.log_variance(0);
      const double diff = z - p.mean(0);
      transition += kHalfLog2Pi + 0.5 * l + 0.5 * diff * diff * std::exp(-l) + std::log(sd);
      if (dim < state_dim_) prev(dim) = raw;
    }
    total += transition;
  }
  return total / static_cast<double>(batch.size());
}

std::pair<Vector, double> AutoregressiveDynamics::sample(const Vector& state, const Vector& action, Rng& rng) const {
  Matrix next;
  Vector rewards;
  Rng* streams[] = {&rng};
  sample_batch(state, action, streams, next, rewards);
  return {next.col(0), rewards(0)};
}

void AutoregressiveDynamics::sample_batch(const Matrix& states, const Matrix& actions,
                                          std::span<Rng* const> rngs, Matrix& next_states,
                                          Vector& rewards) const {
  const auto n = static_cast<Eigen::Index>(state_dim_);
  const auto m = static_cast<Eigen::Index>(action_dim_);
  const Eigen::Index count = states.cols();
  require_dim(states.rows(), n, "sample_batch state");
  require_dim(actions.rows(), m, "sample_batch action");
  require_dim(static_cast<std::ptrdiff_t>(rngs.size()), count, "sample_batch random streams");
  Matrix inputs = Matrix::Zero(static_cast<Eigen::Index>(spec_.input_dim), count);
  inputs.topRows(n) = stats_.normalize_states(states);
  inputs.middleRows(n, m) = stats_.normalize_actions(actions);
  Matrix z(n + 1, count);
  for (std::size_t step = 0; step <= state_dim_; ++step) {
    const std::uint32_t dim = dimension_at(step);
    auto onehot = inputs.middleRows(2 * n + m, n + 1);
    onehot.setZero();
    onehot.row(dim).setOnes();
    const Matrix out = forward(inputs);
    for (Eigen::Index j = 0; j < count; ++j) {
      const double l = clamp_log_variance(out(1, j));
      const double value = out(0, j) + std::exp(0.5 * l) * rngs[static_cast<std::size_t>(j)]->normal();
      z(dim, j) = value;
      if (dim < state_dim_) inputs(n + m + dim, j) = value;
    }
  }
  next_states = stats_.denormalize_states(z.topRows(n));
  rewards = (z.row(n).transpose().array() * stats_.reward_std + stats_.reward_mean).matrix();
}

std::unique_ptr<DynamicsModel> AutoregressiveDynamics::clone() const {
  return std::make_unique<AutoregressiveDynamics>(*this);
}

// ---------------------------------------------------------------------------

std::unique_ptr<DynamicsModel> make_model(ModelKind kind, std::size_t state_dim, std::size_t action_dim,
                                          const std::vector<std::size_t>& hidden,
                                          const NormalizationStats& stats, std::uint64_t seed,
                                          const std::vector<std::uint32_t>& dimension_order,
                                          Activation activation) {
  if (kind == ModelKind::kFeedforward) {
    return std::make_unique<FeedforwardDynamics>(state_dim, action_dim, hidden, stats, seed, activation);
  }
  return std::make_unique<AutoregressiveDynamics>(state_dim, action_dim, hidden, stats, seed,
                                                  dimension_order, activation);
}

double ff_entropy(const FeedforwardDynamics& model, const Vector& state, const Vector& action) {
  const GaussianPrediction p = model.predict(state, action);
  const double log_2pi_e = std::log(2.0 * std::numbers::pi) + 1.0;
  return 0.5 * (static_cast<double>(p.log_variance.size()) * log_2pi_e + p.log_variance.sum()) +
         model.stats().log_jacobian();
}

}  // namespace ardm
