#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "ardm/checkpoint.hpp"
#include "ardm/dynamics.hpp"
#include "ardm/error.hpp"
#include "ardm/rng.hpp"

using namespace ardm;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

TransitionBatch random_batch(std::size_t n, std::size_t m, std::size_t count, std::uint64_t seed) {
  TransitionBatch b(n, m, count);
  Rng rng(seed);
  for (std::size_t j = 0; j < count; ++j) {
    Vector s(n), a(m), next(n);
    for (auto& v : s) v = 2.0 * rng.normal() + 1.0;
    for (auto& v : a) v = 0.5 * rng.normal();
    for (auto& v : next) v = 3.0 * rng.normal() - 2.0;
    b.set(j, s, a, 4.0 * rng.normal() + 0.5, next);
  }
  return b;
}

// s' and r' jointly N(0, [[1, rho], [rho, 1]]); s' is generated first, r' given s'.
AutoregressiveDynamics correlated_teacher(double rho) {
  auto stats = NormalizationStats::identity(1, 1);
  MlpSpec spec = AutoregressiveDynamics::make_spec(1, 1, {});
  ParameterSet p(spec);
  // input: [s, a, prev s', onehot(s'), onehot(r')]
  p.weights(0)(0, 2) = rho;
  p.weights(0)(1, 4) = std::log(1.0 - rho * rho);
  return AutoregressiveDynamics(1, 1, spec, p, stats);
}

}  // namespace

TEST(Normalization, TwoPointColumn) {
  TransitionBatch b(1, 1, 2);
  b.set(0, Vector::Constant(1, 0.0), Vector::Constant(1, 5.0), 3.0, Vector::Constant(1, 1.0));
  b.set(1, Vector::Constant(1, 2.0), Vector::Constant(1, 5.0), 3.0, Vector::Constant(1, 1.0));
  const auto stats = fit_normalization(b);
  EXPECT_DOUBLE_EQ(stats.state_mean(0), 1.0);
  EXPECT_DOUBLE_EQ(stats.state_std(0), 1.0);
  const TransitionBatch z = normalize(stats, b);
  EXPECT_DOUBLE_EQ(z.states(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(z.states(0, 1), 1.0);
  // constant columns: floored std, zero after normalizing
  EXPECT_EQ(stats.action_std(0), NormalizationStats::kStdFloor);
  EXPECT_EQ(stats.reward_std, NormalizationStats::kStdFloor);
  EXPECT_EQ(z.actions.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(z.rewards.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Normalization, RoundTrip) {
  const TransitionBatch b = random_batch(3, 2, 50, 1);
  const auto stats = fit_normalization(b);
  const TransitionBatch back = denormalize(stats, normalize(stats, b));
  auto rel = [](const Matrix& x, const Matrix& y) { return (x - y).cwiseAbs().maxCoeff() / (1.0 + y.cwiseAbs().maxCoeff()); };
  EXPECT_LT(rel(back.states, b.states), 1e-12);
  EXPECT_LT(rel(back.actions, b.actions), 1e-12);
  EXPECT_LT(rel(back.next_states, b.next_states), 1e-12);
  EXPECT_LT(rel(back.rewards, b.rewards), 1e-12);
  const TransitionBatch z = normalize(stats, b);
  EXPECT_LT(std::abs(z.states.row(1).mean()), 1e-12);
  EXPECT_NEAR(std::sqrt(z.states.row(1).array().square().mean()), 1.0, 1e-12);
}

TEST(FeedforwardPredict, CartpoleSizedShapes) {
  const MlpSpec spec = FeedforwardDynamics::make_spec(5, 1, {16, 16});
  EXPECT_EQ(spec.input_dim, 6u);
  EXPECT_EQ(spec.output_dim, 12u);
  FeedforwardDynamics model(5, 1, {16, 16}, NormalizationStats::identity(5, 1), 3);
  const auto p = model.predict(Vector::Ones(5), Vector::Ones(1));
  EXPECT_EQ(p.mean.size(), 6);
  EXPECT_EQ(p.log_variance.size(), 6);
  EXPECT_THROW(model.predict(Vector::Ones(4), Vector::Ones(1)), ShapeError);
}

TEST(FeedforwardPredict, ZeroWeightsGiveClampedBias) {
  const MlpSpec spec = FeedforwardDynamics::make_spec(2, 1, {4});
  ParameterSet p(spec);
  p.bias(1) << 0.1, 0.2, 0.3, 7.0, -20.0, 1.5;
  FeedforwardDynamics model(2, 1, spec, p, NormalizationStats::identity(2, 1));
  const auto pred = model.predict(Vector::Constant(2, 3.0), Vector::Constant(1, -1.0));
  EXPECT_EQ(pred.mean, (Vector(3) << 0.1, 0.2, 0.3).finished());
  EXPECT_EQ(pred.log_variance, (Vector(3) << 5.0, -10.0, 1.5).finished());
}

TEST(FeedforwardPredict, MatchesManualForward) {
  Rng rng(5);
  const TransitionBatch b = random_batch(3, 2, 20, 2);
  const auto stats = fit_normalization(b);
  FeedforwardDynamics model(3, 2, {8, 8}, stats, 17);
  const Vector s = b.states.col(4);
  const Vector a = b.actions.col(4);
  Vector x(5);
  for (int i = 0; i < 3; ++i) x(i) = (s(i) - stats.state_mean(i)) / stats.state_std(i);
  for (int i = 0; i < 2; ++i) x(3 + i) = (a(i) - stats.action_mean(i)) / stats.action_std(i);
  const auto& p = model.parameters();
  Vector h = x;
  for (std::size_t l = 0; l < 3; ++l) {
    Vector y = Vector::Zero(p.bias(l).size());
    for (Eigen::Index o = 0; o < y.size(); ++o) {
      double acc = p.bias(l)(o);
      for (Eigen::Index i = 0; i < h.size(); ++i) acc += p.weights(l)(o, i) * h(i);
      y(o) = l < 2 ? std::max(acc, 0.0) : acc;
    }
    h = y;
  }
  const auto pred = model.predict(s, a);
  for (int d = 0; d < 4; ++d) {
    EXPECT_NEAR(pred.mean(d), h(d), 1e-12);
    EXPECT_NEAR(pred.log_variance(d), std::clamp(h(4 + d), -10.0, 5.0), 1e-12);
  }
}

TEST(FeedforwardNll, ClosedForms) {
  // n = 0 is not allowed, so check the single-dimension closed form on the raw terms
  Matrix out(2, 1);
  out << 0.0, 0.0;
  Matrix target(1, 1);
  target << 0.0;
  EXPECT_NEAR(gaussian_nll_terms(out, target)(0, 0), 0.9189385, 1e-7);
  target << 1.0;
  EXPECT_NEAR(gaussian_nll_terms(out, target)(0, 0), 0.9189385 + 0.5, 1e-7);

  const MlpSpec spec = FeedforwardDynamics::make_spec(2, 1, {4});
  ParameterSet p(spec);
  p.bias(1) << 0.5, -0.5, 2.0, 0.0, 0.0, 0.0;
  FeedforwardDynamics model(2, 1, spec, p, NormalizationStats::identity(2, 1));
  TransitionBatch b(2, 1, 1);
  b.set(0, Vector::Ones(2), Vector::Ones(1), 2.0, (Vector(2) << 0.5, -0.5).finished());
  EXPECT_NEAR(model.nll(b), 3 * 0.9189385, 1e-7);
  b.set(0, Vector::Ones(2), Vector::Ones(1), 3.0, (Vector(2) << 0.5, -0.5).finished());
  EXPECT_NEAR(model.nll(b), 3 * 0.9189385 + 0.5, 1e-7);
}

TEST(FeedforwardNll, MatchesBruteForceSum) {
  const TransitionBatch b = random_batch(3, 2, 37, 3);
  const auto stats = fit_normalization(b);
  FeedforwardDynamics model(3, 2, {8}, stats, 4);
  double total = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    const auto pred = model.predict(b.states.col(j), b.actions.col(j));
    for (int d = 0; d < 4; ++d) {
      const double x = d < 3 ? b.next_states(d, j) : b.rewards(j);
      const double mu = d < 3 ? stats.state_mean(d) : stats.reward_mean;
      const double sd = d < 3 ? stats.state_std(d) : stats.reward_std;
      const double raw_mean = pred.mean(d) * sd + mu;
      const double raw_var = std::exp(pred.log_variance(d)) * sd * sd;
      total += kHalfLog2Pi + 0.5 * std::log(raw_var) + (x - raw_mean) * (x - raw_mean) / (2 * raw_var);
    }
  }
  EXPECT_NEAR(model.nll(b), total / static_cast<double>(b.size()), 1e-10);
  EXPECT_NEAR(model.nll_per_dimension(b).sum(), model.nll(b), 1e-10);
  EXPECT_THROW(model.nll(TransitionBatch(3, 2, 0)), EmptyInputError);
}

TEST(AutoregressivePredict, InputWidthAndOrder) {
  EXPECT_EQ(AutoregressiveDynamics::input_width(5, 1), 17u);
  EXPECT_EQ(AutoregressiveDynamics::make_spec(5, 1, {8}).input_dim, 17u);
  EXPECT_EQ(AutoregressiveDynamics::make_spec(5, 1, {8}).output_dim, 2u);

  AutoregressiveDynamics model(3, 1, {8}, NormalizationStats::identity(3, 1), 9, {2, 0, 1});
  EXPECT_EQ(model.dimension_at(0), 2u);
  EXPECT_EQ(model.dimension_at(1), 0u);
  EXPECT_EQ(model.dimension_at(3), 3u);
  const Vector s = Vector::Ones(3);
  const Vector a = Vector::Ones(1);
  // step 1: only dimension 2 has been generated
  EXPECT_NO_THROW(model.predict_dim(s, a, (Vector(3) << 0.0, 0.0, 0.7).finished(), 1));
  EXPECT_THROW(model.predict_dim(s, a, (Vector(3) << 0.3, 0.0, 0.7).finished(), 1), MaskingError);
  EXPECT_THROW(model.predict_dim(s, a, (Vector(3) << 0.0, 0.0, 0.7).finished(), 0), MaskingError);
  const Vector in = model.make_input(s, a, (Vector(3) << 0.0, 0.0, 0.7).finished(), 1);
  ASSERT_EQ(in.size(), 11);
  EXPECT_EQ(in.segment(7, 4), (Vector(4) << 1, 0, 0, 0).finished());
  EXPECT_EQ(in.segment(4, 3), (Vector(3) << 0.0, 0.0, 0.7).finished());
}

TEST(AutoregressivePredict, FirstStepIgnoresPrevInputs) {
  AutoregressiveDynamics a(2, 1, {8}, NormalizationStats::identity(2, 1), 9);
  AutoregressiveDynamics b = a;
  // weights reading the previous-dims block only see zeros at step 0
  for (Eigen::Index o = 0; o < 8; ++o) b.parameters().weights(0)(o, 3) += 1.0;
  const Vector s = Vector::Ones(2), act = Vector::Ones(1), zero = Vector::Zero(2);
  const auto pa = a.predict_dim(s, act, zero, 0);
  const auto pb = b.predict_dim(s, act, zero, 0);
  EXPECT_EQ(pa.mean, pb.mean);
  EXPECT_EQ(pa.log_variance, pb.log_variance);
}

TEST(AutoregressiveNll, PerfectPredictionClosedForm) {
  const MlpSpec spec = AutoregressiveDynamics::make_spec(1, 1, {});
  ParameterSet p(spec);
  p.weights(0)(0, 3) = 0.25;  // mean of s' = 0.25
  p.weights(0)(0, 4) = -1.0;  // mean of r' = -1
  AutoregressiveDynamics model(1, 1, spec, p, NormalizationStats::identity(1, 1));
  TransitionBatch b(1, 1, 1);
  b.set(0, Vector::Constant(1, 3.0), Vector::Constant(1, 2.0), -1.0, Vector::Constant(1, 0.25));
  EXPECT_NEAR(model.nll(b), 2 * 0.9189385, 1e-7);
  EXPECT_NEAR(model.nll_sequential(b), 2 * 0.9189385, 1e-7);
}

TEST(AutoregressiveNll, MaskedMatchesSequential) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TransitionBatch b = random_batch(4, 2, 33, 10 + seed);
    const auto stats = fit_normalization(b);
    std::vector<std::uint32_t> order = seed % 2 ? std::vector<std::uint32_t>{3, 1, 0, 2} : std::vector<std::uint32_t>{};
    AutoregressiveDynamics model(4, 2, {16, 16}, stats, seed, order, seed % 3 ? Activation::kRelu : Activation::kTanh);
    EXPECT_LE(std::abs(model.nll(b) - model.nll_sequential(b)), 1e-10);
    EXPECT_NEAR(model.nll_per_dimension(b).sum(), model.nll(b), 1e-10);
  }
}

TEST(AutoregressiveNll, TeacherMatchesJointEntropy) {
  const double rho = 0.9;
  const AutoregressiveDynamics teacher = correlated_teacher(rho);
  const std::size_t count = 200000;
  TransitionBatch b(1, 1, count);
  Rng rng(77);
  for (std::size_t j = 0; j < count; ++j) {
    const double x = rng.normal();
    const double r = rho * x + std::sqrt(1 - rho * rho) * rng.normal();
    b.set(j, Vector::Constant(1, 0.3), Vector::Constant(1, -0.2), r, Vector::Constant(1, x));
  }
  const double det = 1.0 - rho * rho;
  const double entropy = 0.5 * std::log(std::pow(2 * std::numbers::pi * std::numbers::e, 2) * det);
  // per-sample NLL has variance 1 (two unit chi-square halves), so 5 / sqrt(count) is generous
  EXPECT_NEAR(teacher.nll(b), entropy, 5.0 / std::sqrt(static_cast<double>(count)));
  // the best diagonal model pays the analytic gap
  const double gap = 0.5 * std::log(1.0 / det);
  const double diag_nll = 2 * (kHalfLog2Pi + 0.5);
  EXPECT_NEAR(diag_nll - entropy, gap, 1e-12);
}

TEST(AutoregressiveSample, TeacherCorrelation) {
  const AutoregressiveDynamics teacher = correlated_teacher(0.9);
  const std::size_t count = 100000;
  Rng rng(12);
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t j = 0; j < count; ++j) {
    const auto [next, r] = teacher.sample(Vector::Zero(1), Vector::Zero(1), rng);
    sx += next(0);
    sy += r;
    sxx += next(0) * next(0);
    syy += r * r;
    sxy += next(0) * r;
  }
  const double N = static_cast<double>(count);
  const double cov = sxy / N - sx / N * sy / N;
  const double corr = cov / std::sqrt((sxx / N - sx * sx / N / N) * (syy / N - sy * sy / N / N));
  EXPECT_NEAR(corr, 0.9, 0.02);
}

TEST(AutoregressiveSample, ForwardPassCount) {
  AutoregressiveDynamics m1(1, 1, {4}, NormalizationStats::identity(1, 1), 1);
  Rng rng(1);
  const std::size_t before = m1.forward_passes();
  m1.sample(Vector::Ones(1), Vector::Ones(1), rng);
  EXPECT_EQ(m1.forward_passes() - before, 2u);
  AutoregressiveDynamics m4(4, 2, {4}, NormalizationStats::identity(4, 2), 1);
  const std::size_t b4 = m4.forward_passes();
  m4.sample(Vector::Ones(4), Vector::Ones(2), rng);
  EXPECT_EQ(m4.forward_passes() - b4, 5u);
}

TEST(AutoregressiveSample, NoConditioningMatchesIndependentDraws) {
  AutoregressiveDynamics model(2, 1, {8}, NormalizationStats::identity(2, 1), 21);
  for (Eigen::Index o = 0; o < 8; ++o) model.parameters().weights(0).block(o, 3, 1, 2).setZero();
  const Vector s = (Vector(2) << 0.4, -0.3).finished(), a = Vector::Constant(1, 0.8);
  std::vector<double> mu(3), sd(3);
  for (std::size_t step = 0; step < 3; ++step) {
    const auto p = model.predict_dim(s, a, Vector::Zero(2), step);
    mu[model.dimension_at(step)] = p.mean(0);
    sd[model.dimension_at(step)] = std::exp(0.5 * p.log_variance(0));
  }
  const std::size_t count = 100000;
  Rng rng(3);
  Vector sum = Vector::Zero(3), sq = Vector::Zero(3);
  double cross = 0.0;
  for (std::size_t j = 0; j < count; ++j) {
    const auto [next, r] = model.sample(s, a, rng);
    const Vector x = (Vector(3) << next(0), next(1), r).finished();
    sum += x;
    sq += x.cwiseAbs2();
    cross += (x(0) - mu[0]) * (x(1) - mu[1]) / (sd[0] * sd[1]);
  }
  const double N = static_cast<double>(count);
  for (int d = 0; d < 3; ++d) {
    EXPECT_NEAR(sum(d) / N, mu[d], 4 * sd[d] / std::sqrt(N));
    const double var = sq(d) / N - sum(d) * sum(d) / N / N;
    EXPECT_NEAR(var / (sd[d] * sd[d]), 1.0, 0.02);
  }
  EXPECT_NEAR(cross / N, 0.0, 4.0 / std::sqrt(N));
}

TEST(FeedforwardSample, TightVarianceAndDeterminism) {
  const MlpSpec spec = FeedforwardDynamics::make_spec(2, 1, {4});
  ParameterSet p(spec);
  p.bias(1) << 1.0, 2.0, 3.0, -30.0, -30.0, -30.0;
  FeedforwardDynamics model(2, 1, spec, p, NormalizationStats::identity(2, 1));
  // clamp floor -10 gives sigma = e^-5; compare the fraction inside +-1e-2 with the normal cdf
  const double sigma = std::exp(-5.0);
  const double inside = std::erf(1e-2 / (sigma * std::sqrt(2.0)));
  Rng rng(8);
  const int count = 20000;
  int hits = 0;
  double worst = 0.0;
  for (int i = 0; i < count; ++i) {
    const auto [next, r] = model.sample(Vector::Zero(2), Vector::Zero(1), rng);
    const double e = std::abs(next(0) - 1.0);
    hits += e < 1e-2;
    worst = std::max({worst, e, std::abs(next(1) - 2.0), std::abs(r - 3.0)});
  }
  EXPECT_NEAR(static_cast<double>(hits) / count, inside, 4 * std::sqrt(inside * (1 - inside) / count));
  EXPECT_LT(worst, 6 * sigma);
  FeedforwardDynamics random_model(2, 1, {8}, NormalizationStats::identity(2, 1), 4);
  Rng r1(99), r2(99);
  const auto x1 = random_model.sample(Vector::Ones(2), Vector::Ones(1), r1);
  const auto x2 = random_model.sample(Vector::Ones(2), Vector::Ones(1), r2);
  EXPECT_EQ(x1.first, x2.first);
  EXPECT_EQ(x1.second, x2.second);
}

TEST(FeedforwardSample, MonteCarloMean) {
  const TransitionBatch b = random_batch(2, 1, 30, 6);
  const auto stats = fit_normalization(b);
  FeedforwardDynamics model(2, 1, {8}, stats, 31);
  const Vector s = b.states.col(0), a = b.actions.col(0);
  const auto pred = model.predict(s, a);
  const std::size_t count = 100000;
  Rng rng(4);
  Vector sum = Vector::Zero(3);
  for (std::size_t j = 0; j < count; ++j) {
    const auto [next, r] = model.sample(s, a, rng);
    sum += (Vector(3) << next(0), next(1), r).finished();
  }
  for (int d = 0; d < 3; ++d) {
    const double sd = stats.target_std(static_cast<std::size_t>(d));
    const double mean = pred.mean(d) * sd + (d < 2 ? stats.state_mean(d) : stats.reward_mean);
    const double sigma = std::exp(0.5 * pred.log_variance(d)) * sd;
    EXPECT_NEAR(sum(d) / count, mean, 4 * sigma / std::sqrt(static_cast<double>(count)));
  }
}

TEST(FeedforwardSample, OwnSamplesScoreAtEntropy) {
  const TransitionBatch b = random_batch(2, 1, 30, 7);
  const auto stats = fit_normalization(b);
  FeedforwardDynamics model(2, 1, {8}, stats, 32);
  const Vector s = b.states.col(1), a = b.actions.col(1);
  const std::size_t count = 100000;
  TransitionBatch own(2, 1, count);
  Rng rng(5);
  for (std::size_t j = 0; j < count; ++j) {
    const auto [next, r] = model.sample(s, a, rng);
    own.set(j, s, a, r, next);
  }
  const double h = ff_entropy(model, s, a);
  EXPECT_NEAR(model.nll(own), h, 0.01 * std::abs(h));
}

TEST(BatchedSampling, MatchesOneAtATime) {
  for (ModelKind kind : {ModelKind::kFeedforward, ModelKind::kAutoregressive}) {
    auto model = make_model(kind, 3, 1, {8}, NormalizationStats::identity(3, 1), 5);
    Rng src(1);
    Matrix states(3, 4), actions(1, 4);
    for (auto& v : states.reshaped()) v = src.normal();
    for (auto& v : actions.reshaped()) v = src.normal();
    std::vector<Rng> rngs, solo;
    for (int j = 0; j < 4; ++j) {
      rngs.push_back(Rng::stream(3, j));
      solo.push_back(Rng::stream(3, j));
    }
    std::vector<Rng*> ptrs;
    for (auto& r : rngs) ptrs.push_back(&r);
    Matrix next;
    Vector rewards;
    model->sample_batch(states, actions, ptrs, next, rewards);
    for (int j = 0; j < 4; ++j) {
      const auto [n1, r1] = model->sample(states.col(j), actions.col(j), solo[static_cast<std::size_t>(j)]);
      EXPECT_LT((n1 - next.col(j)).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_NEAR(r1, rewards(j), 1e-12);
    }
  }
}

TEST(Checkpoint, RoundTripPreservesModel) {
  const TransitionBatch b = random_batch(3, 2, 20, 9);
  const auto stats = fit_normalization(b);
  for (ModelKind kind : {ModelKind::kFeedforward, ModelKind::kAutoregressive}) {
    auto model = make_model(kind, 3, 2, {8, 4}, stats, 7, kind == ModelKind::kAutoregressive ? std::vector<std::uint32_t>{1, 2, 0} : std::vector<std::uint32_t>{});
    const auto bytes = encode_checkpoint(*model, {{"seed", "7"}, {"validation_nll", "1.5"}});
    const Checkpoint back = decode_checkpoint(bytes);
    EXPECT_EQ(back.model->kind(), kind);
    EXPECT_EQ(back.model->parameters(), model->parameters());
    EXPECT_TRUE(back.model->stats() == model->stats());
    EXPECT_EQ(back.model->nll(b), model->nll(b));
    EXPECT_EQ(back.metadata.at("seed"), "7");
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ARDM");
    EXPECT_EQ(bytes[6], kind == ModelKind::kAutoregressive ? 1 : 0);
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 20);
    EXPECT_THROW(decode_checkpoint(cut), FormatError);
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bad), FormatError);
  }
}
