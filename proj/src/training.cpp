#include "ardm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ardm/error.hpp"
#include "ardm/io.hpp"
#include "ardm/parallel.hpp"
#include "ardm/rng.hpp"

namespace ardm {

namespace {

template <typename T>
bool one_of(const T& v, std::initializer_list<T> allowed) {
  return std::find(allowed.begin(), allowed.end(), v) != allowed.end();
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.index(i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd_momentum"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd_momentum)");
}

void TrainConfig::validate() const {
  if (layers == 0) throw ConfigError("train: layers must be positive");
  if (width == 0) throw ConfigError("train: width must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (!(input_noise_sigma >= 0.0) || !std::isfinite(input_noise_sigma)) throw ConfigError("train: input_noise_sigma must be >= 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("train: weight_decay must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be >= 0");
  if (model_kind == ModelKind::kFeedforward && !dimension_order.empty()) {
    throw ConfigError("train: dimension_order applies to autoregressive models only");
  }
}

bool TrainConfig::on_full_grid() const {
  return one_of<std::size_t>(layers, {3, 4}) && one_of<std::size_t>(width, {512, 1024}) &&
         one_of(input_noise_sigma, {0.0, 1e-6, 1e-7}) && one_of(weight_decay, {0.0, 1e-6}) &&
         one_of(learning_rate, {1e-3, 3e-4});
}

std::string TrainConfig::key() const {
  std::ostringstream out;
  out << "kind=" << to_string(model_kind) << ";layers=" << layers << ";width=" << width
      << ";noise=" << io::format_real(input_noise_sigma) << ";wd=" << io::format_real(weight_decay)
      << ";lr=" << io::format_real(learning_rate) << ";epochs=" << epochs << ";batch=" << batch_size
      << ";opt=" << to_string(optimizer) << ";act=" << to_string(activation) << ";order=";
  for (std::size_t i = 0; i < dimension_order.size(); ++i) out << (i ? "," : "") << dimension_order[i];
  return out.str();
}

std::uint64_t TrainConfig::digest() const { return io::fnv1a(key()); }

DatasetSplit split_dataset(const TransitionBatch& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split_dataset: train fraction must lie strictly between 0 and 1");
  }
  const std::size_t n = data.size();
  if (n < 2) throw EmptyInputError("split_dataset: need at least 2 transitions");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(seed, 0x5B117);
  shuffle(order, rng);
  auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  DatasetSplit split;
  split.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  split.train = data.select(split.train_indices);
  split.validation = data.select(split.validation_indices);
  return split;
}

TrainResult train_model(const TrainConfig& config, const TransitionBatch& train,
                        const TransitionBatch& validation, const TrainOptions& options) {
  config.validate();
  train.validate();
  if (train.empty()) throw EmptyInputError("train_model: empty training split");
  if (!validation.empty()) {
    validation.validate();
    if (validation.state_dim() != train.state_dim() || validation.action_dim() != train.action_dim()) {
      throw ShapeError("train_model: training and validation splits have different dimensions");
    }
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = train.state_dim();
  const std::size_t m = train.action_dim();

  const NormalizationStats stats = fit_normalization(train);
  std::unique_ptr<DynamicsModel> model =
      make_model(config.model_kind, n, m, std::vector<std::size_t>(config.layers, config.width), stats,
                 config.seed, config.dimension_order, config.activation);
  const MlpSpec spec = model->spec();
  ParameterSet& params = model->parameters();
  const TransitionBatch train_norm = normalize(stats, train);
  const double log_jacobian = stats.log_jacobian();

  OptimizerState opt = config.optimizer == OptimizerKind::kAdam ? OptimizerState::adam(params.size())
                                                               : OptimizerState::sgd_momentum(params.size());
  const std::size_t count = train.size();
  const std::size_t batches_per_epoch = (count + config.batch_size - 1) / config.batch_size;
  const LrSchedule schedule{config.learning_rate, static_cast<std::uint64_t>(config.epochs * batches_per_epoch)};

  TrainResult result;
  TrainReport& report = result.report;
  std::vector<double> best_params;
  if (!validation.empty()) {
    report.validation_nll.push_back(model->nll(validation));
    report.best_validation_nll = report.validation_nll.back();
    report.best_epoch = 0;
    best_params = params.buffer();
  }

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grads(params.size());
  ForwardCache cache;
  Rng noise_rng = Rng::stream(config.seed, 0x7015E);
  const auto noisy_rows = static_cast<Eigen::Index>(n + m);
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(config.seed, 0x5A0FF1E, epoch);
    shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(count, lo + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + lo, hi - lo);
      NetworkRows rows = model->build_rows(train_norm.select(batch));
      if (config.input_noise_sigma > 0.0) {
        for (Eigen::Index c = 0; c < rows.inputs.cols(); ++c) {
          for (Eigen::Index r = 0; r < noisy_rows; ++r) rows.inputs(r, c) += config.input_noise_sigma * noise_rng.normal();
        }
      }
      const Matrix outputs = mlp_forward(spec, params, rows.inputs, &cache);
      const double scale = 1.0 / static_cast<double>(batch.size());
      const double loss = gaussian_nll_terms(outputs, rows.targets).sum() * scale + log_jacobian;
      const double lr = lr_at(schedule, step);
      if (!std::isfinite(loss)) {
        throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step));
      }
      if (options.on_step) options.on_step(StepInfo{epoch, static_cast<std::size_t>(step), batch, loss, lr});
      loss_sum += loss * static_cast<double>(batch.size());
      mlp_backward(spec, params, cache, gaussian_nll_gradient(outputs, rows.targets, scale), grads);
      try {
        optimizer_step(params, grads, opt, lr, config.weight_decay);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step));
      }
    }
    report.train_nll.push_back(loss_sum / static_cast<double>(count));
    double val = std::numeric_limits<double>::quiet_NaN();
    if (!validation.empty()) {
      val = model->nll(validation);
      if (!std::isfinite(val)) {
        throw DivergenceError("training diverged: non-finite validation NLL after epoch " + std::to_string(epoch));
      }
      report.validation_nll.push_back(val);
      if (val < report.best_validation_nll) {
        report.best_validation_nll = val;
        report.best_epoch = epoch;
        best_params = params.buffer();
      }
    }
    if (options.on_epoch) options.on_epoch(epoch, report.train_nll.back(), val);
  }

  if (!validation.empty()) {
    params.buffer() = std::move(best_params);
  } else {
    report.best_epoch = config.epochs;
    report.best_validation_nll = std::numeric_limits<double>::quiet_NaN();
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.model = std::move(model);
  return result;
}

NllBreakdown evaluate_nll(const DynamicsModel& model, const TransitionBatch& data) {
  NllBreakdown out;
  out.per_dimension = model.nll_per_dimension(data);
  out.total = out.per_dimension.sum();
  return out;
}

// ---------------------------------------------------------------------------

std::vector<TrainConfig> SweepGrid::expand() const {
  std::vector<TrainConfig> grid;
  for (ModelKind kind : kinds)
    for (std::size_t l : layers)
      for (std::size_t w : widths)
        for (double noise : input_noise)
          for (double wd : weight_decay)
            for (double lr : learning_rates) {
              TrainConfig c;
              c.model_kind = kind;
              c.layers = l;
              c.width = w;
              c.input_noise_sigma = noise;
              c.weight_decay = wd;
              c.learning_rate = lr;
              c.epochs = epochs;
              c.batch_size = batch_size;
              c.optimizer = optimizer;
              c.activation = activation;
              grid.push_back(c);
            }
  return grid;
}

SweepGrid full_grid(std::vector<ModelKind> kinds) {
  SweepGrid grid;
  grid.kinds = std::move(kinds);
  return grid;
}

std::uint64_t sweep_run_seed(std::uint64_t sweep_seed, const TrainConfig& config) {
  return mix64(sweep_seed ^ mix64(config.digest()));
}

std::size_t SweepResult::diverged_count() const {
  return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const SweepRun& r) { return r.diverged; }));
}

std::vector<std::size_t> SweepResult::ranking_of(ModelKind kind) const {
  std::vector<std::size_t> out;
  for (std::size_t i : ranking) {
    if (runs[i].config.model_kind == kind) out.push_back(i);
  }
  return out;
}

double SweepResult::top_k_mean(ModelKind kind, std::size_t k) const {
  const std::vector<std::size_t> ranked = ranking_of(kind);
  const std::size_t take = std::min(k, ranked.size());
  if (take == 0) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i) sum += runs[ranked[i]].validation_nll;
  return sum / static_cast<double>(take);
}

const SweepRun* SweepResult::best(ModelKind kind) const {
  const std::vector<std::size_t> ranked = ranking_of(kind);
  return ranked.empty() ? nullptr : &runs[ranked.front()];
}

SweepResult hyperparameter_sweep(const std::vector<TrainConfig>& grid, const TransitionBatch& data,
                                 const SweepOptions& options) {
  if (grid.empty()) throw ConfigError("hyperparameter_sweep: empty grid");
  for (const auto& c : grid) c.validate();
  const DatasetSplit split = split_dataset(data, options.train_fraction, options.seed);

  SweepResult result;
  result.runs.resize(grid.size());
  parallel_for(grid.size(), options.threads, [&](std::size_t i) {
    SweepRun& run = result.runs[i];
    run.config = grid[i];
    run.config.seed = sweep_run_seed(options.seed, grid[i]);
    try {
      TrainResult trained = train_model(run.config, split.train, split.validation);
      run.report = std::move(trained.report);
      run.validation_nll = run.report.best_validation_nll;
      run.model = std::move(trained.model);
      if (!std::isfinite(run.validation_nll)) {
        run.diverged = true;
        run.error = "non-finite validation NLL";
      }
    } catch (const DivergenceError& e) {
      run.diverged = true;
      run.error = e.what();
      run.model.reset();
    }
    if (options.on_run) options.on_run(i, run);
  });

  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    if (!result.runs[i].diverged) result.ranking.push_back(i);
  }
  std::stable_sort(result.ranking.begin(), result.ranking.end(), [&](std::size_t a, std::size_t b) {
    const SweepRun& ra = result.runs[a];
    const SweepRun& rb = result.runs[b];
    if (ra.validation_nll != rb.validation_nll) return ra.validation_nll < rb.validation_nll;
    return ra.config.key() < rb.config.key();
  });
  return result;
}

}  // namespace ardm
