#include "ardm/commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "ardm/checkpoint.hpp"
#include "ardm/dataset.hpp"
#include "ardm/error.hpp"
#include "ardm/io.hpp"
#include "ardm/ope.hpp"
#include "ardm/report.hpp"
#include "ardm/rng.hpp"

namespace fs = std::filesystem;

namespace ardm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ostream& log_stream(const CommandContext& ctx) { return ctx.log ? *ctx.log : std::cout; }

void prepare_output(const CommandContext& ctx) {
  if (ctx.out.empty()) throw ConfigError("no output directory");
  if (fs::exists(ctx.out)) {
    if (!fs::is_directory(ctx.out)) throw ConfigError("output path " + ctx.out.string() + " is not a directory");
    if (!fs::is_empty(ctx.out) && !ctx.force) {
      throw ConfigError("output directory " + ctx.out.string() + " is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(ctx.out);
  io::write_text_atomic(ctx.out / "config.resolved",
                        "# ardm " + std::string(kToolkitVersion) + " config_digest=" + ctx.config.digest() + "\n" +
                            ctx.config.snapshot());
}

void require_input(const fs::path& path, const char* flag) {
  if (path.empty()) throw ConfigError(std::string("missing required input ") + flag);
}

std::uint64_t seed_of(const RunConfig& config) { return config.get_uint("seed"); }

std::size_t ope_horizon(const RunConfig& config, const Environment& env) {
  return config.get_string("ope.horizon").empty() ? env.horizon() : config.get_uint("ope.horizon");
}

OpeConfig ope_config(const RunConfig& config, const Environment& env, std::size_t threads) {
  OpeConfig o;
  o.n_rollouts = config.get_uint("ope.rollouts");
  o.gamma = config.get_real("ope.gamma");
  o.horizon = ope_horizon(config, env);
  o.seed = seed_of(config);
  o.threads = threads;
  o.validate();
  return o;
}

/// Seed of the rollouts for policy j; shared by the ope and study commands.
std::uint64_t policy_rollout_seed(std::uint64_t seed, std::size_t j) { return mix64(seed ^ mix64(j + 1)); }

std::unique_ptr<LinearGaussianEnv> linear_env(const RunConfig& config, const char* command) {
  auto env = make_environment(config);
  auto* linear = dynamic_cast<LinearGaussianEnv*>(env.get());
  if (!linear) throw ConfigError(std::string(command) + " needs a linear-Gaussian environment for its policy set");
  env.release();
  return std::unique_ptr<LinearGaussianEnv>(linear);
}

std::vector<std::size_t> selected_policies(const RunConfig& config, std::size_t count) {
  std::vector<std::size_t> out;
  for (std::uint64_t i : config.get_uints("ope.policies")) {
    if (i >= count) throw ConfigError("ope.policies: index " + std::to_string(i) + " out of range");
    out.push_back(static_cast<std::size_t>(i));
  }
  if (out.empty()) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(i);
  }
  return out;
}

std::map<std::string, std::string> checkpoint_metadata(const RunConfig& config, const TrainConfig& train,
                                                       const TrainReport& report) {
  return {{"config_digest", config.digest()},
          {"train_key", train.key()},
          {"seed", std::to_string(train.seed)},
          {"validation_nll", io::format_real(report.best_validation_nll)},
          {"best_epoch", std::to_string(report.best_epoch)}};
}

std::string gain_text(const Matrix& gain) { return format_matrix(gain); }

double metadata_real(const Checkpoint& cp, const std::string& key) {
  const auto it = cp.metadata.find(key);
  if (it == cp.metadata.end() || it->second == "nan") return kNaN;
  return parse_real(it->second, "checkpoint metadata " + key);
}

}  // namespace

fs::path default_output_dir(const std::string& command) {
  const char* root = std::getenv("ARDM_OUT_ROOT");
  return fs::path(root && *root ? root : "ardm-out") / command;
}

TrainConfig train_config(const RunConfig& config) {
  TrainConfig c;
  c.model_kind = model_kind_from_string(config.get_string("train.kind"));
  c.layers = config.get_uint("train.layers");
  c.width = config.get_uint("train.width");
  c.input_noise_sigma = config.get_real("train.input_noise");
  c.weight_decay = config.get_real("train.weight_decay");
  c.learning_rate = config.get_real("train.lr");
  c.epochs = config.get_uint("train.epochs");
  c.batch_size = config.get_uint("train.batch_size");
  c.optimizer = optimizer_kind_from_string(config.get_string("train.optimizer"));
  c.activation = activation_from_string(config.get_string("train.activation"));
  for (std::uint64_t d : config.get_uints("train.order")) c.dimension_order.push_back(static_cast<std::uint32_t>(d));
  c.seed = seed_of(config);
  c.validate();
  return c;
}

std::vector<TrainConfig> sweep_grid(const RunConfig& config) {
  SweepGrid grid;
  grid.kinds.clear();
  for (const auto& k : config.get_strings("sweep.kinds")) grid.kinds.push_back(model_kind_from_string(k));
  if (config.get_bool("sweep.full_grid")) {
    grid = full_grid(grid.kinds);
    grid.epochs = config.is_set("sweep.epochs") ? config.get_uint("sweep.epochs") : 500;
  } else {
    auto to_sizes = [](const std::vector<std::uint64_t>& v) { return std::vector<std::size_t>(v.begin(), v.end()); };
    grid.layers = to_sizes(config.get_uints("sweep.layers"));
    grid.widths = to_sizes(config.get_uints("sweep.widths"));
    grid.input_noise = config.get_reals("sweep.input_noise");
    grid.weight_decay = config.get_reals("sweep.weight_decay");
    grid.learning_rates = config.get_reals("sweep.lr");
    grid.epochs = config.get_uint("sweep.epochs");
  }
  grid.batch_size = config.get_uint("sweep.batch_size");
  grid.optimizer = optimizer_kind_from_string(config.get_string("train.optimizer"));
  grid.activation = activation_from_string(config.get_string("train.activation"));
  std::vector<TrainConfig> configs = grid.expand();
  if (configs.empty()) throw ConfigError("sweep grid is empty");
  return configs;
}

MppiConfig mppi_config(const RunConfig& config) {
  MppiConfig c;
  c.iterations = config.get_uint("mppi.M");
  c.candidates = config.get_uint("mppi.N");
  c.horizon = config.get_uint("mppi.H");
  c.beta = config.get_real("mppi.beta");
  c.sigma_sq = config.get_real("mppi.sigma_sq");
  c.gamma = config.get_real("mppi.gamma");
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const CommandContext& ctx) {
  const RunConfig& config = ctx.config;
  auto env = make_environment(config);
  const std::uint64_t seed = seed_of(config);
  const std::size_t count = config.get_uint("data.transitions");
  if (count == 0) throw ConfigError("data.transitions must be positive");
  const double behavior_noise = config.get_real("data.behavior_noise");
  prepare_output(ctx);

  const std::string digest = config.digest();
  CollectedData data;
  if (auto* linear = dynamic_cast<LinearGaussianEnv*>(env.get())) {
    const PolicySet set = make_policy_set(*linear, policy_set_options(config), seed);
    data = collect_dataset(*env, exploratory_behavior_policy(set, behavior_noise), count, mix64(seed + 1));
    const double gamma = config.get_real("ope.gamma");
    const std::size_t horizon = ope_horizon(config, *env);
    Table policies{{"policy_id", "mix", "noise_std", "gain", "truth"}, {}};
    for (const auto& p : set.policies) {
      policies.add({p.name, p.mix, p.policy.noise_std()(0), gain_text(p.policy.gain()),
                    analytic_value_linear_gaussian(*linear, p.policy, gamma, horizon)});
    }
    write_table(ctx.out / "policies", policies, digest);
    io::write_text_atomic(ctx.out / "env.cfg", environment_config_text(linear->spec()));
  } else {
    const auto m = static_cast<Eigen::Index>(env->action_dim());
    GaussianLinearPolicy behavior(Matrix::Zero(m, static_cast<Eigen::Index>(env->state_dim())), Vector::Zero(m),
                                  Vector::Constant(m, behavior_noise));
    data = collect_dataset(*env, behavior, count, mix64(seed + 1));
  }
  save_dataset(ctx.out / "dataset.ards", data.transitions);
  save_initial_states(ctx.out / "initial_states.ars0", data.initial_states);
  log_stream(ctx) << "wrote " << data.transitions.size() << " transitions and " << data.initial_states.size()
                  << " initial states to " << ctx.out.string() << "\n";
}

void cmd_train(const CommandContext& ctx) {
  require_input(ctx.data, "--data");
  const RunConfig& config = ctx.config;
  TrainConfig train = train_config(config);
  const TransitionBatch data = load_dataset(ctx.data);
  const DatasetSplit split = split_dataset(data, config.get_real("train.fraction"), seed_of(config));
  prepare_output(ctx);

  std::ostream& log = log_stream(ctx);
  TrainOptions options;
  options.on_epoch = [&](std::size_t epoch, double tr, double va) {
    log << "epoch " << epoch << " train_nll " << io::format_real(tr) << " validation_nll " << io::format_real(va)
        << "\n";
  };
  TrainResult result = train_model(train, split.train, split.validation, options);
  Table curve{{"epoch", "train_nll", "validation_nll"}, {}};
  for (std::size_t e = 0; e < result.report.validation_nll.size(); ++e) {
    curve.add({static_cast<std::int64_t>(e), e == 0 ? kNaN : result.report.train_nll[e - 1],
               result.report.validation_nll[e]});
  }
  write_table(ctx.out / "train_curve", curve, config.digest());

  auto metadata = checkpoint_metadata(config, train, result.report);
  if (config.get_bool("train.refit_full")) {
    TrainConfig refit = train;
    refit.epochs = result.report.best_epoch;
    TrainResult full = train_model(refit, data, TransitionBatch{});
    metadata["refit_full"] = "true";
    metadata["refit_epochs"] = std::to_string(refit.epochs);
    save_checkpoint(ctx.out / "model.ardm", *full.model, metadata);
  } else {
    save_checkpoint(ctx.out / "model.ardm", *result.model, metadata);
  }
  Table timing{{"stage", "seconds"}, {}};
  timing.add({std::string("train"), result.report.seconds});
  write_table(ctx.out / "timing", timing, config.digest());
  log << "best validation NLL " << io::format_real(result.report.best_validation_nll) << " at epoch "
      << result.report.best_epoch << "\n";
}

void cmd_sweep(const CommandContext& ctx) {
  require_input(ctx.data, "--data");
  const RunConfig& config = ctx.config;
  const std::vector<TrainConfig> grid = sweep_grid(config);
  const TransitionBatch data = load_dataset(ctx.data);
  prepare_output(ctx);
  fs::create_directories(ctx.out / "checkpoints");

  std::ostream& log = log_stream(ctx);
  SweepOptions options;
  options.seed = seed_of(config);
  options.train_fraction = config.get_real("train.fraction");
  options.threads = ctx.threads;
  SweepResult result = hyperparameter_sweep(grid, data, options);

  std::vector<std::int64_t> rank(result.runs.size(), -1);
  for (std::size_t r = 0; r < result.ranking.size(); ++r) rank[result.ranking[r]] = static_cast<std::int64_t>(r + 1);

  const std::string digest = config.digest();
  Table table{{"run", "kind", "layers", "width", "input_noise", "weight_decay", "lr", "epochs", "batch_size",
               "optimizer", "seed", "status", "validation_nll", "best_epoch", "rank", "checkpoint"},
              {}};
  Table timing{{"run", "seconds"}, {}};
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const SweepRun& run = result.runs[i];
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    std::string checkpoint;
    if (!run.diverged) {
      checkpoint = std::string("checkpoints/") + name + ".ardm";
      save_checkpoint(ctx.out / checkpoint, *run.model, checkpoint_metadata(config, run.config, run.report));
    }
    const TrainConfig& c = run.config;
    table.add({std::string(name), to_string(c.model_kind), static_cast<std::int64_t>(c.layers),
               static_cast<std::int64_t>(c.width), c.input_noise_sigma, c.weight_decay, c.learning_rate,
               static_cast<std::int64_t>(c.epochs), static_cast<std::int64_t>(c.batch_size), to_string(c.optimizer),
               io::hex64(c.seed), std::string(run.diverged ? "diverged" : "ok"),
               run.diverged ? kNaN : run.validation_nll, static_cast<std::int64_t>(run.report.best_epoch), rank[i],
               checkpoint});
    timing.add({std::string(name), run.report.seconds});
    if (run.diverged) log << name << " diverged: " << run.error << "\n";
  }
  write_table(ctx.out / "sweep", table, digest);
  write_table(ctx.out / "sweep_timing", timing, digest);

  Table summary{{"family", "top1_nll", "top5_mean_nll", "runs", "diverged"}, {}};
  log << "family            Top-1 NLL    Top-5 NLL\n";
  for (ModelKind kind : {ModelKind::kFeedforward, ModelKind::kAutoregressive}) {
    std::int64_t runs = 0;
    std::int64_t diverged = 0;
    for (const auto& run : result.runs) {
      if (run.config.model_kind != kind) continue;
      ++runs;
      diverged += run.diverged ? 1 : 0;
    }
    if (runs == 0) continue;
    const double top1 = result.top_k_mean(kind, 1);
    const double top5 = result.top_k_mean(kind, 5);
    summary.add({to_string(kind), top1, top5, runs, diverged});
    char line[128];
    std::snprintf(line, sizeof line, "%-16s %10.4f   %10.4f\n", to_string(kind).c_str(), top1, top5);
    log << line;
  }
  write_table(ctx.out / "sweep_summary", summary, digest);
}

void cmd_ope(const CommandContext& ctx) {
  if (ctx.checkpoints.empty()) throw ConfigError("missing required input --checkpoint");
  require_input(ctx.initial_states, "--initial-states");
  const RunConfig& config = ctx.config;
  auto env = linear_env(config, "ope");
  const PolicySet set = make_policy_set(*env, policy_set_options(config), seed_of(config));
  const std::vector<std::size_t> chosen = selected_policies(config, set.size());
  OpeConfig ope = ope_config(config, *env, ctx.threads);
  std::vector<Checkpoint> checkpoints;
  for (const auto& path : ctx.checkpoints) checkpoints.push_back(load_checkpoint(path));
  std::vector<const TransitionModel*> models;
  for (const auto& cp : checkpoints) models.push_back(cp.model.get());
  const InitialStates s0 = load_initial_states(ctx.initial_states);
  prepare_output(ctx);

  const std::string digest = config.digest();
  std::ostream& log = log_stream(ctx);
  Table table{{"policy_id", "estimate", "stderr", "truth", "n_rollouts", "diverged_rollouts"}, {}};
  std::vector<double> estimates;
  std::vector<double> truths;
  for (std::size_t j : chosen) {
    const NamedPolicy& p = set.policies[j];
    OpeConfig pc = ope;
    pc.seed = policy_rollout_seed(seed_of(config), j);
    const OpeReport report = ensemble_mb_ope(models, p.policy, s0, pc);
    const double truth = analytic_value_linear_gaussian(*env, p.policy, ope.gamma, ope.horizon);
    estimates.push_back(report.value);
    truths.push_back(truth);
    table.add({p.name, report.value, report.standard_error, truth, static_cast<std::int64_t>(report.n_rollouts),
               static_cast<std::int64_t>(report.divergences.size())});
    log << p.name << " estimate " << io::format_real(report.value) << " +- "
        << io::format_real(report.standard_error) << " truth " << io::format_real(truth) << "\n";
  }
  write_table(ctx.out / "ope", table, digest);
  if (estimates.size() < 2) {
    log << "metrics skipped: need at least 2 policies\n";
    return;
  }
  const MetricsReport metrics = compute_metrics(estimates, truths, config.get_uint("ope.k"),
                                                config.get_uint("ope.bootstrap"), mix64(seed_of(config) + 7));
  Table mt{{"metric", "value", "bootstrap_mean", "bootstrap_std", "bootstrap_skipped"}, {}};
  for (const auto& m : metrics.metrics) {
    mt.add({m.name, m.value, m.bootstrap.mean, m.bootstrap.std, static_cast<std::int64_t>(m.bootstrap.skipped)});
    log << m.name << " " << io::format_real(m.value) << " (bootstrap " << io::format_real(m.bootstrap.mean)
        << " +- " << io::format_real(m.bootstrap.std) << ")\n";
  }
  write_table(ctx.out / "metrics", mt, digest);
}

void cmd_plan_eval(const CommandContext& ctx) {
  if (ctx.checkpoints.size() != 1) throw ConfigError("plan-eval takes exactly one --checkpoint");
  const RunConfig& config = ctx.config;
  auto env = linear_env(config, "plan-eval");
  const MppiConfig mppi = mppi_config(config);
  const Checkpoint cp = load_checkpoint(ctx.checkpoints.front());
  const Matrix gain = config.get_real("plan.gain_scale") * discounted_lqr_gain(env->spec(), mppi.gamma);
  const auto m = static_cast<Eigen::Index>(env->action_dim());
  const GaussianLinearPolicy policy(gain, Vector::Zero(m), Vector::Constant(m, config.get_real("plan.policy_noise")));
  const std::string critic_name = config.get_string("plan.critic");
  std::unique_ptr<Critic> critic;
  if (critic_name == "lq") {
    critic = std::make_unique<QuadraticCritic>(
        linear_quadratic_q(*env, policy, mppi.gamma, config.get_uint("plan.critic_horizon")));
  } else if (critic_name == "zero") {
    critic = std::make_unique<ZeroCritic>();
  } else {
    throw ConfigError("plan.critic must be lq or zero");
  }
  const std::size_t episodes = config.get_uint("plan.episodes");
  prepare_output(ctx);

  const PlannerEvaluation eval =
      evaluate_planner(*env, policy, *cp.model, *critic, mppi, episodes, seed_of(config), ctx.threads);
  Table table{{"arm", "episode", "return"}, {}};
  for (std::size_t e = 0; e < episodes; ++e) {
    table.add({std::string("planned"), static_cast<std::int64_t>(e), eval.planned.returns[e]});
    table.add({std::string("raw"), static_cast<std::int64_t>(e), eval.raw.returns[e]});
  }
  table.add({std::string("paired_difference"), static_cast<std::int64_t>(-1), eval.difference});
  const std::string digest = config.digest();
  write_table(ctx.out / "planner", table, digest);
  Table summary{{"arm", "mean", "stderr", "z"}, {}};
  summary.add({std::string("planned"), eval.planned.mean, eval.planned.standard_error, kNaN});
  summary.add({std::string("raw"), eval.raw.mean, eval.raw.standard_error, kNaN});
  summary.add({std::string("paired_difference"), eval.difference, eval.difference_standard_error, eval.z});
  write_table(ctx.out / "planner_summary", summary, digest);
  log_stream(ctx) << "planned " << io::format_real(eval.planned.mean) << " raw " << io::format_real(eval.raw.mean)
                  << " difference " << io::format_real(eval.difference) << " +- "
                  << io::format_real(eval.difference_standard_error) << " (z = " << io::format_real(eval.z) << ")\n";
}

void cmd_augment(const CommandContext& ctx) {
  require_input(ctx.data, "--data");
  if (ctx.checkpoints.size() != 1) throw ConfigError("augment takes exactly one --checkpoint");
  const RunConfig& config = ctx.config;
  const double ratio = config.get_real("augment.ratio");
  augmentation_size(1, ratio);
  auto env = linear_env(config, "augment");
  const PolicySet set = make_policy_set(*env, policy_set_options(config), seed_of(config));
  const GaussianLinearPolicy behavior = exploratory_behavior_policy(set, config.get_real("data.behavior_noise"));
  const TransitionBatch data = load_dataset(ctx.data);
  const Checkpoint cp = load_checkpoint(ctx.checkpoints.front());
  prepare_output(ctx);

  const TransitionDataset augmented = augment_dataset(data, behavior, *cp.model, ratio, seed_of(config));
  save_dataset(ctx.out / "augmented.ards", augmented.transitions);
  save_origin_flags(ctx.out / "augmented.arof", augmented.synthetic);
  log_stream(ctx) << "wrote " << augmented.size() << " transitions (" << augmented.synthetic_count()
                  << " synthetic)\n";
}

void cmd_study(const CommandContext& ctx) {
  require_input(ctx.sweep_dir, "--sweep");
  require_input(ctx.initial_states, "--initial-states");
  const RunConfig& config = ctx.config;
  auto env = linear_env(config, "study");
  const PolicySet set = make_policy_set(*env, policy_set_options(config), seed_of(config));
  OpeConfig ope = ope_config(config, *env, ctx.threads);
  ope.seed = seed_of(config);

  std::ifstream in(ctx.sweep_dir / "sweep.jsonl");
  if (!in) throw ConfigError("cannot read " + (ctx.sweep_dir / "sweep.jsonl").string());
  std::vector<StudyModel> models;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("sweep.jsonl: " + std::string(e.what()));
    }
    if (row.value("status", "") != "ok") continue;
    const Checkpoint cp = load_checkpoint(ctx.sweep_dir / row.at("checkpoint").get<std::string>());
    StudyModel sm;
    sm.id = row.at("run").get<std::string>();
    sm.config_digest = cp.metadata.count("train_key") ? io::hex64(io::fnv1a(cp.metadata.at("train_key"))) : "";
    sm.validation_nll = metadata_real(cp, "validation_nll");
    sm.model = std::shared_ptr<const TransitionModel>(cp.model->clone().release());
    models.push_back(std::move(sm));
  }
  const InitialStates s0 = load_initial_states(ctx.initial_states);
  std::vector<double> truths;
  for (const auto& p : set.policies) truths.push_back(analytic_value_linear_gaussian(*env, p.policy, ope.gamma, ope.horizon));
  prepare_output(ctx);

  const StudyResult study = nll_vs_ope_study(models, set, truths, s0, ope);
  const std::string digest = config.digest();
  Table scatter{{"model_id", "config_digest", "validation_nll", "policy_id", "estimate", "stderr", "truth"}, {}};
  for (const auto& est : study.estimates) {
    const StudyModel& sm = models[est.model];
    scatter.add({sm.id, sm.config_digest, sm.validation_nll, set.policies[est.policy].name, est.report.value,
                 est.report.standard_error, truths[est.policy]});
  }
  write_table(ctx.out / "study", scatter, digest);
  Table rows{{"model_id", "config_digest", "validation_nll", "pearson_r", "spearman_rho"}, {}};
  for (const auto& r : study.rows) rows.add({r.model_id, r.config_digest, r.validation_nll, r.pearson, r.spearman});
  write_table(ctx.out / "study_summary", rows, digest);
  Table trend{{"statistic", "value", "models"}, {}};
  trend.add({std::string("spearman(-validation_nll, pearson_r)"), study.trend,
             static_cast<std::int64_t>(study.rows.size())});
  write_table(ctx.out / "study_trend", trend, digest);
  log_stream(ctx) << "NLL-vs-OPE trend (Spearman of -NLL vs Pearson r over " << study.rows.size()
                  << " models): " << io::format_real(study.trend) << "\n";
}

}  // namespace ardm
