#include "ardm/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ardm/error.hpp"
#include "ardm/io.hpp"

namespace ardm {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

const ConfigKey* find_key(const std::string& name) {
  for (const auto& key : config_schema()) {
    if (name == key.name) return &key;
  }
  return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"seed", "0", "root seed"},
      {"env.kind", "ope_default", "ope_default | planning_default | correlated_chain | linear_gaussian | pendulum"},
      {"env.state_dim", "4", "state dimension (correlated_chain, linear_gaussian)"},
      {"env.action_dim", "1", "action dimension (correlated_chain, linear_gaussian)"},
      {"env.horizon", "", "episode length; empty = family default"},
      {"env.reward_noise_std", "", "reward noise; empty = family default"},
      {"env.rho", "0.9", "correlated_chain: noise correlation"},
      {"env.noise_std", "0.5", "correlated_chain: per-dimension noise std"},
      {"env.decay", "0.8", "correlated_chain: diagonal of A"},
      {"env.A", "", "linear_gaussian: n x n, row-major"},
      {"env.B", "", "linear_gaussian: n x m, row-major"},
      {"env.noise_cov", "", "linear_gaussian: n x n, row-major"},
      {"env.Q", "", "linear_gaussian: n x n, row-major"},
      {"env.R", "", "linear_gaussian: m x m, row-major"},
      {"env.init_mean", "", "linear_gaussian: length n"},
      {"env.init_cov", "", "linear_gaussian: n x n, row-major"},
      {"data.transitions", "10000", "transitions to collect"},
      {"data.behavior_noise", "0.8", "minimum action noise std of the behavior policy"},
      {"policies.count", "10", "size of the evaluation policy set"},
      {"policies.spread", "1", "largest blend weight toward a random gain"},
      {"policies.gain_scale", "0.7", "std of random gain entries"},
      {"policies.min_noise", "0.1", "smallest policy action noise std"},
      {"policies.max_noise", "0.4", "largest policy action noise std"},
      {"policies.max_radius", "0.98", "closed-loop spectral radius bound"},
      {"train.kind", "autoregressive", "feedforward | autoregressive"},
      {"train.layers", "3", "hidden layers"},
      {"train.width", "512", "hidden width"},
      {"train.input_noise", "0", "std of Gaussian noise on normalized state/action inputs"},
      {"train.weight_decay", "0", "decoupled weight decay"},
      {"train.lr", "0.001", "initial learning rate"},
      {"train.epochs", "500", "epochs"},
      {"train.batch_size", "256", "minibatch size"},
      {"train.optimizer", "adam", "adam | sgd_momentum"},
      {"train.activation", "relu", "relu | tanh"},
      {"train.order", "", "autoregressive dimension order; empty = column order"},
      {"train.fraction", "0.8", "training share of the split"},
      {"train.refit_full", "false", "retrain on all data for the selected epoch count"},
      {"sweep.full_grid", "false", "use the 48-point grid per family"},
      {"sweep.kinds", "feedforward,autoregressive", "families to sweep"},
      {"sweep.layers", "3,4", "grid: hidden layers"},
      {"sweep.widths", "64", "grid: hidden widths"},
      {"sweep.input_noise", "0", "grid: input noise std"},
      {"sweep.weight_decay", "0,1e-06", "grid: weight decay"},
      {"sweep.lr", "0.001,0.0003", "grid: learning rates"},
      {"sweep.epochs", "30", "epochs per run"},
      {"sweep.batch_size", "256", "minibatch size"},
      {"ope.rollouts", "100", "Monte-Carlo rollouts per estimate"},
      {"ope.gamma", "0.995", "discount"},
      {"ope.horizon", "", "rollout length; empty = environment horizon"},
      {"ope.bootstrap", "1000", "bootstrap resamples"},
      {"ope.k", "5", "k of regret@k"},
      {"ope.policies", "", "policy indices to evaluate; empty = all"},
      {"mppi.M", "3", "refinement iterations"},
      {"mppi.N", "16", "candidate rollouts"},
      {"mppi.H", "10", "planning horizon"},
      {"mppi.beta", "0.1", "softmax temperature"},
      {"mppi.sigma_sq", "0.01", "proposal noise variance"},
      {"mppi.gamma", "0.995", "planning discount"},
      {"plan.episodes", "100", "evaluation episodes"},
      {"plan.critic", "lq", "lq | zero"},
      {"plan.critic_horizon", "200", "steps covered by the lq critic"},
      {"plan.gain_scale", "0.5", "raw policy gain as a multiple of the LQR gain"},
      {"plan.policy_noise", "0.3", "raw policy action noise std"},
      {"augment.ratio", "1", "synthetic transitions per original transition"},
  };
  return schema;
}

RunConfig::RunConfig() {
  for (const auto& key : config_schema()) values_[key.name] = key.default_value;
}

RunConfig RunConfig::parse(std::string_view text, const std::string& source) {
  RunConfig config;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (config.is_set(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    try {
      config.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    if (end == text.size()) break;
  }
  return config;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
  explicit_[key] = value;
}

std::string RunConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_real(const std::string& key) const { return parse_real(get_string(key), key); }

std::uint64_t RunConfig::get_uint(const std::string& key) const { return parse_uint(get_string(key), key); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> RunConfig::get_reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(key))) out.push_back(parse_real(item, key));
  return out;
}

std::vector<std::uint64_t> RunConfig::get_uints(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(get_string(key))) out.push_back(parse_uint(item, key));
  return out;
}

std::vector<std::string> RunConfig::get_strings(const std::string& key) const { return split_list(get_string(key)); }

std::string RunConfig::snapshot() const {
  std::string out;
  for (const auto& key : config_schema()) {
    out += key.name;
    out += " = ";
    out += values_.at(key.name);
    out += '\n';
  }
  return out;
}

std::string RunConfig::digest() const { return io::hex64(io::fnv1a(snapshot())); }

double parse_real(std::string_view text, const std::string& what) {
  const std::string s = trim(text);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError(what + ": expected a finite real number, got '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(std::string_view text, const std::string& what) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size()) {
    throw ConfigError(what + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = text.find(',', pos);
    out.push_back(trim(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string format_matrix(const Matrix& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!out.empty()) out += ',';
      out += io::format_real(m(r, c));
    }
  }
  return out;
}

Matrix parse_matrix(std::string_view text, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  const std::vector<std::string> items = split_list(text);
  if (static_cast<Eigen::Index>(items.size()) != rows * cols) {
    throw ConfigError(what + ": expected " + std::to_string(rows * cols) + " entries (" + std::to_string(rows) + "x" +
                      std::to_string(cols) + " row-major), got " + std::to_string(items.size()));
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = parse_real(items[static_cast<std::size_t>(r * cols + c)], what);
  }
  return m;
}

LinearGaussianSpec linear_gaussian_spec(const RunConfig& config) {
  const std::string kind = config.get_string("env.kind");
  LinearGaussianSpec spec;
  if (kind == "ope_default") {
    spec = default_ope_env_spec();
  } else if (kind == "planning_default") {
    spec = default_planning_env_spec();
  } else if (kind == "correlated_chain") {
    CorrelatedChainEnv::Options o;
    o.state_dim = config.get_uint("env.state_dim");
    o.action_dim = config.get_uint("env.action_dim");
    o.rho = config.get_real("env.rho");
    o.noise_std = config.get_real("env.noise_std");
    o.decay = config.get_real("env.decay");
    spec = CorrelatedChainEnv::make_spec(o);
  } else if (kind == "linear_gaussian") {
    const auto n = static_cast<Eigen::Index>(config.get_uint("env.state_dim"));
    const auto m = static_cast<Eigen::Index>(config.get_uint("env.action_dim"));
    if (n == 0 || m == 0) throw ConfigError("env.state_dim and env.action_dim must be positive");
    spec.A = parse_matrix(config.get_string("env.A"), n, n, "env.A");
    spec.B = parse_matrix(config.get_string("env.B"), n, m, "env.B");
    spec.noise_cov = parse_matrix(config.get_string("env.noise_cov"), n, n, "env.noise_cov");
    spec.Q = parse_matrix(config.get_string("env.Q"), n, n, "env.Q");
    spec.R = parse_matrix(config.get_string("env.R"), m, m, "env.R");
    spec.init_mean = parse_matrix(config.get_string("env.init_mean"), n, 1, "env.init_mean");
    spec.init_cov = parse_matrix(config.get_string("env.init_cov"), n, n, "env.init_cov");
    spec.reward_noise_std = 0.0;
  } else {
    throw ConfigError("env.kind '" + kind + "' is not a linear-Gaussian family");
  }
  if (!config.get_string("env.horizon").empty()) spec.horizon = config.get_uint("env.horizon");
  if (!config.get_string("env.reward_noise_std").empty()) spec.reward_noise_std = config.get_real("env.reward_noise_std");
  spec.validate();
  return spec;
}

std::unique_ptr<Environment> make_environment(const RunConfig& config) {
  const std::string kind = config.get_string("env.kind");
  if (kind == "pendulum") {
    PendulumEnv::Options o;
    if (!config.get_string("env.horizon").empty()) o.horizon = config.get_uint("env.horizon");
    return std::make_unique<PendulumEnv>(o);
  }
  return std::make_unique<LinearGaussianEnv>(linear_gaussian_spec(config));
}

std::string environment_config_text(const LinearGaussianSpec& spec) {
  std::ostringstream out;
  out << "env.kind = linear_gaussian\n"
      << "env.state_dim = " << spec.state_dim() << "\n"
      << "env.action_dim = " << spec.action_dim() << "\n"
      << "env.horizon = " << spec.horizon << "\n"
      << "env.reward_noise_std = " << io::format_real(spec.reward_noise_std) << "\n"
      << "env.A = " << format_matrix(spec.A) << "\n"
      << "env.B = " << format_matrix(spec.B) << "\n"
      << "env.noise_cov = " << format_matrix(spec.noise_cov) << "\n"
      << "env.Q = " << format_matrix(spec.Q) << "\n"
      << "env.R = " << format_matrix(spec.R) << "\n"
      << "env.init_mean = " << format_matrix(spec.init_mean) << "\n"
      << "env.init_cov = " << format_matrix(spec.init_cov) << "\n";
  return out.str();
}

PolicySetOptions policy_set_options(const RunConfig& config) {
  PolicySetOptions o;
  o.count = config.get_uint("policies.count");
  o.quality_spread = config.get_real("policies.spread");
  o.random_gain_scale = config.get_real("policies.gain_scale");
  o.min_noise_std = config.get_real("policies.min_noise");
  o.max_noise_std = config.get_real("policies.max_noise");
  o.max_closed_loop_radius = config.get_real("policies.max_radius");
  o.gamma = config.get_real("ope.gamma");
  return o;
}

}  // namespace ardm
