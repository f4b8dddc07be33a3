#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ardm/envs.hpp"
#include "ardm/linalg.hpp"

namespace ardm {

/**
 * Flat `key = value` configuration. Every key must belong to the schema
 * (see config_schema()); values are checked when read. Comments start with
 * '#', blank lines are ignored, a repeated key is an error.
 */
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(std::string_view text, const std::string& source = "config");
  static RunConfig load(const std::string& path);

  /// Overrides one key; unknown keys raise ConfigError.
  void set(const std::string& key, const std::string& value);
  bool is_set(const std::string& key) const { return explicit_.count(key) != 0; }

  std::string get_string(const std::string& key) const;
  double get_real(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_reals(const std::string& key) const;
  std::vector<std::uint64_t> get_uints(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  /// Every schema key with its resolved value, in schema order.
  std::string snapshot() const;
  /// FNV-1a of snapshot(), as 16 hex digits.
  std::string digest() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> explicit_;
};

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

const std::vector<ConfigKey>& config_schema();

// Value parsing shared with the command line.
double parse_real(std::string_view text, const std::string& what);
std::uint64_t parse_uint(std::string_view text, const std::string& what);
std::vector<std::string> split_list(std::string_view text);

/// Matrices as flattened row-major lists.
std::string format_matrix(const Matrix& m);
Matrix parse_matrix(std::string_view text, Eigen::Index rows, Eigen::Index cols, const std::string& what);

/// Environment named by env.kind with its parameters.
std::unique_ptr<Environment> make_environment(const RunConfig& config);
/// Linear-Gaussian spec for env.kind in {linear_gaussian, correlated_chain, ope_default, planning_default}.
LinearGaussianSpec linear_gaussian_spec(const RunConfig& config);
/// Config text (env.kind = linear_gaussian plus every matrix) that rebuilds `spec`.
std::string environment_config_text(const LinearGaussianSpec& spec);

PolicySetOptions policy_set_options(const RunConfig& config);

}  // namespace ardm
