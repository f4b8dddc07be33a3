#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ardm/linalg.hpp"

namespace ardm {

class Rng;

enum class Activation : std::uint8_t { kRelu = 0, kTanh = 1 };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Fully connected architecture: input -> hidden... -> output (linear head).
struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_layers;
  std::size_t output_dim = 1;
  Activation activation = Activation::kRelu;

  std::size_t num_layers() const { return hidden_layers.size() + 1; }
  std::size_t layer_in(std::size_t layer) const;
  std::size_t layer_out(std::size_t layer) const;
  /// Sum over layers of in*out + out.
  std::size_t parameter_count() const;
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

/**
 * Flat parameter buffer. Layer l stores its weight matrix (out x in, row-major)
 * followed by its bias vector; offsets() gives the start of every layer.
 */
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(const MlpSpec& spec);

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& buffer() { return values_; }
  const std::vector<double>& buffer() const { return values_; }

  std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer); }
  std::size_t bias_offset(std::size_t layer) const;
  const std::vector<std::size_t>& offsets() const { return offsets_; }

  Eigen::Map<const RowMatrix> weights(std::size_t layer) const;
  Eigen::Map<RowMatrix> weights(std::size_t layer);
  Eigen::Map<const Vector> bias(std::size_t layer) const;
  Eigen::Map<Vector> bias(std::size_t layer);

  /// Layer index that owns flat entry `index`.
  std::size_t layer_of(std::size_t index) const;

  bool operator==(const ParameterSet& other) const { return values_ == other.values_; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> in_dims_;
  std::vector<std::size_t> out_dims_;
  std::vector<double> values_;
};

/// He-style initialization: weights ~ N(0, 2 / fan_in), biases zero.
ParameterSet init_parameters(const MlpSpec& spec, std::uint64_t seed);

/// Per-layer pre- and post-activation values for one batch.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> activations;
  const double* params_token = nullptr;
  std::size_t batch = 0;
};

/// Evaluates the network on `inputs` (input_dim x batch). Returns output_dim x batch.
Matrix mlp_forward(const MlpSpec& spec, const ParameterSet& params,
                   const Eigen::Ref<const Matrix>& inputs, ForwardCache* cache = nullptr);

/**
 * Accumulates into `grads` (congruent with params) the gradient of the scalar
 * loss whose derivative with respect to the outputs is `output_gradients`.
 * `grads` is overwritten.
 */
void mlp_backward(const MlpSpec& spec, const ParameterSet& params, const ForwardCache& cache,
                  const Eigen::Ref<const Matrix>& output_gradients, std::vector<double>& grads);

}  // namespace ardm
