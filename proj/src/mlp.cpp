#include "ardm/mlp.hpp"

#include <cmath>

#include "ardm/rng.hpp"

namespace ardm {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t MlpSpec::layer_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_layers.at(layer - 1);
}

std::size_t MlpSpec::layer_out(std::size_t layer) const {
  return layer < hidden_layers.size() ? hidden_layers[layer] : output_dim;
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) total += layer_in(l) * layer_out(l) + layer_out(l);
  return total;
}

void MlpSpec::validate() const {
  if (input_dim == 0) throw ConfigError("MlpSpec: input_dim must be positive");
  if (output_dim == 0) throw ConfigError("MlpSpec: output_dim must be positive");
  for (std::size_t w : hidden_layers) {
    if (w == 0) throw ConfigError("MlpSpec: hidden layer widths must be positive");
  }
}

ParameterSet::ParameterSet(const MlpSpec& spec) {
  spec.validate();
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    offsets_.push_back(offset);
    in_dims_.push_back(spec.layer_in(l));
    out_dims_.push_back(spec.layer_out(l));
    offset += in_dims_.back() * out_dims_.back() + out_dims_.back();
  }
  values_.assign(offset, 0.0);
}

std::size_t ParameterSet::bias_offset(std::size_t layer) const {
  return offsets_.at(layer) + in_dims_[layer] * out_dims_[layer];
}

Eigen::Map<const RowMatrix> ParameterSet::weights(std::size_t layer) const {
  return {values_.data() + offsets_.at(layer), static_cast<Eigen::Index>(out_dims_[layer]),
          static_cast<Eigen::Index>(in_dims_[layer])};
}

Eigen::Map<RowMatrix> ParameterSet::weights(std::size_t layer) {
  return {values_.data() + offsets_.at(layer), static_cast<Eigen::Index>(out_dims_[layer]),
          static_cast<Eigen::Index>(in_dims_[layer])};
}

Eigen::Map<const Vector> ParameterSet::bias(std::size_t layer) const {
  return {values_.data() + bias_offset(layer), static_cast<Eigen::Index>(out_dims_[layer])};
}

Eigen::Map<Vector> ParameterSet::bias(std::size_t layer) {
  return {values_.data() + bias_offset(layer), static_cast<Eigen::Index>(out_dims_[layer])};
}

std::size_t ParameterSet::layer_of(std::size_t index) const {
  std::size_t layer = 0;
  while (layer + 1 < offsets_.size() && offsets_[layer + 1] <= index) ++layer;
  return layer;
}

ParameterSet init_parameters(const MlpSpec& spec, std::uint64_t seed) {
  ParameterSet params(spec);
  Rng rng(seed);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double scale = std::sqrt(2.0 / static_cast<double>(spec.layer_in(l)));
    auto w = params.weights(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = scale * rng.normal();
    }
  }
  return params;
}

namespace {

void activate(Activation a, const Matrix& pre, Matrix& post) {
  switch (a) {
    case Activation::kRelu:
      post = pre.cwiseMax(0.0);
      return;
    case Activation::kTanh:
      post = pre.array().tanh().matrix();
      return;
  }
}

// dL/dpre = dL/dpost * f'(pre)
void activation_backward(Activation a, const Matrix& pre, const Matrix& post, Matrix& grad) {
  switch (a) {
    case Activation::kRelu:
      grad = (pre.array() > 0.0).select(grad, 0.0);
      return;
    case Activation::kTanh:
      grad.array() *= 1.0 - post.array().square();
      return;
  }
}

}  // namespace

Matrix mlp_forward(const MlpSpec& spec, const ParameterSet& params,
                   const Eigen::Ref<const Matrix>& inputs, ForwardCache* cache) {
  require_dim(inputs.rows(), static_cast<std::ptrdiff_t>(spec.input_dim), "mlp_forward input");
  require_dim(static_cast<std::ptrdiff_t>(params.size()),
              static_cast<std::ptrdiff_t>(spec.parameter_count()), "mlp_forward parameter count");
  if (!inputs.allFinite()) throw NumericInputError("mlp_forward: non-finite input");

  const std::size_t layers = spec.num_layers();
  if (cache != nullptr) {
    cache->input = inputs;
    cache->pre_activations.resize(layers);
    cache->activations.resize(layers);
    cache->params_token = params.values().data();
    cache->batch = static_cast<std::size_t>(inputs.cols());
  }

  Matrix current = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix pre = params.weights(l) * current;
    pre.colwise() += params.bias(l);
    const bool last = l + 1 == layers;
    Matrix post;
    if (last) {
      post = pre;
    } else {
      activate(spec.activation, pre, post);
    }
    if (cache != nullptr) {
      cache->pre_activations[l] = std::move(pre);
      cache->activations[l] = post;
    }
    current = std::move(post);
  }
  return current;
}

void mlp_backward(const MlpSpec& spec, const ParameterSet& params, const ForwardCache& cache,
                  const Eigen::Ref<const Matrix>& output_gradients, std::vector<double>& grads) {
  const std::size_t layers = spec.num_layers();
  if (cache.params_token != params.values().data() || cache.pre_activations.size() != layers ||
      cache.input.rows() != static_cast<Eigen::Index>(spec.input_dim)) {
    throw CacheError("mlp_backward: cache was not produced for these parameters");
  }
  if (static_cast<std::size_t>(output_gradients.cols()) != cache.batch ||
      output_gradients.rows() != static_cast<Eigen::Index>(spec.output_dim)) {
    throw CacheError("mlp_backward: output gradient shape does not match cached batch");
  }
  grads.assign(params.size(), 0.0);

  Matrix delta = output_gradients;
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) {
      activation_backward(spec.activation, cache.pre_activations[l], cache.activations[l], delta);
    }
    const Matrix& below = l == 0 ? cache.input : cache.activations[l - 1];
    Eigen::Map<RowMatrix> dw(grads.data() + params.weight_offset(l), delta.rows(), below.rows());
    dw.noalias() = delta * below.transpose();
    Eigen::Map<Vector> db(grads.data() + params.bias_offset(l), delta.rows());
    db = delta.rowwise().sum();
    if (l > 0) {
      Matrix next = params.weights(l).transpose() * delta;
      delta = std::move(next);
    }
  }
}

}  // namespace ardm
