#include "ardm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ardm/error.hpp"
#include "ardm/mlp.hpp"

namespace ardm {

OptimizerState OptimizerState::adam(std::size_t size) {
  OptimizerState state;
  state.kind = OptimizerKind::kAdam;
  state.first_moment.assign(size, 0.0);
  state.second_moment.assign(size, 0.0);
  return state;
}

OptimizerState OptimizerState::sgd_momentum(std::size_t size, double momentum) {
  OptimizerState state;
  state.kind = OptimizerKind::kSgdMomentum;
  state.momentum = momentum;
  state.momentum_buffer.assign(size, 0.0);
  return state;
}

void optimizer_step(ParameterSet& params, const std::vector<double>& grads, OptimizerState& state,
                    double lr, double weight_decay) {
  const std::size_t size = params.size();
  if (grads.size() != size) throw ShapeError("optimizer_step: gradient buffer size mismatch");
  if (lr < 0.0) throw ConfigError("optimizer_step: negative learning rate");
  for (std::size_t i = 0; i < size; ++i) {
    if (!std::isfinite(grads[i])) {
      throw DivergenceError("optimizer_step: non-finite gradient in layer " +
                            std::to_string(params.layer_of(i)) + " (entry " + std::to_string(i) +
                            ")");
    }
  }

  auto values = params.values();
  if (weight_decay != 0.0) {
    const double shrink = 1.0 - lr * weight_decay;
    for (double& v : values) v *= shrink;
  }

  ++state.step;
  if (state.kind == OptimizerKind::kAdam) {
    if (state.first_moment.size() != size || state.second_moment.size() != size) {
      throw ShapeError("optimizer_step: Adam moment buffers do not match parameters");
    }
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < size; ++i) {
      const double g = grads[i];
      double& m = state.first_moment[i];
      double& v = state.second_moment[i];
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g * g;
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  } else {
    if (state.momentum_buffer.size() != size) {
      throw ShapeError("optimizer_step: momentum buffer does not match parameters");
    }
    for (std::size_t i = 0; i < size; ++i) {
      double& buf = state.momentum_buffer[i];
      buf = state.momentum * buf + grads[i];
      values[i] -= lr * buf;
    }
  }
}

double lr_at(const LrSchedule& schedule, std::uint64_t step) {
  if (schedule.total_steps == 0 || step >= schedule.total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  return schedule.initial_lr * std::max(0.0, 1.0 - frac);
}

}  // namespace ardm
