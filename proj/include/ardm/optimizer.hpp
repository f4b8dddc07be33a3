#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ardm {

class ParameterSet;

enum class OptimizerKind : std::uint8_t { kAdam = 0, kSgdMomentum = 1 };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::vector<double> momentum_buffer;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;

  static OptimizerState adam(std::size_t size);
  static OptimizerState sgd_momentum(std::size_t size, double momentum = 0.9);
};

/**
 * One update. Weight decay is decoupled: params *= (1 - lr * weight_decay)
 * before the gradient step. Throws DivergenceError naming the layer of the
 * first non-finite gradient entry.
 */
void optimizer_step(ParameterSet& params, const std::vector<double>& grads, OptimizerState& state,
                    double lr, double weight_decay);

/// Linear decay to zero: lr(step) = initial_lr * max(0, 1 - step / total_steps).
struct LrSchedule {
  double initial_lr = 1e-3;
  std::uint64_t total_steps = 1;
};

double lr_at(const LrSchedule& schedule, std::uint64_t step);

}  // namespace ardm
