#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "oens/network.hpp"

namespace oens {

/// SGD recipe: base learning rate plus an optional piecewise-constant
/// schedule of (iteration, new_rate) pairs with strictly increasing
/// iterations. The rate at iteration t is the last entry with
/// iteration <= t, or the base rate when none applies.
struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.0;     // in [0, 1)
  double weight_decay = 0.0;  // >= 0
  std::vector<std::pair<std::int64_t, double>> lr_schedule;

  void validate() const;
  double learning_rate_at(std::int64_t iteration) const;
};

/// In-place momentum SGD update:
///   v <- momentum * v + g + weight_decay * theta
///   theta <- theta - lr(iteration) * v
/// Bumps params.revision, invalidating existing forward traces.
/// Throws NumericalError on non-finite gradients or a non-finite result.
void sgd_step(ParameterSet& params, std::span<const Tensor> grads, const OptimizerConfig& opt,
              std::int64_t iteration);

}  // namespace oens
