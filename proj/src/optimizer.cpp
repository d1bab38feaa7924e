#include "oens/optimizer.hpp"

#include <cmath>
#include <string>

namespace oens {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (!(lr_schedule[i].second > 0.0)) throw ConfigError("scheduled learning rate must be positive");
    if (i > 0 && lr_schedule[i].first <= lr_schedule[i - 1].first) {
      throw ConfigError("lr_schedule iterations must be strictly increasing");
    }
  }
}

double OptimizerConfig::learning_rate_at(std::int64_t iteration) const {
  double rate = learning_rate;
  for (const auto& [start, value] : lr_schedule) {
    if (start <= iteration) rate = value;
    else break;
  }
  return rate;
}

void sgd_step(ParameterSet& params, std::span<const Tensor> grads, const OptimizerConfig& opt,
              std::int64_t iteration) {
  if (grads.size() != params.values.size()) {
    throw ShapeError("gradient tensor count does not match parameter set");
  }
  const double rate = opt.learning_rate_at(iteration);
  for (std::size_t t = 0; t < grads.size(); ++t) {
    const Tensor& g = grads[t];
    Tensor& theta = params.values[t];
    Tensor& v = params.momentum[t];
    if (g.shape != theta.shape) {
      throw ShapeError("gradient shape mismatch for tensor '" + params.names[t] + "'");
    }
    if (!g.all_finite()) {
      throw NumericalError("non-finite gradient for tensor '" + params.names[t] + "'");
    }
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      v.data[i] = opt.momentum * v.data[i] + g.data[i] + opt.weight_decay * theta.data[i];
      theta.data[i] -= rate * v.data[i];
    }
    if (!theta.all_finite()) {
      throw NumericalError("non-finite parameters after update of '" + params.names[t] + "'");
    }
  }
  ++params.revision;
}

}  // namespace oens
