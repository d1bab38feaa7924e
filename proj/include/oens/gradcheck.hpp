#pragma once

#include <cstdint>
#include <vector>

#include "oens/network.hpp"

namespace oens {

/// Central-difference gradient of the batch loss for every scalar parameter:
///   (loss(theta + eps * e) - loss(theta - eps * e)) / (2 * eps)
/// Independent of the analytic backward path; used as its verification oracle.
std::vector<Tensor> finite_difference_grad(const NetworkSpec& spec, const ParameterSet& params,
                                           const Tensor& inputs, const std::vector<int>& labels,
                                           double epsilon = 1e-5,
                                           LossReduction reduction = LossReduction::Mean);

struct GradCheckConfig {
  int trials = 100;
  double tolerance = 1e-4;
  double epsilon = 1e-5;
  std::uint64_t seed = 20240915;
  // Random nets are capped at three affine layers and 32 units per layer.
  std::size_t max_units = 32;
};

struct GradCheckOutcome {
  double max_rel_error = 0.0;
  int trials_run = 0;
  bool passed = false;
};

/// Compares backward() against finite differences over randomized networks,
/// parameters, and batches. The per-entry error is
///   |a - b| / max(|a|, |b|, 1e-3)
/// so near-zero entries are compared absolutely at 1e-3 scale instead of
/// amplifying round-off. Configurations whose relu pre-activations sit within
/// 1e-3 of zero are redrawn: central differences straddle the kink there and
/// stop being a valid smooth-point oracle.
GradCheckOutcome check_gradients(const GradCheckConfig& config);

}  // namespace oens
