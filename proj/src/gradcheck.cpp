#include "oens/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oens/rng.hpp"

namespace oens {

std::vector<Tensor> finite_difference_grad(const NetworkSpec& spec, const ParameterSet& params,
                                           const Tensor& inputs, const std::vector<int>& labels,
                                           double epsilon, LossReduction reduction) {
  if (!(epsilon > 0.0)) throw ConfigError("finite-difference epsilon must be positive");
  ParameterSet probe = params;
  std::vector<Tensor> grads;
  grads.reserve(params.values.size());
  for (std::size_t t = 0; t < params.values.size(); ++t) {
    Tensor grad = Tensor::zeros(params.values[t].shape);
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
      const double saved = probe.values[t].data[i];
      probe.values[t].data[i] = saved + epsilon;
      const double plus = batch_loss(spec, probe, inputs, labels, reduction);
      probe.values[t].data[i] = saved - epsilon;
      const double minus = batch_loss(spec, probe, inputs, labels, reduction);
      probe.values[t].data[i] = saved;
      grad.data[i] = (plus - minus) / (2.0 * epsilon);
    }
    grads.push_back(std::move(grad));
  }
  return grads;
}

namespace {

// Smallest |pre-activation| across all relu layers, +inf when there are none.
double min_relu_preactivation(const NetworkSpec& spec, const ParameterSet& params,
                              const Tensor& inputs) {
  ForwardTrace trace;
  forward(spec, params, inputs, &trace);
  double min_abs = std::numeric_limits<double>::infinity();
  for (std::size_t li = 0; li < spec.layers().size(); ++li) {
    if (spec.layers()[li].kind != LayerDesc::Kind::Relu) continue;
    const Tensor& pre = trace.activations[li];  // input of the relu layer
    for (double v : pre.data) min_abs = std::min(min_abs, std::abs(v));
  }
  return min_abs;
}

}  // namespace

GradCheckOutcome check_gradients(const GradCheckConfig& config) {
  if (config.trials <= 0) throw ConfigError("gradcheck trials must be positive");
  GradCheckOutcome outcome;
  Rng rng = Rng::derive(config.seed, Stream::GradCheck);
  // Keep finite differences on smooth points; see header.
  constexpr double kKinkMargin = 1e-3;
  constexpr double kErrorFloor = 1e-3;

  for (int trial = 0; trial < config.trials; ++trial) {
    NetworkSpec spec = NetworkSpec();
    ParameterSet params;
    Tensor inputs;
    std::vector<int> labels;
    // Redraw until the configuration is clear of relu kinks.
    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::size_t affine_count = 1 + rng.next_below(3);
      const std::size_t input_dim = 1 + rng.next_below(8);
      const std::size_t classes = 2 + rng.next_below(9);
      std::vector<std::size_t> hidden;
      for (std::size_t l = 0; l + 1 < affine_count; ++l) {
        hidden.push_back(1 + rng.next_below(config.max_units));
      }
      spec = NetworkSpec::dense(input_dim, hidden, classes);
      params = init_params(spec, rng.next_u64());
      const std::size_t batch = 1 + rng.next_below(6);
      inputs = Tensor::zeros({batch, input_dim});
      for (double& v : inputs.data) v = rng.next_gaussian();
      labels.resize(batch);
      for (int& y : labels) y = static_cast<int>(rng.next_below(classes));
      if (min_relu_preactivation(spec, params, inputs) > kKinkMargin) break;
    }

    ForwardTrace trace;
    forward(spec, params, inputs, &trace);
    const std::vector<double> ones(trace.batch_size, 1.0);
    const std::vector<Tensor> analytic = backward(spec, params, trace, labels, ones);
    const std::vector<Tensor> numeric =
        finite_difference_grad(spec, params, inputs, labels, config.epsilon);

    for (std::size_t t = 0; t < analytic.size(); ++t) {
      for (std::size_t i = 0; i < analytic[t].data.size(); ++i) {
        const double a = analytic[t].data[i];
        const double b = numeric[t].data[i];
        const double err = std::abs(a - b) / std::max({std::abs(a), std::abs(b), kErrorFloor});
        outcome.max_rel_error = std::max(outcome.max_rel_error, err);
      }
    }
    ++outcome.trials_run;
  }
  outcome.passed = outcome.max_rel_error <= config.tolerance;
  return outcome;
}

}  // namespace oens
