#include <doctest.h>

#include <cmath>
#include <vector>

#include "oens/gradcheck.hpp"
#include "oens/network.hpp"
#include "oens/optimizer.hpp"
#include "oens/rng.hpp"

using namespace oens;

namespace {

NetworkSpec tiny_spec(std::size_t in, std::size_t out) {
  return NetworkSpec({affine(in, out), softmax_output(out)});
}

double max_rel_error(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t i = 0; i < a[t].data.size(); ++i) {
      const double x = a[t].data[i], y = b[t].data[i];
      worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-3}));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("init_params is bit-deterministic") {
  const NetworkSpec spec = tiny_spec(2, 2);
  const ParameterSet a = init_params(spec, 7);
  const ParameterSet b = init_params(spec, 7);
  CHECK(a.same_bits(b));
  const ParameterSet c = init_params(spec, 8);
  CHECK_FALSE(a.same_bits(c));
}

TEST_CASE("init_params zeroes biases and momentum") {
  const NetworkSpec spec = NetworkSpec::dense(3, std::vector<std::size_t>{5}, 4);
  const ParameterSet params = init_params(spec, 123);
  for (std::size_t t = 0; t < params.values.size(); ++t) {
    if (params.names[t].ends_with(".bias")) {
      for (double v : params.values[t].data) CHECK(v == 0.0);
    }
    for (double v : params.momentum[t].data) CHECK(v == 0.0);
  }
}

TEST_CASE("init_params respects the uniform bound") {
  const NetworkSpec spec = tiny_spec(4, 4);
  const ParameterSet params = init_params(spec, 1);
  const double bound = std::sqrt(6.0 / 8.0);
  for (double w : params.values[0].data) {
    CHECK(w >= -bound);
    CHECK(w <= bound);
  }
}

TEST_CASE("forward with zero parameters gives zero logits") {
  const NetworkSpec spec = NetworkSpec::dense(3, std::vector<std::size_t>{4}, 2);
  ParameterSet params = init_params(spec, 5);
  for (Tensor& t : params.values) t.data.assign(t.data.size(), 0.0);
  Tensor inputs({2, 3}, {1.0, -2.0, 3.0, 0.5, 0.25, -1.0});
  const Tensor logits = forward(spec, params, inputs);
  for (double v : logits.data) CHECK(v == 0.0);
}

TEST_CASE("identity affine passes inputs through") {
  const NetworkSpec spec = tiny_spec(2, 2);
  ParameterSet params = init_params(spec, 0);
  params.values[0].data = {1.0, 0.0, 0.0, 1.0};  // W = I
  const Tensor logits = forward(spec, params, Tensor({1, 2}, {3.0, 4.0}));
  CHECK(logits.data[0] == doctest::Approx(3.0));
  CHECK(logits.data[1] == doctest::Approx(4.0));
}

TEST_CASE("forward shape contract and mismatch error") {
  const NetworkSpec spec = NetworkSpec::dense(4, std::vector<std::size_t>{8, 6}, 3);
  const ParameterSet params = init_params(spec, 2);
  Tensor inputs = Tensor::zeros({5, 4});
  Rng rng(1);
  for (double& v : inputs.data) v = rng.next_gaussian();
  const Tensor logits = forward(spec, params, inputs);
  CHECK(logits.rows() == 5);
  CHECK(logits.cols() == 3);
  CHECK_THROWS_AS(forward(spec, params, Tensor::zeros({5, 3})), ShapeError);
}

TEST_CASE("softmax cross-entropy on uniform logits is ln(C)") {
  const Tensor logits = Tensor::zeros({3, 10});
  const std::vector<double> losses = loss_softmax_xent(logits, {0, 4, 9});
  for (double l : losses) CHECK(l == doctest::Approx(2.302585092994046).epsilon(1e-12));
}

TEST_CASE("saturated correct class gives near-zero loss") {
  const Tensor logits({1, 2}, {100.0, 0.0});
  const std::vector<double> losses = loss_softmax_xent(logits, {0});
  CHECK(losses[0] >= 0.0);
  CHECK(losses[0] < 1e-9);
}

TEST_CASE("frozen reference value of -log softmax") {
  // -log(softmax([1,2,3])[2]) evaluated with a 30-digit independent script.
  const Tensor logits({1, 3}, {1.0, 2.0, 3.0});
  const std::vector<double> losses = loss_softmax_xent(logits, {2});
  CHECK(losses[0] == doctest::Approx(0.40760596444438064).epsilon(1e-12));
}

TEST_CASE("per-example losses are non-negative on random logits") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor logits = Tensor::zeros({4, 6});
    for (double& v : logits.data) v = 10.0 * rng.next_gaussian();
    std::vector<int> labels(4);
    for (int& y : labels) y = static_cast<int>(rng.next_below(6));
    for (double l : loss_softmax_xent(logits, labels)) CHECK(l >= 0.0);
  }
}

TEST_CASE("label out of range is rejected") {
  const Tensor logits = Tensor::zeros({1, 3});
  CHECK_THROWS_AS(loss_softmax_xent(logits, {3}), ConfigError);
  CHECK_THROWS_AS(loss_softmax_xent(logits, {-1}), ConfigError);
}

TEST_CASE("all-zero mask returns exactly zero gradients") {
  const NetworkSpec spec = NetworkSpec::dense(3, std::vector<std::size_t>{4}, 2);
  const ParameterSet params = init_params(spec, 3);
  Tensor inputs = Tensor::zeros({4, 3});
  Rng rng(4);
  for (double& v : inputs.data) v = rng.next_gaussian();
  ForwardTrace trace;
  forward(spec, params, inputs, &trace);
  const std::vector<double> zeros(4, 0.0);
  const std::vector<Tensor> grads = backward(spec, params, trace, {0, 1, 0, 1}, zeros);
  for (const Tensor& g : grads) {
    for (double v : g.data) CHECK(v == 0.0);
  }
}

TEST_CASE("masked-out rows contribute nothing, bit-exactly") {
  const NetworkSpec spec = NetworkSpec::dense(2, std::vector<std::size_t>{6}, 3);
  const ParameterSet params = init_params(spec, 11);
  Rng rng(12);
  Tensor full = Tensor::zeros({4, 2});
  for (double& v : full.data) v = rng.next_gaussian();
  const std::vector<int> labels = {0, 2, 1, 0};

  ForwardTrace trace;
  forward(spec, params, full, &trace);
  const std::vector<double> mask = {1.0, 0.0, 1.0, 0.0};
  const std::vector<Tensor> masked = backward(spec, params, trace, labels, mask);

  // Same selected rows as their own batch.
  Tensor sliced({2, 2}, {full.data[0], full.data[1], full.data[4], full.data[5]});
  ForwardTrace sliced_trace;
  forward(spec, params, sliced, &sliced_trace);
  const std::vector<double> ones(2, 1.0);
  const std::vector<Tensor> direct = backward(spec, params, sliced_trace, {0, 1}, ones);
  for (std::size_t t = 0; t < masked.size(); ++t) {
    for (std::size_t i = 0; i < masked[t].data.size(); ++i) {
      CHECK(masked[t].data[i] == doctest::Approx(direct[t].data[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("single-example mask matches finite differences") {
  const NetworkSpec spec = NetworkSpec::dense(3, std::vector<std::size_t>{5}, 4);
  const ParameterSet params = init_params(spec, 21);
  Rng rng(22);
  Tensor inputs = Tensor::zeros({3, 3});
  for (double& v : inputs.data) v = rng.next_gaussian();
  const std::vector<int> labels = {1, 3, 0};

  ForwardTrace trace;
  forward(spec, params, inputs, &trace);
  const std::vector<double> mask = {0.0, 1.0, 0.0};
  const std::vector<Tensor> analytic = backward(spec, params, trace, labels, mask);

  const Tensor one_input({1, 3}, {inputs.data[3], inputs.data[4], inputs.data[5]});
  const std::vector<Tensor> numeric = finite_difference_grad(spec, params, one_input, {3});
  CHECK(max_rel_error(analytic, numeric) <= 1e-4);
}

TEST_CASE("mask linearity under the mean normalization") {
  const NetworkSpec spec = NetworkSpec::dense(2, std::vector<std::size_t>{4}, 2);
  const ParameterSet params = init_params(spec, 31);
  Rng rng(32);
  Tensor inputs = Tensor::zeros({6, 2});
  for (double& v : inputs.data) v = rng.next_gaussian();
  std::vector<int> labels(6);
  for (int& y : labels) y = static_cast<int>(rng.next_below(2));

  ForwardTrace trace;
  forward(spec, params, inputs, &trace);
  const std::vector<double> m1 = {1, 1, 0, 0, 1, 0};
  const std::vector<double> m2 = {0, 0, 1, 1, 0, 1};
  std::vector<double> both(6);
  for (int i = 0; i < 6; ++i) both[i] = m1[i] + m2[i];
  const std::vector<Tensor> g1 = backward(spec, params, trace, labels, m1);
  const std::vector<Tensor> g2 = backward(spec, params, trace, labels, m2);
  const std::vector<Tensor> g = backward(spec, params, trace, labels, both);
  for (std::size_t t = 0; t < g.size(); ++t) {
    for (std::size_t i = 0; i < g[t].data.size(); ++i) {
      const double combined = (3.0 * g1[t].data[i] + 3.0 * g2[t].data[i]) / 6.0;
      CHECK(std::abs(g[t].data[i] - combined) <= 1e-10);
    }
  }
}

TEST_CASE("stale traces are rejected") {
  const NetworkSpec spec = tiny_spec(2, 2);
  ParameterSet params = init_params(spec, 41);
  const Tensor inputs({1, 2}, {0.5, -0.5});
  ForwardTrace trace;
  forward(spec, params, inputs, &trace);
  const std::vector<double> ones(1, 1.0);
  const std::vector<Tensor> grads = backward(spec, params, trace, {0}, ones);
  OptimizerConfig opt;
  opt.learning_rate = 0.1;
  sgd_step(params, grads, opt, 0);
  CHECK_THROWS_AS(backward(spec, params, trace, {0}, ones), StaleTraceError);
}

TEST_CASE("plain sgd step") {
  NetworkSpec spec = tiny_spec(1, 1);
  // single scalar weight; bias untouched by a zero gradient
  ParameterSet params = init_params(spec, 0);
  params.values[0].data = {1.0};
  OptimizerConfig opt;
  opt.learning_rate = 0.1;
  std::vector<Tensor> grads = {Tensor({1, 1}, {2.0}), Tensor::zeros({1})};
  sgd_step(params, grads, opt, 0);
  CHECK(params.values[0].data[0] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("zero gradients and zero decay are a fixed point") {
  const NetworkSpec spec = NetworkSpec::dense(2, std::vector<std::size_t>{3}, 2);
  ParameterSet params = init_params(spec, 77);
  const ParameterSet before = params;
  std::vector<Tensor> grads;
  for (const Tensor& t : params.values) grads.push_back(Tensor::zeros(t.shape));
  OptimizerConfig opt;
  opt.learning_rate = 0.5;
  opt.momentum = 0.9;
  sgd_step(params, grads, opt, 3);
  CHECK(params.same_bits(before));
}

TEST_CASE("learning-rate schedule picks the last entry at or before t") {
  OptimizerConfig opt;
  opt.learning_rate = 0.001;
  opt.lr_schedule = {{0, 0.001}, {4000, 0.0001}};
  opt.validate();
  CHECK(opt.learning_rate_at(0) == 0.001);
  CHECK(opt.learning_rate_at(3999) == 0.001);
  CHECK(opt.learning_rate_at(4000) == 0.0001);
  CHECK(opt.learning_rate_at(4500) == 0.0001);

  OptimizerConfig bad = opt;
  bad.lr_schedule = {{10, 0.1}, {10, 0.2}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("momentum and weight decay follow the update rule") {
  NetworkSpec spec = tiny_spec(1, 1);
  ParameterSet params = init_params(spec, 0);
  params.values[0].data = {2.0};
  OptimizerConfig opt;
  opt.learning_rate = 0.1;
  opt.momentum = 0.5;
  opt.weight_decay = 0.01;
  std::vector<Tensor> grads = {Tensor({1, 1}, {1.0}), Tensor::zeros({1})};
  // v = 0.5*0 + 1 + 0.01*2 = 1.02 ; theta = 2 - 0.1*1.02 = 1.898
  sgd_step(params, grads, opt, 0);
  CHECK(params.values[0].data[0] == doctest::Approx(1.898).epsilon(1e-15));
  // v = 0.5*1.02 + 1 + 0.01*1.898 = 1.52898 ; theta = 1.898 - 0.152898
  sgd_step(params, grads, opt, 1);
  CHECK(params.values[0].data[0] == doctest::Approx(1.745102).epsilon(1e-12));
}

TEST_CASE("non-finite gradients abort the step") {
  NetworkSpec spec = tiny_spec(1, 1);
  ParameterSet params = init_params(spec, 0);
  OptimizerConfig opt;
  std::vector<Tensor> grads = {Tensor({1, 1}, {std::nan("")}), Tensor::zeros({1})};
  CHECK_THROWS_AS(sgd_step(params, grads, opt, 0), NumericalError);
}

TEST_CASE("finite differences agree with backward on a smooth net") {
  const NetworkSpec spec = tiny_spec(3, 4);
  const ParameterSet params = init_params(spec, 51);
  Rng rng(52);
  Tensor inputs = Tensor::zeros({5, 3});
  for (double& v : inputs.data) v = rng.next_gaussian();
  const std::vector<int> labels = {0, 1, 2, 3, 1};
  ForwardTrace trace;
  forward(spec, params, inputs, &trace);
  const std::vector<double> ones(5, 1.0);
  const std::vector<Tensor> analytic = backward(spec, params, trace, labels, ones);
  const std::vector<Tensor> numeric = finite_difference_grad(spec, params, inputs, labels);
  CHECK(max_rel_error(analytic, numeric) <= 1e-4);
}

TEST_CASE("halving epsilon shrinks the finite-difference error") {
  const NetworkSpec spec = tiny_spec(2, 3);  // smooth everywhere (no relu)
  const ParameterSet params = init_params(spec, 61);
  const Tensor inputs({2, 2}, {0.3, -1.2, 0.8, 0.4});
  const std::vector<int> labels = {2, 0};
  ForwardTrace trace;
  forward(spec, params, inputs, &trace);
  const std::vector<double> ones(2, 1.0);
  const std::vector<Tensor> analytic = backward(spec, params, trace, labels, ones);

  auto worst_abs_error = [&](double eps) {
    const std::vector<Tensor> numeric = finite_difference_grad(spec, params, inputs, labels, eps);
    double worst = 0.0;
    for (std::size_t t = 0; t < numeric.size(); ++t) {
      for (std::size_t i = 0; i < numeric[t].data.size(); ++i) {
        worst = std::max(worst, std::abs(numeric[t].data[i] - analytic[t].data[i]));
      }
    }
    return worst;
  };
  const double coarse = worst_abs_error(1e-2);
  const double fine = worst_abs_error(5e-3);
  CHECK(fine < coarse);
  // central differences are second order: expect roughly a 4x drop
  CHECK(fine < 0.5 * coarse);
}

TEST_CASE("bias gradient at the origin is softmax(0) minus onehot") {
  const NetworkSpec spec = tiny_spec(3, 4);
  ParameterSet params = init_params(spec, 71);
  for (Tensor& t : params.values) t.data.assign(t.data.size(), 0.0);
  const Tensor inputs = Tensor::zeros({1, 3});
  const std::vector<int> labels = {2};

  ForwardTrace trace;
  forward(spec, params, inputs, &trace);
  const std::vector<double> ones(1, 1.0);
  const std::vector<Tensor> analytic = backward(spec, params, trace, labels, ones);
  const std::vector<Tensor> numeric = finite_difference_grad(spec, params, inputs, labels);

  for (const auto* grads : {&analytic, &numeric}) {
    const Tensor& weight_grad = (*grads)[0];
    const Tensor& bias_grad = (*grads)[1];
    for (double v : weight_grad.data) CHECK(std::abs(v) <= 1e-9);
    for (std::size_t c = 0; c < 4; ++c) {
      const double expected = 0.25 - (c == 2 ? 1.0 : 0.0);
      CHECK(bias_grad.data[c] == doctest::Approx(expected).epsilon(1e-7));
    }
  }
}

TEST_CASE("randomized gradient check stays within tolerance") {
  GradCheckConfig config;
  config.trials = 25;  // the acceptance suite runs the full 100
  const GradCheckOutcome outcome = check_gradients(config);
  CHECK(outcome.trials_run == 25);
  CHECK(outcome.max_rel_error <= 1e-4);
  CHECK(outcome.passed);
}

TEST_CASE("sum reduction scales like the batch size") {
  const NetworkSpec spec = tiny_spec(2, 2);
  const ParameterSet params = init_params(spec, 81);
  const Tensor inputs({2, 2}, {0.1, 0.2, -0.3, 0.4});
  const std::vector<int> labels = {0, 1};
  ForwardTrace trace;
  forward(spec, params, inputs, &trace);
  const std::vector<double> ones(2, 1.0);
  const std::vector<Tensor> mean_grads =
      backward(spec, params, trace, labels, ones, LossReduction::Mean);
  const std::vector<Tensor> sum_grads =
      backward(spec, params, trace, labels, ones, LossReduction::Sum);
  for (std::size_t t = 0; t < mean_grads.size(); ++t) {
    for (std::size_t i = 0; i < mean_grads[t].data.size(); ++i) {
      CHECK(sum_grads[t].data[i] == doctest::Approx(2.0 * mean_grads[t].data[i]).epsilon(1e-12));
    }
  }
}
