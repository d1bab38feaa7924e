#include "oens/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "oens/rng.hpp"

namespace oens {

NetworkSpec::NetworkSpec(std::vector<LayerDesc> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("network spec must have at least one layer");
  if (layers_.front().kind != LayerDesc::Kind::Affine) {
    throw ConfigError("network spec must start with an affine layer");
  }
  std::size_t width = layers_.front().in_dim;
  if (width == 0) throw ConfigError("affine in_dim must be positive");
  input_dim_ = width;
  bool saw_output = false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerDesc& layer = layers_[i];
    if (saw_output) throw ConfigError("softmax output must be the last layer");
    switch (layer.kind) {
      case LayerDesc::Kind::Affine:
        if (layer.in_dim == 0 || layer.out_dim == 0) {
          throw ConfigError("affine dimensions must be positive");
        }
        if (layer.in_dim != width) {
          throw ConfigError("affine in_dim does not chain with previous layer width");
        }
        width = layer.out_dim;
        break;
      case LayerDesc::Kind::Relu:
        break;
      case LayerDesc::Kind::SoftmaxOutput:
        if (layer.classes != width) {
          throw ConfigError("softmax class count does not match previous layer width");
        }
        saw_output = true;
        class_count_ = layer.classes;
        break;
    }
  }
  if (!saw_output) throw ConfigError("network spec must end with a softmax output layer");
}

NetworkSpec NetworkSpec::dense(std::size_t input_dim, std::span<const std::size_t> hidden,
                               std::size_t class_count) {
  std::vector<LayerDesc> layers;
  std::size_t width = input_dim;
  for (std::size_t h : hidden) {
    layers.push_back(affine(width, h));
    layers.push_back(relu());
    width = h;
  }
  layers.push_back(affine(width, class_count));
  layers.push_back(softmax_output(class_count));
  return NetworkSpec(std::move(layers));
}

std::string NetworkSpec::canonical() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i > 0) out << '|';
    const LayerDesc& layer = layers_[i];
    switch (layer.kind) {
      case LayerDesc::Kind::Affine:
        out << "affine(" << layer.in_dim << ',' << layer.out_dim << ')';
        break;
      case LayerDesc::Kind::Relu:
        out << "relu";
        break;
      case LayerDesc::Kind::SoftmaxOutput:
        out << "softmax(" << layer.classes << ')';
        break;
    }
  }
  return out.str();
}

namespace {

std::size_t parse_size(std::string_view text) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("bad integer in network spec: '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

NetworkSpec NetworkSpec::parse(std::string_view text) {
  std::vector<LayerDesc> layers;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = text.find('|', pos);
    std::string_view token =
        text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
    if (token.empty()) throw ConfigError("empty layer token in network spec");
    if (token == "relu") {
      layers.push_back(relu());
    } else if (token.starts_with("affine(") && token.ends_with(")")) {
      std::string_view args = token.substr(7, token.size() - 8);
      const std::size_t comma = args.find(',');
      if (comma == std::string_view::npos) throw ConfigError("affine layer needs two dimensions");
      layers.push_back(affine(parse_size(args.substr(0, comma)), parse_size(args.substr(comma + 1))));
    } else if (token.starts_with("softmax(") && token.ends_with(")")) {
      layers.push_back(softmax_output(parse_size(token.substr(8, token.size() - 9))));
    } else {
      throw ConfigError("unknown layer token in network spec: '" + std::string(token) + "'");
    }
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return NetworkSpec(std::move(layers));
}

std::uint64_t NetworkSpec::digest() const {
  // FNV-1a 64
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char c : canonical()) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

bool ParameterSet::same_bits(const ParameterSet& other) const {
  if (values.size() != other.values.size()) return false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].same_bits(other.values[i])) return false;
  }
  return true;
}

ParameterSet init_params(const NetworkSpec& spec, std::uint64_t seed) {
  ParameterSet params;
  Rng rng = Rng::derive(seed, Stream::ParamInit);
  std::size_t affine_index = 0;
  for (const LayerDesc& layer : spec.layers()) {
    if (layer.kind != LayerDesc::Kind::Affine) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim + layer.out_dim));
    Tensor weight = Tensor::zeros({layer.in_dim, layer.out_dim});
    for (double& w : weight.data) w = rng.next_uniform(-bound, bound);
    params.names.push_back("L" + std::to_string(affine_index) + ".weight");
    params.momentum.push_back(Tensor::zeros(weight.shape));
    params.values.push_back(std::move(weight));

    params.names.push_back("L" + std::to_string(affine_index) + ".bias");
    params.values.push_back(Tensor::zeros({layer.out_dim}));
    params.momentum.push_back(Tensor::zeros({layer.out_dim}));
    ++affine_index;
  }
  return params;
}

Tensor forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& inputs,
               ForwardTrace* trace) {
  if (!spec.valid()) throw ConfigError("forward called with an empty network spec");
  if (inputs.shape.size() != 2) throw ShapeError("forward expects a [B x D] input tensor");
  if (inputs.cols() != spec.input_dim()) {
    throw ShapeError("input width " + std::to_string(inputs.cols()) +
                     " does not match network input dim " + std::to_string(spec.input_dim()));
  }
  const std::size_t batch = inputs.rows();
  if (trace) {
    trace->batch_size = batch;
    trace->activations.clear();
    trace->activations.push_back(inputs);
    trace->params = &params;
    trace->params_revision = params.revision;
  }

  Tensor current = inputs;
  std::size_t tensor_index = 0;  // walks weight/bias pairs
  for (const LayerDesc& layer : spec.layers()) {
    switch (layer.kind) {
      case LayerDesc::Kind::Affine: {
        const Tensor& weight = params.values[tensor_index];
        const Tensor& bias = params.values[tensor_index + 1];
        tensor_index += 2;
        Tensor next = Tensor::zeros({batch, layer.out_dim});
        for (std::size_t r = 0; r < batch; ++r) {
          const double* x = &current.data[r * layer.in_dim];
          double* y = &next.data[r * layer.out_dim];
          for (std::size_t c = 0; c < layer.out_dim; ++c) y[c] = bias.data[c];
          for (std::size_t i = 0; i < layer.in_dim; ++i) {
            const double xi = x[i];
            const double* wrow = &weight.data[i * layer.out_dim];
            for (std::size_t c = 0; c < layer.out_dim; ++c) y[c] += xi * wrow[c];
          }
        }
        current = std::move(next);
        break;
      }
      case LayerDesc::Kind::Relu: {
        for (double& v : current.data) v = v > 0.0 ? v : 0.0;
        break;
      }
      case LayerDesc::Kind::SoftmaxOutput:
        // Identity at forward time; softmax is fused into the loss.
        break;
    }
    if (trace) trace->activations.push_back(current);
  }
  if (!current.all_finite()) {
    throw NumericalError("forward produced non-finite logits");
  }
  return current;
}

std::vector<double> loss_softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  if (labels.size() != batch) throw ShapeError("label count does not match batch size");
  std::vector<double> losses(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ConfigError("label " + std::to_string(label) + " out of range [0, " +
                        std::to_string(classes) + ")");
    }
    const double* z = &logits.data[r * classes];
    double zmax = z[0];
    for (std::size_t c = 1; c < classes; ++c) zmax = std::max(zmax, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(z[c] - zmax);
    losses[r] = zmax + std::log(sum) - z[static_cast<std::size_t>(label)];
  }
  return losses;
}

std::vector<int> predict_classes(const Tensor& logits) {
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  std::vector<int> preds(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    const double* z = &logits.data[r * classes];
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (z[c] > z[best]) best = c;
    }
    preds[r] = static_cast<int>(best);
  }
  return preds;
}

std::vector<Tensor> backward(const NetworkSpec& spec, const ParameterSet& params,
                             const ForwardTrace& trace, const std::vector<int>& labels,
                             std::span<const double> weights, LossReduction reduction) {
  if (trace.params != &params || trace.params_revision != params.revision) {
    throw StaleTraceError("forward trace does not match the current parameters");
  }
  const std::size_t batch = trace.batch_size;
  if (labels.size() != batch || weights.size() != batch) {
    throw ShapeError("labels/weights length does not match traced batch size");
  }

  std::vector<Tensor> grads;
  grads.reserve(params.values.size());
  for (const Tensor& t : params.values) grads.push_back(Tensor::zeros(t.shape));

  double weight_sum = 0.0;
  for (double w : weights) weight_sum += w;
  if (weight_sum == 0.0) return grads;  // no selected examples, gradient is exactly zero

  const Tensor& logits = trace.activations.back();
  const std::size_t classes = spec.class_count();

  // delta at the logits: scale_i * (softmax(z_i) - onehot(y_i))
  Tensor delta = Tensor::zeros({batch, classes});
  for (std::size_t r = 0; r < batch; ++r) {
    const double w = weights[r];
    if (w == 0.0) continue;  // row stays exactly zero
    const double scale = reduction == LossReduction::Mean ? w / weight_sum : w;
    const double* z = &logits.data[r * classes];
    double* d = &delta.data[r * classes];
    double zmax = z[0];
    for (std::size_t c = 1; c < classes; ++c) zmax = std::max(zmax, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(z[c] - zmax);
    for (std::size_t c = 0; c < classes; ++c) d[c] = scale * (std::exp(z[c] - zmax) / sum);
    d[static_cast<std::size_t>(labels[r])] -= scale;
  }

  // Walk layers in reverse, pairing each with its cached input activation.
  std::size_t tensor_index = params.values.size();
  for (std::size_t li = spec.layers().size(); li-- > 0;) {
    const LayerDesc& layer = spec.layers()[li];
    const Tensor& input = trace.activations[li];
    switch (layer.kind) {
      case LayerDesc::Kind::SoftmaxOutput:
        break;  // fused into delta
      case LayerDesc::Kind::Relu: {
        // relu gate: output > 0 iff pre-activation > 0
        const Tensor& output = trace.activations[li + 1];
        for (std::size_t i = 0; i < delta.data.size(); ++i) {
          if (output.data[i] <= 0.0) delta.data[i] = 0.0;
        }
        break;
      }
      case LayerDesc::Kind::Affine: {
        tensor_index -= 2;
        Tensor& weight_grad = grads[tensor_index];
        Tensor& bias_grad = grads[tensor_index + 1];
        const Tensor& weight = params.values[tensor_index];
        const std::size_t in_dim = layer.in_dim;
        const std::size_t out_dim = layer.out_dim;
        for (std::size_t r = 0; r < batch; ++r) {
          const double* x = &input.data[r * in_dim];
          const double* d = &delta.data[r * out_dim];
          for (std::size_t c = 0; c < out_dim; ++c) bias_grad.data[c] += d[c];
          for (std::size_t i = 0; i < in_dim; ++i) {
            const double xi = x[i];
            double* grow = &weight_grad.data[i * out_dim];
            for (std::size_t c = 0; c < out_dim; ++c) grow[c] += xi * d[c];
          }
        }
        if (li > 0) {
          Tensor prev_delta = Tensor::zeros({batch, in_dim});
          for (std::size_t r = 0; r < batch; ++r) {
            const double* d = &delta.data[r * out_dim];
            double* pd = &prev_delta.data[r * in_dim];
            for (std::size_t i = 0; i < in_dim; ++i) {
              const double* wrow = &weight.data[i * out_dim];
              double acc = 0.0;
              for (std::size_t c = 0; c < out_dim; ++c) acc += wrow[c] * d[c];
              pd[i] = acc;
            }
          }
          delta = std::move(prev_delta);
        }
        break;
      }
    }
  }
  return grads;
}

double batch_loss(const NetworkSpec& spec, const ParameterSet& params, const Tensor& inputs,
                  const std::vector<int>& labels, LossReduction reduction) {
  const Tensor logits = forward(spec, params, inputs);
  const std::vector<double> losses = loss_softmax_xent(logits, labels);
  double sum = 0.0;
  for (double v : losses) sum += v;
  if (reduction == LossReduction::Mean && !losses.empty()) {
    sum /= static_cast<double>(losses.size());
  }
  return sum;
}

}  // namespace oens
