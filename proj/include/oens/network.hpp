#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oens/tensor.hpp"

namespace oens {

struct LayerDesc {
  enum class Kind { Affine, Relu, SoftmaxOutput };
  Kind kind = Kind::Affine;
  std::size_t in_dim = 0;   // Affine only
  std::size_t out_dim = 0;  // Affine only
  std::size_t classes = 0;  // SoftmaxOutput only
};

inline LayerDesc affine(std::size_t in_dim, std::size_t out_dim) {
  return {LayerDesc::Kind::Affine, in_dim, out_dim, 0};
}
inline LayerDesc relu() { return {LayerDesc::Kind::Relu, 0, 0, 0}; }
inline LayerDesc softmax_output(std::size_t classes) {
  return {LayerDesc::Kind::SoftmaxOutput, 0, 0, classes};
}

/// Declarative feed-forward architecture: affine and relu layers ending in a
/// single softmax output marker. Adjacent layer widths must chain and the
/// output marker must be last.
class NetworkSpec {
 public:
  NetworkSpec() = default;  // empty (invalid) spec; valid() is false
  explicit NetworkSpec(std::vector<LayerDesc> layers);

  /// affine(input, h0) relu affine(h0, h1) relu ... affine(h_last, classes) softmax
  static NetworkSpec dense(std::size_t input_dim, std::span<const std::size_t> hidden,
                           std::size_t class_count);

  bool valid() const { return !layers_.empty(); }
  const std::vector<LayerDesc>& layers() const { return layers_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t class_count() const { return class_count_; }

  /// Text form, e.g. "affine(2,16)|relu|affine(16,3)|softmax(3)". Round-trips
  /// through parse(); the checkpoint digest is computed over this string.
  std::string canonical() const;
  static NetworkSpec parse(std::string_view text);
  std::uint64_t digest() const;  // FNV-1a 64 over canonical()

  bool operator==(const NetworkSpec& other) const { return canonical() == other.canonical(); }

 private:
  std::vector<LayerDesc> layers_;
  std::size_t input_dim_ = 0;
  std::size_t class_count_ = 0;
};

/// Trainable tensors for one network plus same-shaped momentum buffers.
/// `revision` increments on every in-place update; forward traces bind to it
/// so reuse of a stale trace is detected instead of silently accepted.
struct ParameterSet {
  std::vector<std::string> names;  // "L<i>.weight" / "L<i>.bias" per affine layer
  std::vector<Tensor> values;
  std::vector<Tensor> momentum;
  std::uint64_t revision = 0;

  std::size_t tensor_count() const { return values.size(); }
  bool same_bits(const ParameterSet& other) const;
};

/// Glorot-uniform weights (bound sqrt(6/(in+out))), zero biases, zero momentum.
/// Identical (spec, seed) produce bit-identical buffers.
ParameterSet init_params(const NetworkSpec& spec, std::uint64_t seed);

/// Cached per-layer activations for one (ParameterSet, batch) pair.
struct ForwardTrace {
  std::size_t batch_size = 0;
  std::vector<Tensor> activations;  // [0] = inputs, [l+1] = output of layer l
  const ParameterSet* params = nullptr;
  std::uint64_t params_revision = 0;
};

/// Computes pre-softmax logits for a [B x D] batch. When `trace` is non-null
/// the activations needed by backward() are cached into it.
/// Throws ShapeError on dimension mismatch and NumericalError when the output
/// holds NaN/Inf.
Tensor forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& inputs,
               ForwardTrace* trace = nullptr);

/// Per-example -log softmax(logits)[label], computed with max subtraction.
std::vector<double> loss_softmax_xent(const Tensor& logits, const std::vector<int>& labels);

/// Row argmax with ties resolved to the lowest index.
std::vector<int> predict_classes(const Tensor& logits);

enum class LossReduction { Mean, Sum };

/// Gradient of the weighted batch loss w.r.t. every parameter tensor:
///   Mean: d( sum_i w_i * loss_i / sum_i w_i ) / d theta
///   Sum:  d( sum_i w_i * loss_i ) / d theta
/// A weight of zero removes the example from every gradient buffer exactly;
/// all-zero weights yield all-zero gradients. Throws StaleTraceError when the
/// trace does not match the current parameters.
std::vector<Tensor> backward(const NetworkSpec& spec, const ParameterSet& params,
                             const ForwardTrace& trace, const std::vector<int>& labels,
                             std::span<const double> weights,
                             LossReduction reduction = LossReduction::Mean);

/// Scalar batch objective matching backward()'s normalization.
double batch_loss(const NetworkSpec& spec, const ParameterSet& params, const Tensor& inputs,
                  const std::vector<int>& labels, LossReduction reduction = LossReduction::Mean);

}  // namespace oens
