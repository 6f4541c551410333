#pragma once

// Parameter storage, layer descriptions and sequential execution shared by
// the classifier and the DCGAN networks.

#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "drnet/layers.hpp"

namespace drnet {

/// Named parameter tensors of one network, kept in sorted (canonical) order.
/// Batch-norm running statistics and `meta.*` entries are stored alongside
/// but are never trained.
template <typename T>
class NetworkParams {
 public:
  void add(const std::string& name, Tensor<T> value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  void set(const std::string& name, Tensor<T> value) { tensors_[name] = std::move(value); }

  static bool is_trainable(std::string_view name);

  std::size_t size() const { return tensors_.size(); }
  /// Number of scalars in trainable tensors.
  std::size_t parameter_count() const;
  const std::map<std::string, Tensor<T>>& tensors() const { return tensors_; }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  template <typename U>
  NetworkParams<U> cast() const {
    NetworkParams<U> out;
    for (const auto& [name, t] : tensors_) out.add(name, t.template cast<U>());
    return out;
  }

 private:
  std::map<std::string, Tensor<T>> tensors_;
};

/// Everything a forward pass needs: the tape to record on, the parameters to
/// bind, train/eval mode and (for dropout) a random stream.
template <typename T>
class ForwardContext {
 public:
  ForwardContext(Tape<T>& tape, NetworkParams<T>& params, Mode mode, RngStream* rng = nullptr, bool trainable = true)
      : tape(tape), params(params), mode(mode), rng(rng), trainable(trainable) {}

  /// Tape variable for a parameter; bound on first use. Parameters are
  /// constants on the tape when `trainable` is false.
  Var<T> param(const std::string& name);
  /// Uses `value` for the named parameter instead of binding it from `params`.
  void bind(const std::string& name, const Var<T>& value) { bound_.insert_or_assign(name, value); }

  Tape<T>& tape;
  NetworkParams<T>& params;
  Mode mode;
  RngStream* rng;
  bool trainable;

 private:
  std::map<std::string, Var<T>> bound_;
};

struct ConvLayer {
  std::size_t in_channels, out_channels, kernel, stride = 1, padding = 0;
  bool bias = true;
};
struct ConvTransposeLayer {
  std::size_t in_channels, out_channels, kernel, stride = 1, padding = 0;
  bool bias = true;
};
struct BatchNormLayer {
  std::size_t channels;
  BatchNormOptions options{};
};
struct MaxPoolLayer {
  std::size_t window, stride;
};
struct ZeroPadLayer {
  std::size_t pad;
};
struct DenseLayer {
  std::size_t in_features, out_features;
  bool bias = true;
};
struct DropoutLayer {
  double rate;
};
struct ActivationLayer {
  Activation kind;
  double slope = 0.2;
};
/// [N, ...] -> [N, per_sample...]
struct ReshapeLayer {
  std::vector<std::size_t> per_sample;
};
struct FlattenLayer {};
struct GlobalAvgPoolLayer {};
/// One convolutional block (projection shortcut) followed by two identity blocks.
struct ResidualStageLayer {
  std::size_t in_channels, out_channels, stride = 1;
};

using LayerKind = std::variant<ConvLayer, ConvTransposeLayer, BatchNormLayer, MaxPoolLayer, ZeroPadLayer, DenseLayer,
                               DropoutLayer, ActivationLayer, ReshapeLayer, FlattenLayer, GlobalAvgPoolLayer,
                               ResidualStageLayer>;

struct LayerSpec {
  std::string name;
  LayerKind kind;
};

enum class InitScheme {
  HeNormal,  // relu networks: N(0, sqrt(2 / fan_in))
  Dcgan,     // N(0, 0.02) for every weight tensor
};

/// Output shape (batch dimension included) for a given input shape.
Shape output_shape(const LayerSpec& layer, const Shape& input);
/// Names of every tensor the layer owns, trainable or not.
std::vector<std::string> parameter_names(const LayerSpec& layer);

template <typename T>
void init_layer(const LayerSpec& layer, NetworkParams<T>& params, RngStream& rng, InitScheme scheme);

template <typename T>
Var<T> forward_layer(const LayerSpec& layer, ForwardContext<T>& ctx, const Var<T>& x);

// Residual building blocks. Each block's residual branch is
// conv3x3 -> BN -> relu -> conv3x3 -> BN, added to the shortcut and passed
// through a final relu.
template <typename T>
Var<T> identity_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x);
template <typename T>
Var<T> conv_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x, std::size_t out_channels,
                  std::size_t stride);
template <typename T>
Var<T> residual_stage(ForwardContext<T>& ctx, const std::string& prefix, const ResidualStageLayer& spec,
                      const Var<T>& x);

/// Sequential stack of layers with a fixed per-sample input shape.
class Architecture {
 public:
  Architecture(std::vector<LayerSpec> layers, Shape sample_shape);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const Shape& sample_shape() const { return sample_shape_; }
  /// Input shape for a batch of n samples.
  Shape input_shape(std::size_t batch) const;
  /// Shape after every layer for a batch of n samples (validates the whole chain).
  std::vector<Shape> layer_shapes(std::size_t batch) const;
  Shape output_shape(std::size_t batch) const { return layer_shapes(batch).back(); }

  template <typename T>
  NetworkParams<T> init(std::uint64_t seed, InitScheme scheme) const;

  template <typename T>
  Var<T> forward(ForwardContext<T>& ctx, const Var<T>& x) const;

 private:
  std::vector<LayerSpec> layers_;
  Shape sample_shape_;
};

}  // namespace drnet
