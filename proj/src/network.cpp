#include "drnet/network.hpp"

#include <fmt/format.h>

#include <cmath>

#include "drnet/error.hpp"

namespace drnet {

template <typename T>
void NetworkParams<T>::add(const std::string& name, Tensor<T> value) {
  if (!tensors_.emplace(name, std::move(value)).second)
    throw std::invalid_argument("parameter '" + name + "' registered twice");
}

template <typename T>
Tensor<T>& NetworkParams<T>::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
const Tensor<T>& NetworkParams<T>::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
bool NetworkParams<T>::is_trainable(std::string_view name) {
  if (name.starts_with("meta.")) return false;
  return !(name.ends_with(".running_mean") || name.ends_with(".running_var"));
}

template <typename T>
std::size_t NetworkParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_)
    if (is_trainable(name)) n += t.numel();
  return n;
}

template <typename T>
Var<T> ForwardContext<T>::param(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const Tensor<T>& value = params.at(name);
  Var<T> v = trainable ? tape.parameter(name, value) : tape.constant(value);
  bound_.emplace(name, v);
  return v;
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_rank(const Shape& s, std::size_t rank, const std::string& layer) {
  if (s.rank() != rank) throw ShapeError(fmt::format("layer '{}' expects rank {} input, got {}", layer, rank, s.str()));
}

void require_channels(const Shape& s, std::size_t channels, const std::string& layer) {
  if (s[1] != channels)
    throw ShapeError(fmt::format("layer '{}' expects {} channels/features, got {}", layer, channels, s.str()));
}

std::uint64_t name_hash(const std::string& name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ull;
  return h;
}

std::vector<std::string> bn_names(const std::string& p) {
  return {p + ".gamma", p + ".beta", p + ".running_mean", p + ".running_var"};
}

// Weight tensors of one residual block, in a fixed order.
struct BlockParams {
  std::string conv1, bn1, conv2, bn2, shortcut_conv, shortcut_bn;
};

BlockParams block_params(const std::string& prefix) {
  return {prefix + ".conv1", prefix + ".bn1", prefix + ".conv2", prefix + ".bn2", prefix + ".shortcut.conv",
          prefix + ".shortcut.bn"};
}

std::string block_prefix(const std::string& stage, int block) { return fmt::format("{}.block{}", stage, block); }

template <typename T>
void init_conv_weight(NetworkParams<T>& params, const std::string& name, Shape shape, std::size_t fan_in,
                      RngStream& rng, InitScheme scheme) {
  RngStream r = rng.derive(name_hash(name));
  const double stddev = scheme == InitScheme::Dcgan ? 0.02 : std::sqrt(2.0 / static_cast<double>(fan_in));
  params.add(name, Tensor<T>::normal(std::move(shape), r, 0.0, stddev));
}

template <typename T>
void init_bn(NetworkParams<T>& params, const std::string& prefix, std::size_t channels) {
  params.add(prefix + ".gamma", Tensor<T>(Shape{channels}, T(1)));
  params.add(prefix + ".beta", Tensor<T>(Shape{channels}, T(0)));
  params.add(prefix + ".running_mean", Tensor<T>(Shape{channels}, T(0)));
  params.add(prefix + ".running_var", Tensor<T>(Shape{channels}, T(1)));
}

template <typename T>
Var<T> apply_bn(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x, BatchNormOptions options = {}) {
  return batch_norm(x, ctx.param(prefix + ".gamma"), ctx.param(prefix + ".beta"),
                    ctx.params.at(prefix + ".running_mean"), ctx.params.at(prefix + ".running_var"), ctx.mode,
                    options);
}

template <typename T>
Var<T> apply_conv3(ForwardContext<T>& ctx, const std::string& name, const Var<T>& x, std::size_t stride) {
  return conv2d(x, ctx.param(name + ".weight"), std::optional<Var<T>>{}, ConvGeometry{stride, 1});
}

template <typename T>
void init_block(NetworkParams<T>& params, const std::string& prefix, std::size_t in, std::size_t out, bool projection,
                RngStream& rng, InitScheme scheme) {
  const BlockParams b = block_params(prefix);
  init_conv_weight(params, b.conv1 + ".weight", Shape{out, in, 3, 3}, in * 9, rng, scheme);
  init_bn(params, b.bn1, out);
  init_conv_weight(params, b.conv2 + ".weight", Shape{out, out, 3, 3}, out * 9, rng, scheme);
  init_bn(params, b.bn2, out);
  if (projection) {
    init_conv_weight(params, b.shortcut_conv + ".weight", Shape{out, in, 1, 1}, in, rng, scheme);
    init_bn(params, b.shortcut_bn, out);
  }
}

std::vector<std::string> block_param_names(const std::string& prefix, bool projection) {
  const BlockParams b = block_params(prefix);
  std::vector<std::string> names{b.conv1 + ".weight"};
  for (auto& n : bn_names(b.bn1)) names.push_back(n);
  names.push_back(b.conv2 + ".weight");
  for (auto& n : bn_names(b.bn2)) names.push_back(n);
  if (projection) {
    names.push_back(b.shortcut_conv + ".weight");
    for (auto& n : bn_names(b.shortcut_bn)) names.push_back(n);
  }
  return names;
}

}  // namespace

template <typename T>
Var<T> identity_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x) {
  const BlockParams b = block_params(prefix);
  Var<T> h = relu(apply_bn(ctx, b.bn1, apply_conv3(ctx, b.conv1, x, 1)));
  h = apply_bn(ctx, b.bn2, apply_conv3(ctx, b.conv2, h, 1));
  return relu(add(h, x));
}

template <typename T>
Var<T> conv_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x, std::size_t out_channels,
                  std::size_t stride) {
  const BlockParams b = block_params(prefix);
  if (ctx.params.at(b.conv1 + ".weight").dim(0) != out_channels)
    throw ShapeError(fmt::format("block '{}' was built for a different channel count", prefix));
  Var<T> h = relu(apply_bn(ctx, b.bn1, apply_conv3(ctx, b.conv1, x, stride)));
  h = apply_bn(ctx, b.bn2, apply_conv3(ctx, b.conv2, h, 1));
  Var<T> shortcut =
      conv2d(x, ctx.param(b.shortcut_conv + ".weight"), std::optional<Var<T>>{}, ConvGeometry{stride, 0});
  shortcut = apply_bn(ctx, b.shortcut_bn, shortcut);
  return relu(add(h, shortcut));
}

template <typename T>
Var<T> residual_stage(ForwardContext<T>& ctx, const std::string& prefix, const ResidualStageLayer& spec,
                      const Var<T>& x) {
  if (x.shape().rank() != 4 || x.shape()[1] != spec.in_channels)
    throw ShapeError(fmt::format("residual stage '{}' expects {} input channels, got {}", prefix, spec.in_channels,
                                 x.shape().str()));
  Var<T> h = conv_block(ctx, block_prefix(prefix, 0), x, spec.out_channels, spec.stride);
  h = identity_block(ctx, block_prefix(prefix, 1), h);
  return identity_block(ctx, block_prefix(prefix, 2), h);
}

Shape output_shape(const LayerSpec& layer, const Shape& in) {
  const std::string& name = layer.name;
  return std::visit(
      overloaded{
          [&](const ConvLayer& l) {
            require_rank(in, 4, name);
            require_channels(in, l.in_channels, name);
            return Shape{in[0], l.out_channels, conv_output_extent(in[2], l.kernel, l.stride, l.padding),
                         conv_output_extent(in[3], l.kernel, l.stride, l.padding)};
          },
          [&](const ConvTransposeLayer& l) {
            require_rank(in, 4, name);
            require_channels(in, l.in_channels, name);
            return Shape{in[0], l.out_channels, conv_transpose_output_extent(in[2], l.kernel, l.stride, l.padding),
                         conv_transpose_output_extent(in[3], l.kernel, l.stride, l.padding)};
          },
          [&](const BatchNormLayer& l) {
            if (in.rank() != 2 && in.rank() != 4) require_rank(in, 4, name);
            require_channels(in, l.channels, name);
            return in;
          },
          [&](const MaxPoolLayer& l) {
            require_rank(in, 4, name);
            return Shape{in[0], in[1], pool_output_extent(in[2], l.window, l.stride),
                         pool_output_extent(in[3], l.window, l.stride)};
          },
          [&](const ZeroPadLayer& l) {
            require_rank(in, 4, name);
            return Shape{in[0], in[1], in[2] + 2 * l.pad, in[3] + 2 * l.pad};
          },
          [&](const DenseLayer& l) {
            require_rank(in, 2, name);
            require_channels(in, l.in_features, name);
            return Shape{in[0], l.out_features};
          },
          [&](const DropoutLayer&) { return in; },
          [&](const ActivationLayer& l) {
            if (l.kind == Activation::Softmax) require_rank(in, 2, name);
            return in;
          },
          [&](const ReshapeLayer& l) {
            std::vector<std::size_t> dims{in[0]};
            dims.insert(dims.end(), l.per_sample.begin(), l.per_sample.end());
            Shape out(dims);
            if (out.numel() != in.numel())
              throw ShapeError(fmt::format("layer '{}' cannot reshape {} to {}", name, in.str(), out.str()));
            return out;
          },
          [&](const FlattenLayer&) { return Shape{in[0], in.numel() / in[0]}; },
          [&](const GlobalAvgPoolLayer&) {
            require_rank(in, 4, name);
            return Shape{in[0], in[1]};
          },
          [&](const ResidualStageLayer& l) {
            require_rank(in, 4, name);
            require_channels(in, l.in_channels, name);
            const std::size_t h = conv_output_extent(in[2], 3, l.stride, 1);
            const std::size_t w = conv_output_extent(in[3], 3, l.stride, 1);
            return Shape{in[0], l.out_channels, h, w};
          },
      },
      layer.kind);
}

std::vector<std::string> parameter_names(const LayerSpec& layer) {
  const std::string& p = layer.name;
  return std::visit(overloaded{
                        [&](const ConvLayer& l) {
                          std::vector<std::string> n{p + ".weight"};
                          if (l.bias) n.push_back(p + ".bias");
                          return n;
                        },
                        [&](const ConvTransposeLayer& l) {
                          std::vector<std::string> n{p + ".weight"};
                          if (l.bias) n.push_back(p + ".bias");
                          return n;
                        },
                        [&](const BatchNormLayer&) { return bn_names(p); },
                        [&](const DenseLayer& l) {
                          std::vector<std::string> n{p + ".weight"};
                          if (l.bias) n.push_back(p + ".bias");
                          return n;
                        },
                        [&](const ResidualStageLayer&) {
                          std::vector<std::string> n = block_param_names(block_prefix(p, 0), true);
                          for (int b = 1; b <= 2; ++b)
                            for (auto& s : block_param_names(block_prefix(p, b), false)) n.push_back(s);
                          return n;
                        },
                        [&](const auto&) { return std::vector<std::string>{}; },
                    },
                    layer.kind);
}

template <typename T>
void init_layer(const LayerSpec& layer, NetworkParams<T>& params, RngStream& rng, InitScheme scheme) {
  const std::string& p = layer.name;
  std::visit(overloaded{
                 [&](const ConvLayer& l) {
                   init_conv_weight(params, p + ".weight", Shape{l.out_channels, l.in_channels, l.kernel, l.kernel},
                                    l.in_channels * l.kernel * l.kernel, rng, scheme);
                   if (l.bias) params.add(p + ".bias", Tensor<T>(Shape{l.out_channels}));
                 },
                 [&](const ConvTransposeLayer& l) {
                   init_conv_weight(params, p + ".weight", Shape{l.in_channels, l.out_channels, l.kernel, l.kernel},
                                    l.in_channels * l.kernel * l.kernel, rng, scheme);
                   if (l.bias) params.add(p + ".bias", Tensor<T>(Shape{l.out_channels}));
                 },
                 [&](const BatchNormLayer& l) { init_bn(params, p, l.channels); },
                 [&](const DenseLayer& l) {
                   init_conv_weight(params, p + ".weight", Shape{l.in_features, l.out_features}, l.in_features, rng,
                                    scheme);
                   if (l.bias) params.add(p + ".bias", Tensor<T>(Shape{l.out_features}));
                 },
                 [&](const ResidualStageLayer& l) {
                   init_block(params, block_prefix(p, 0), l.in_channels, l.out_channels, true, rng, scheme);
                   init_block(params, block_prefix(p, 1), l.out_channels, l.out_channels, false, rng, scheme);
                   init_block(params, block_prefix(p, 2), l.out_channels, l.out_channels, false, rng, scheme);
                 },
                 [&](const auto&) {},
             },
             layer.kind);
}

template <typename T>
Var<T> forward_layer(const LayerSpec& layer, ForwardContext<T>& ctx, const Var<T>& x) {
  const std::string& p = layer.name;
  auto bias = [&](bool has) { return has ? std::optional<Var<T>>(ctx.param(p + ".bias")) : std::optional<Var<T>>{}; };
  return std::visit(
      overloaded{
          [&](const ConvLayer& l) {
            return conv2d(x, ctx.param(p + ".weight"), bias(l.bias), ConvGeometry{l.stride, l.padding});
          },
          [&](const ConvTransposeLayer& l) {
            return conv2d_transpose(x, ctx.param(p + ".weight"), bias(l.bias), ConvGeometry{l.stride, l.padding});
          },
          [&](const BatchNormLayer& l) { return apply_bn(ctx, p, x, l.options); },
          [&](const MaxPoolLayer& l) { return max_pool2d(x, l.window, l.stride); },
          [&](const ZeroPadLayer& l) { return zero_pad2d(x, l.pad); },
          [&](const DenseLayer& l) { return dense(x, ctx.param(p + ".weight"), bias(l.bias)); },
          [&](const DropoutLayer& l) {
            if (ctx.mode == Mode::Train && l.rate > 0.0 && ctx.rng == nullptr)
              throw std::invalid_argument("dropout layer '" + p + "' needs a random stream in train mode");
            RngStream fallback(0);
            return dropout(x, l.rate, ctx.mode, ctx.rng ? *ctx.rng : fallback);
          },
          [&](const ActivationLayer& l) { return activate(l.kind, x, l.slope); },
          [&](const ReshapeLayer&) { return reshape(x, output_shape(layer, x.shape())); },
          [&](const FlattenLayer&) { return flatten(x); },
          [&](const GlobalAvgPoolLayer&) { return global_avg_pool(x); },
          [&](const ResidualStageLayer& l) { return residual_stage(ctx, p, l, x); },
      },
      layer.kind);
}

Architecture::Architecture(std::vector<LayerSpec> layers, Shape sample_shape)
    : layers_(std::move(layers)), sample_shape_(std::move(sample_shape)) {
  if (layers_.empty()) throw std::invalid_argument("architecture needs at least one layer");
}

Shape Architecture::input_shape(std::size_t batch) const {
  std::vector<std::size_t> dims{batch};
  dims.insert(dims.end(), sample_shape_.dims().begin(), sample_shape_.dims().end());
  return Shape(dims);
}

std::vector<Shape> Architecture::layer_shapes(std::size_t batch) const {
  std::vector<Shape> shapes;
  Shape s = input_shape(batch);
  for (const auto& layer : layers_) {
    s = drnet::output_shape(layer, s);
    shapes.push_back(s);
  }
  return shapes;
}

template <typename T>
NetworkParams<T> Architecture::init(std::uint64_t seed, InitScheme scheme) const {
  layer_shapes(1);
  NetworkParams<T> params;
  RngStream rng(seed, 0x696e6974ull);
  for (const auto& layer : layers_) init_layer(layer, params, rng, scheme);
  return params;
}

template <typename T>
Var<T> Architecture::forward(ForwardContext<T>& ctx, const Var<T>& x) const {
  if (x.shape() != input_shape(x.shape()[0]))
    throw ShapeError(fmt::format("network expects input {}, got {}", input_shape(x.shape()[0]).str(), x.shape().str()));
  Var<T> h = x;
  for (const auto& layer : layers_) h = forward_layer(layer, ctx, h);
  return h;
}

#define DRNET_INSTANTIATE(T)                                                                                  \
  template class NetworkParams<T>;                                                                            \
  template class ForwardContext<T>;                                                                           \
  template void init_layer(const LayerSpec&, NetworkParams<T>&, RngStream&, InitScheme);                      \
  template Var<T> forward_layer(const LayerSpec&, ForwardContext<T>&, const Var<T>&);                         \
  template Var<T> identity_block(ForwardContext<T>&, const std::string&, const Var<T>&);                      \
  template Var<T> conv_block(ForwardContext<T>&, const std::string&, const Var<T>&, std::size_t, std::size_t); \
  template Var<T> residual_stage(ForwardContext<T>&, const std::string&, const ResidualStageLayer&,           \
                                 const Var<T>&);                                                              \
  template NetworkParams<T> Architecture::init<T>(std::uint64_t, InitScheme) const;                           \
  template Var<T> Architecture::forward<T>(ForwardContext<T>&, const Var<T>&) const;

DRNET_INSTANTIATE(float)
DRNET_INSTANTIATE(double)

#undef DRNET_INSTANTIATE

}  // namespace drnet
