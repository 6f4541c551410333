#pragma once

// Neural-network layer primitives on the autodiff tape. Image tensors are
// NCHW; convolution weights are [out, in, k, k], transpose-convolution
// weights are [in, out, k, k].

#include <optional>

#include "drnet/autodiff.hpp"

namespace drnet {

enum class Mode { Train, Eval };

enum class Activation { Relu, LeakyRelu, Tanh, Sigmoid, Softmax };

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// floor((in + 2*pad - kernel) / stride) + 1; ShapeError when the kernel
/// does not fit the padded input.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);
/// (in - 1) * stride - 2*pad + kernel; ShapeError when that is not positive.
std::size_t conv_transpose_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);
/// floor((in - window) / stride) + 1; ShapeError when the window exceeds the input.
std::size_t pool_output_extent(std::size_t in, std::size_t window, std::size_t stride);

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias, ConvGeometry geometry);

template <typename T>
Var<T> conv2d_transpose(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias,
                        ConvGeometry geometry);

struct BatchNormOptions {
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double epsilon = 1e-5;
};

/// Per-channel batch normalization over axis 1 of a [N, C] or [N, C, H, W]
/// tensor. Train mode normalizes with batch statistics (biased variance) and
/// updates the running statistics in place; eval mode uses them read-only.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, Mode mode, BatchNormOptions options = {});

/// Unpadded max pooling; ties route the gradient to the first element in
/// row-major window order.
template <typename T>
Var<T> max_pool2d(const Var<T>& x, std::size_t window, std::size_t stride);

template <typename T>
Var<T> zero_pad2d(const Var<T>& x, std::size_t pad);

/// [N, C, H, W] -> [N, C]
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

/// Inverted dropout: train mode zeroes entries with probability `rate` and
/// scales survivors by 1/(1-rate); eval mode is the identity.
template <typename T>
Var<T> dropout(const Var<T>& x, double rate, Mode mode, RngStream& rng);

/// x[N, in] * w[in, out] + b[out]
template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias);

template <typename T>
Var<T> activate(Activation kind, const Var<T>& x, double slope = 0.2);

}  // namespace drnet
