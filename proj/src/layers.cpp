#include "drnet/layers.hpp"

#include <fmt/format.h>

#include <cmath>

#include "drnet/error.hpp"
#include "drnet/simd.hpp"

namespace drnet {

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0 || kernel == 0) throw ShapeError("convolution kernel and stride must be positive");
  if (kernel > in + 2 * pad)
    throw ShapeError(fmt::format("kernel {} larger than padded input extent {}", kernel, in + 2 * pad));
  return (in + 2 * pad - kernel) / stride + 1;
}

std::size_t conv_transpose_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0 || kernel == 0) throw ShapeError("transpose convolution kernel and stride must be positive");
  const long long out = static_cast<long long>(in - 1) * static_cast<long long>(stride) -
                        2 * static_cast<long long>(pad) + static_cast<long long>(kernel);
  if (out <= 0) throw ShapeError(fmt::format("transpose convolution output extent {} is not positive", out));
  return static_cast<std::size_t>(out);
}

std::size_t pool_output_extent(std::size_t in, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ShapeError("pooling window and stride must be positive");
  if (window > in) throw ShapeError(fmt::format("pooling window {} exceeds input extent {}", window, in));
  return (in - window) / stride + 1;
}

namespace {

struct ConvDims {
  std::size_t channels, height, width, kernel, stride, pad, out_h, out_w;
};

// cols[(c*k + kh)*k + kw, oh*out_w + ow] = x[c, oh*s - p + kh, ow*s - p + kw]
template <typename T>
void im2col(const T* x, const ConvDims& d, T* cols) {
  const std::size_t plane = d.out_h * d.out_w;
  for (std::size_t c = 0; c < d.channels; ++c)
    for (std::size_t kh = 0; kh < d.kernel; ++kh)
      for (std::size_t kw = 0; kw < d.kernel; ++kw) {
        T* row = cols + ((c * d.kernel + kh) * d.kernel + kw) * plane;
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const long ih = static_cast<long>(oh * d.stride + kh) - static_cast<long>(d.pad);
          T* dst = row + oh * d.out_w;
          if (ih < 0 || ih >= static_cast<long>(d.height)) {
            std::fill(dst, dst + d.out_w, T(0));
            continue;
          }
          const T* src = x + (c * d.height + static_cast<std::size_t>(ih)) * d.width;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const long iw = static_cast<long>(ow * d.stride + kw) - static_cast<long>(d.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(d.width)) ? T(0) : src[iw];
          }
        }
      }
}

// Adjoint of im2col: scatters column entries back onto the image, accumulating.
template <typename T>
void col2im(const T* cols, const ConvDims& d, T* x) {
  const std::size_t plane = d.out_h * d.out_w;
  for (std::size_t c = 0; c < d.channels; ++c)
    for (std::size_t kh = 0; kh < d.kernel; ++kh)
      for (std::size_t kw = 0; kw < d.kernel; ++kw) {
        const T* row = cols + ((c * d.kernel + kh) * d.kernel + kw) * plane;
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const long ih = static_cast<long>(oh * d.stride + kh) - static_cast<long>(d.pad);
          if (ih < 0 || ih >= static_cast<long>(d.height)) continue;
          T* dst = x + (c * d.height + static_cast<std::size_t>(ih)) * d.width;
          const T* src = row + oh * d.out_w;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const long iw = static_cast<long>(ow * d.stride + kw) - static_cast<long>(d.pad);
            if (iw >= 0 && iw < static_cast<long>(d.width)) dst[iw] += src[ow];
          }
        }
      }
}

void require_rank4(const Shape& s, const char* what) {
  if (s.rank() != 4) throw ShapeError(fmt::format("{} expects an NCHW tensor, got {}", what, s.str()));
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias, ConvGeometry geometry) {
  require_rank4(x.shape(), "conv2d");
  const Shape& ws = weight.shape();
  if (ws.rank() != 4 || ws[2] != ws[3] || ws[1] != x.shape()[1])
    throw ShapeError(fmt::format("conv2d: weight {} does not match input {}", ws.str(), x.shape().str()));
  const std::size_t n = x.shape()[0], oc = ws[0];
  ConvDims d{x.shape()[1], x.shape()[2], x.shape()[3], ws[2], geometry.stride, geometry.padding, 0, 0};
  d.out_h = conv_output_extent(d.height, d.kernel, d.stride, d.pad);
  d.out_w = conv_output_extent(d.width, d.kernel, d.stride, d.pad);
  const std::size_t ckk = d.channels * d.kernel * d.kernel, plane = d.out_h * d.out_w;
  const std::size_t in_size = d.channels * d.height * d.width;

  Tensor<T> out(Shape{n, oc, d.out_h, d.out_w});
  std::vector<T> cols(ckk * plane);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.value().ptr() + i * in_size, d, cols.data());
    simd::gemm_nn(oc, plane, ckk, weight.value().ptr(), cols.data(), out.ptr() + i * oc * plane);
  }
  Var<T> y;
  if (!x.requires_grad() && !weight.requires_grad()) {
    y = x.tape().constant(std::move(out));
  } else {
    y = x.tape().record(std::move(out), [x, weight, d, n, oc, ckk, plane, in_size](const Tensor<T>& g, const Tensor<T>&,
                                                                                   GradSink<T>& s) {
      std::vector<T> cols(ckk * plane);
      Tensor<T>* gw = s.wants(weight) ? &s.slot(weight) : nullptr;
      Tensor<T>* gx = s.wants(x) ? &s.slot(x) : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const T* gi = g.ptr() + i * oc * plane;
        if (gw) {
          im2col(x.value().ptr() + i * in_size, d, cols.data());
          simd::gemm_nt(oc, ckk, plane, gi, cols.data(), gw->ptr());
        }
        if (gx) {
          std::fill(cols.begin(), cols.end(), T(0));
          simd::gemm_tn(ckk, plane, oc, weight.value().ptr(), gi, cols.data());
          col2im(cols.data(), d, gx->ptr() + i * in_size);
        }
      }
    });
  }
  return bias ? add_channel_bias(y, *bias) : y;
}

template <typename T>
Var<T> conv2d_transpose(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias,
                        ConvGeometry geometry) {
  require_rank4(x.shape(), "conv2d_transpose");
  const Shape& ws = weight.shape();
  if (ws.rank() != 4 || ws[2] != ws[3] || ws[0] != x.shape()[1])
    throw ShapeError(fmt::format("conv2d_transpose: weight {} does not match input {}", ws.str(), x.shape().str()));
  const std::size_t n = x.shape()[0], ic = ws[0], oc = ws[1], k = ws[2];
  const std::size_t h = x.shape()[2], w = x.shape()[3];
  const std::size_t out_h = conv_transpose_output_extent(h, k, geometry.stride, geometry.padding);
  const std::size_t out_w = conv_transpose_output_extent(w, k, geometry.stride, geometry.padding);
  // Viewed from the output side this is an ordinary convolution out_h x out_w -> h x w.
  ConvDims d{oc, out_h, out_w, k, geometry.stride, geometry.padding, h, w};
  if (conv_output_extent(out_h, k, d.stride, d.pad) != h || conv_output_extent(out_w, k, d.stride, d.pad) != w)
    throw ShapeError("conv2d_transpose: inconsistent geometry");
  const std::size_t okk = oc * k * k, plane = h * w, out_size = oc * out_h * out_w;

  Tensor<T> out(Shape{n, oc, out_h, out_w});
  std::vector<T> cols(okk * plane);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(cols.begin(), cols.end(), T(0));
    simd::gemm_tn(okk, plane, ic, weight.value().ptr(), x.value().ptr() + i * ic * plane, cols.data());
    col2im(cols.data(), d, out.ptr() + i * out_size);
  }
  Var<T> y;
  if (!x.requires_grad() && !weight.requires_grad()) {
    y = x.tape().constant(std::move(out));
  } else {
    y = x.tape().record(std::move(out), [x, weight, d, n, ic, okk, plane, out_size](const Tensor<T>& g,
                                                                                    const Tensor<T>&, GradSink<T>& s) {
      std::vector<T> cols(okk * plane);
      Tensor<T>* gw = s.wants(weight) ? &s.slot(weight) : nullptr;
      Tensor<T>* gx = s.wants(x) ? &s.slot(x) : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        im2col(g.ptr() + i * out_size, d, cols.data());
        if (gx) simd::gemm_nn(ic, plane, okk, weight.value().ptr(), cols.data(), gx->ptr() + i * ic * plane);
        if (gw) simd::gemm_nt(ic, okk, plane, x.value().ptr() + i * ic * plane, cols.data(), gw->ptr());
      }
    });
  }
  return bias ? add_channel_bias(y, *bias) : y;
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, Mode mode, BatchNormOptions options) {
  const Shape& xs = x.shape();
  if (xs.rank() != 2 && xs.rank() != 4) throw ShapeError("batch_norm expects [N,C] or [N,C,H,W], got " + xs.str());
  const std::size_t n = xs[0], c = xs[1], inner = x.value().numel() / (n * c);
  const Shape cs{c};
  if (gamma.shape() != cs || beta.shape() != cs || running_mean.shape() != cs || running_var.shape() != cs)
    throw ShapeError(fmt::format("batch_norm: per-channel tensors must have shape {}", cs.str()));
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("batch_norm epsilon must be positive");
  if (mode == Mode::Train && n < 2) throw ShapeError("batch_norm in train mode needs a batch of at least 2");

  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  const T eps = static_cast<T>(options.epsilon);
  std::vector<T> mean(c), inv_std(c);
  if (mode == Mode::Train) {
    const T count = static_cast<T>(n * inner);
    for (std::size_t ch = 0; ch < c; ++ch) {
      T s = 0;
      for (std::size_t i = 0; i < n; ++i) s += simd::kernels<T>().sum(xv.ptr() + (i * c + ch) * inner, inner);
      const T m = s / count;
      T ss = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xv.ptr() + (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) ss += (p[j] - m) * (p[j] - m);
      }
      const T var = ss / count;
      mean[ch] = m;
      inv_std[ch] = T(1) / std::sqrt(var + eps);
      const T mom = static_cast<T>(options.momentum);
      running_mean[ch] = mom * running_mean[ch] + (T(1) - mom) * m;
      running_var[ch] = mom * running_var[ch] + (T(1) - mom) * var;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      inv_std[ch] = T(1) / std::sqrt(running_var[ch] + eps);
    }
  }

  Tensor<T> out(xs);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * inner;
      const T a = gv[ch] * inv_std[ch];
      const T b = bv[ch] - a * mean[ch];
      for (std::size_t j = 0; j < inner; ++j) out[base + j] = a * xv[base + j] + b;
    }
  if (!x.requires_grad() && !gamma.requires_grad() && !beta.requires_grad()) return x.tape().constant(std::move(out));

  return x.tape().record(std::move(out), [x, gamma, beta, mode, n, c, inner, mean, inv_std](
                                             const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    const auto& xv = x.value();
    const auto& gv = gamma.value();
    const T count = static_cast<T>(n * inner);
    for (std::size_t ch = 0; ch < c; ++ch) {
      T sum_g = 0, sum_gx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) {
          const T xhat = (xv[base + j] - mean[ch]) * inv_std[ch];
          sum_g += g[base + j];
          sum_gx += g[base + j] * xhat;
        }
      }
      if (s.wants(gamma)) s.slot(gamma)[ch] += sum_gx;
      if (s.wants(beta)) s.slot(beta)[ch] += sum_g;
      if (!s.wants(x)) continue;
      Tensor<T>& gx = s.slot(x);
      const T scale = gv[ch] * inv_std[ch];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) {
          if (mode == Mode::Train) {
            const T xhat = (xv[base + j] - mean[ch]) * inv_std[ch];
            gx[base + j] += scale * (g[base + j] - sum_g / count - xhat * sum_gx / count);
          } else {
            gx[base + j] += scale * g[base + j];
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, std::size_t window, std::size_t stride) {
  require_rank4(x.shape(), "max_pool2d");
  const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t oh = pool_output_extent(h, window, stride), ow = pool_output_extent(w, window, stride);
  Tensor<T> out(Shape{n, c, oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  const auto& xv = x.value();
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = xv.ptr() + p * h * w;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (i * stride) * w + j * stride;
        for (std::size_t di = 0; di < window; ++di)
          for (std::size_t dj = 0; dj < window; ++dj) {
            const std::size_t idx = (i * stride + di) * w + j * stride + dj;
            if (src[idx] > src[best]) best = idx;
          }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = src[best];
        argmax[o] = p * h * w + best;
      }
  }
  if (x.tape().tracking_branches()) {
    std::uint64_t hsh = 1469598103934665603ull;
    for (std::size_t a : argmax) hsh = (hsh ^ a) * 1099511628211ull;
    x.tape().note_branch(hsh);
  }
  if (!x.requires_grad()) return x.tape().constant(std::move(out));
  return x.tape().record(std::move(out),
                         [x, argmax = std::move(argmax)](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
                           Tensor<T>& gx = s.slot(x);
                           for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
                         });
}

template <typename T>
Var<T> zero_pad2d(const Var<T>& x, std::size_t pad) {
  require_rank4(x.shape(), "zero_pad2d");
  const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t ph = h + 2 * pad, pw = w + 2 * pad;
  Tensor<T> out(Shape{n, c, ph, pw});
  const auto& xv = x.value();
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t i = 0; i < h; ++i)
      std::copy_n(xv.ptr() + (p * h + i) * w, w, out.ptr() + (p * ph + i + pad) * pw + pad);
  if (!x.requires_grad()) return x.tape().constant(std::move(out));
  return x.tape().record(std::move(out), [x, n, c, h, w, pad, ph, pw](const Tensor<T>& g, const Tensor<T>&,
                                                                      GradSink<T>& s) {
    Tensor<T>& gx = s.slot(x);
    for (std::size_t p = 0; p < n * c; ++p)
      for (std::size_t i = 0; i < h; ++i)
        simd::kernels<T>().add(gx.ptr() + (p * h + i) * w, g.ptr() + (p * ph + i + pad) * pw + pad,
                               gx.ptr() + (p * h + i) * w, w);
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_rank4(x.shape(), "global_avg_pool");
  const std::size_t n = x.shape()[0], c = x.shape()[1], inner = x.shape()[2] * x.shape()[3];
  Tensor<T> out(Shape{n, c});
  for (std::size_t p = 0; p < n * c; ++p)
    out[p] = simd::kernels<T>().sum(x.value().ptr() + p * inner, inner) / static_cast<T>(inner);
  if (!x.requires_grad()) return x.tape().constant(std::move(out));
  return x.tape().record(std::move(out), [x, n, c, inner](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    Tensor<T>& gx = s.slot(x);
    for (std::size_t p = 0; p < n * c; ++p) {
      const T v = g[p] / static_cast<T>(inner);
      for (std::size_t j = 0; j < inner; ++j) gx[p * inner + j] += v;
    }
  });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, Mode mode, RngStream& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument(fmt::format("dropout rate {} outside [0, 1)", rate));
  if (mode == Mode::Eval || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask(x.shape());
  for (auto& m : mask.data()) m = rng.uniform() < rate ? T(0) : keep_scale;
  Var<T> m = x.tape().constant(std::move(mask));
  return mul(x, m);
}

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias) {
  Var<T> y = matmul(x, weight);
  return bias ? add_row_bias(y, *bias) : y;
}

template <typename T>
Var<T> activate(Activation kind, const Var<T>& x, double slope) {
  switch (kind) {
    case Activation::Relu:
      return relu(x);
    case Activation::LeakyRelu:
      return leaky_relu(x, static_cast<T>(slope));
    case Activation::Tanh:
      return tanh(x);
    case Activation::Sigmoid:
      return sigmoid(x);
    case Activation::Softmax:
      return softmax(x);
  }
  throw std::invalid_argument("unknown activation");
}

#define DRNET_INSTANTIATE(T)                                                                                  \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, ConvGeometry);           \
  template Var<T> conv2d_transpose(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, ConvGeometry); \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, Mode,       \
                             BatchNormOptions);                                                               \
  template Var<T> max_pool2d(const Var<T>&, std::size_t, std::size_t);                                        \
  template Var<T> zero_pad2d(const Var<T>&, std::size_t);                                                     \
  template Var<T> global_avg_pool(const Var<T>&);                                                             \
  template Var<T> dropout(const Var<T>&, double, Mode, RngStream&);                                           \
  template Var<T> dense(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);                          \
  template Var<T> activate(Activation, const Var<T>&, double);

DRNET_INSTANTIATE(float)
DRNET_INSTANTIATE(double)

#undef DRNET_INSTANTIATE

}  // namespace drnet
