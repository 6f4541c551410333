#include "drnet/autodiff.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "drnet/error.hpp"
#include "drnet/simd.hpp"

namespace drnet {

template <typename T>
Tensor<T>& GradSink<T>::slot(const Var<T>& v) {
  Tensor<T>& g = grads_[v.id()];
  if (g.empty()) g = Tensor<T>(v.shape());
  return g;
}

template <typename T>
void GradSink<T>::accumulate(const Var<T>& v, const Tensor<T>& g) {
  if (!v.requires_grad()) return;
  Tensor<T>& dst = grads_[v.id()];
  if (dst.empty()) {
    dst = g.reshaped(v.shape());
    return;
  }
  simd::kernels<T>().add(dst.ptr(), g.ptr(), dst.ptr(), dst.numel());
}

template <typename T>
const Tensor<T>& Gradients<T>::of(const Var<T>& v) const {
  const Tensor<T>& g = by_node_.at(v.id());
  if (g.empty()) throw std::out_of_range("no gradient recorded for tape node (does it require grad?)");
  return g;
}

template <typename T>
const Tensor<T>& Gradients<T>::operator[](const std::string& name) const {
  auto it = named_.find(name);
  if (it == named_.end()) throw std::out_of_range("no gradient for parameter '" + name + "'");
  return it->second;
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), false, {}, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), true, {}, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(std::string name, Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), true, std::move(name), {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, BackwardFn fn) {
  nodes_.push_back(Node{std::move(value), true, {}, std::move(fn)});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
void Tape<T>::note_branch(std::uint64_t bits) {
  branch_signature_ = RngStream::mix({branch_signature_, bits});
}

template <typename T>
Gradients<T> Tape<T>::backward(const Var<T>& loss) {
  if (loss.value().numel() != 1)
    throw ShapeError("backward needs a scalar loss, got shape " + loss.shape().str());
  std::vector<Tensor<T>> grads(nodes_.size());
  if (nodes_[loss.id()].requires_grad) grads[loss.id()] = Tensor<T>(loss.shape(), T(1));
  GradSink<T> sink(grads);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || grads[i].empty()) continue;
    node.backward(grads[i], node.value, sink);
  }
  Gradients<T> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].requires_grad && grads[i].empty()) grads[i] = Tensor<T>(nodes_[i].value.shape());
    if (!nodes_[i].name.empty()) out.named_.emplace(nodes_[i].name, grads[i]);
  }
  out.by_node_ = std::move(grads);
  return out;
}

namespace {

template <typename T>
bool needs_grad(const Var<T>& a) {
  return a.requires_grad();
}

template <typename T>
bool needs_grad(const Var<T>& a, const Var<T>& b) {
  return a.requires_grad() || b.requires_grad();
}

template <typename T>
void same_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands recorded on different tapes");
}

// Folds a boolean mask into the tape's branch signature.
template <typename T, typename Pred>
void note_mask(Tape<T>& tape, const Tensor<T>& x, Pred pred) {
  if (!tape.tracking_branches()) return;
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < x.numel(); ++i) h = (h ^ (pred(x[i]) ? 1u : 0u)) * 1099511628211ull;
  tape.note_branch(h);
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b);
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  simd::kernels<T>().add(a.value().ptr(), b.value().ptr(), out.ptr(), out.numel());
  if (!needs_grad(a, b)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a, b](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    s.accumulate(a, g);
    s.accumulate(b, g);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b);
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  if (!needs_grad(a, b)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a, b](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    s.accumulate(a, g);
    if (s.wants(b)) {
      Tensor<T> neg(g.shape());
      simd::kernels<T>().scale(T(-1), g.ptr(), neg.ptr(), g.numel());
      s.accumulate(b, neg);
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b);
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  simd::kernels<T>().mul(a.value().ptr(), b.value().ptr(), out.ptr(), out.numel());
  if (!needs_grad(a, b)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a, b](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    const auto& k = simd::kernels<T>();
    if (s.wants(a)) {
      Tensor<T> ga(g.shape());
      k.mul(g.ptr(), b.value().ptr(), ga.ptr(), g.numel());
      s.accumulate(a, ga);
    }
    if (s.wants(b)) {
      Tensor<T> gb(g.shape());
      k.mul(g.ptr(), a.value().ptr(), gb.ptr(), g.numel());
      s.accumulate(b, gb);
    }
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + c;
  if (!needs_grad(a)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out),
                         [a](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) { s.accumulate(a, g); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T c) {
  Tensor<T> out(a.shape());
  simd::kernels<T>().scale(c, a.value().ptr(), out.ptr(), out.numel());
  if (!needs_grad(a)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a, c](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    Tensor<T> ga(g.shape());
    simd::kernels<T>().scale(c, g.ptr(), ga.ptr(), g.numel());
    s.accumulate(a, ga);
  });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  Tensor<T> out(a.shape());
  simd::kernels<T>().mul(a.value().ptr(), a.value().ptr(), out.ptr(), out.numel());
  if (!needs_grad(a)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    Tensor<T> ga(g.shape());
    const auto& av = a.value();
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] = T(2) * av[i] * g[i];
    s.accumulate(a, ga);
  });
}

template <typename T>
Var<T> add_row_bias(const Var<T>& x, const Var<T>& bias) {
  same_tape(x, bias);
  if (x.shape().rank() != 2 || bias.shape() != Shape{x.shape()[1]})
    throw ShapeError(fmt::format("add_row_bias: bias {} does not match rows of {}", bias.shape().str(), x.shape().str()));
  const std::size_t n = x.shape()[0], f = x.shape()[1];
  Tensor<T> out(x.shape());
  const auto& k = simd::kernels<T>();
  for (std::size_t i = 0; i < n; ++i) k.add(x.value().ptr() + i * f, bias.value().ptr(), out.ptr() + i * f, f);
  if (!needs_grad(x, bias)) return x.tape().constant(std::move(out));
  return x.tape().record(std::move(out), [x, bias, n, f](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    s.accumulate(x, g);
    if (s.wants(bias)) {
      Tensor<T>& gb = s.slot(bias);
      for (std::size_t i = 0; i < n; ++i) simd::kernels<T>().add(gb.ptr(), g.ptr() + i * f, gb.ptr(), f);
    }
  });
}

template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& bias) {
  same_tape(x, bias);
  if (x.shape().rank() < 2 || bias.shape() != Shape{x.shape()[1]})
    throw ShapeError(fmt::format("add_channel_bias: bias {} does not match channels of {}", bias.shape().str(), x.shape().str()));
  const std::size_t n = x.shape()[0], c = x.shape()[1], inner = x.value().numel() / (n * c);
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < n * c; ++i) {
    const T b = bv[i % c];
    for (std::size_t j = 0; j < inner; ++j) out[i * inner + j] = xv[i * inner + j] + b;
  }
  if (!needs_grad(x, bias)) return x.tape().constant(std::move(out));
  return x.tape().record(std::move(out), [x, bias, n, c, inner](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    s.accumulate(x, g);
    if (s.wants(bias)) {
      Tensor<T>& gb = s.slot(bias);
      for (std::size_t i = 0; i < n * c; ++i) gb[i % c] += simd::kernels<T>().sum(g.ptr() + i * inner, inner);
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b);
  if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeError(fmt::format("matmul: inner dimensions differ, {} x {}", a.shape().str(), b.shape().str()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> out(Shape{m, n});
  simd::gemm_nn(m, n, k, a.value().ptr(), b.value().ptr(), out.ptr());
  if (!needs_grad(a, b)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a, b, m, k, n](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    if (s.wants(a)) simd::gemm_nt(m, k, n, g.ptr(), b.value().ptr(), s.slot(a).ptr());  // dA = dC B^T
    if (s.wants(b)) simd::gemm_tn(k, n, m, a.value().ptr(), g.ptr(), s.slot(b).ptr());  // dB = A^T dC
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  Tensor<T> out = Tensor<T>::scalar(simd::kernels<T>().sum(a.value().ptr(), a.value().numel()));
  if (!needs_grad(a)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    s.accumulate(a, Tensor<T>(a.shape(), g[0]));
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return mul_scalar(sum(a), T(1) / static_cast<T>(a.value().numel()));
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  if (!needs_grad(a)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out),
                         [a](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) { s.accumulate(a, g); });
}

template <typename T>
Var<T> flatten(const Var<T>& a) {
  const std::size_t n = a.shape()[0];
  return reshape(a, Shape{n, a.value().numel() / n});
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out(a.shape());
  simd::kernels<T>().relu(a.value().ptr(), out.ptr(), out.numel());
  note_mask(a.tape(), a.value(), [](T v) { return v > T(0); });
  if (!needs_grad(a)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    Tensor<T>& ga = s.slot(a);
    const auto& av = a.value();
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (av[i] > T(0)) ga[i] += g[i];
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] > T(0) ? av[i] : slope * av[i];
  note_mask(a.tape(), av, [](T v) { return v > T(0); });
  if (!needs_grad(a)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a, slope](const Tensor<T>& g, const Tensor<T>&, GradSink<T>& s) {
    Tensor<T>& ga = s.slot(a);
    const auto& av = a.value();
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += av[i] > T(0) ? g[i] : slope * g[i];
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  // Saturated values are pulled one ulp inside (-1, 1).
  const T edge = std::nextafter(T(1), T(0));
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(std::tanh(av[i]), -edge, edge);
  if (!needs_grad(a)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a](const Tensor<T>& g, const Tensor<T>& y, GradSink<T>& s) {
    Tensor<T>& ga = s.slot(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    // Split by sign so exp never overflows.
    const T v = av[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
    out[i] = std::clamp(out[i], std::numeric_limits<T>::min(), std::nextafter(T(1), T(0)));
  }
  if (!needs_grad(a)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a](const Tensor<T>& g, const Tensor<T>& y, GradSink<T>& s) {
    Tensor<T>& ga = s.slot(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var<T> softmax(const Var<T>& a) {
  if (a.shape().rank() != 2) throw ShapeError("softmax expects a [batch, classes] tensor, got " + a.shape().str());
  const std::size_t n = a.shape()[0], c = a.shape()[1];
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = av.ptr() + i * c;
    T* orow = out.ptr() + i * c;
    const T mx = *std::max_element(row, row + c);
    T total = 0;
    for (std::size_t j = 0; j < c; ++j) total += (orow[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) orow[j] /= total;
  }
  if (!needs_grad(a)) return a.tape().constant(std::move(out));
  return a.tape().record(std::move(out), [a, n, c](const Tensor<T>& g, const Tensor<T>& y, GradSink<T>& s) {
    Tensor<T>& ga = s.slot(a);
    for (std::size_t i = 0; i < n; ++i) {
      const T* yr = y.ptr() + i * c;
      const T* gr = g.ptr() + i * c;
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += yr[j] * (gr[j] - dot);
    }
  });
}

#define DRNET_INSTANTIATE(T)                                           \
  template class GradSink<T>;                                          \
  template class Gradients<T>;                                         \
  template class Tape<T>;                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                   \
  template Var<T> sub(const Var<T>&, const Var<T>&);                   \
  template Var<T> mul(const Var<T>&, const Var<T>&);                   \
  template Var<T> add_scalar(const Var<T>&, T);                        \
  template Var<T> mul_scalar(const Var<T>&, T);                        \
  template Var<T> square(const Var<T>&);                               \
  template Var<T> add_row_bias(const Var<T>&, const Var<T>&);          \
  template Var<T> add_channel_bias(const Var<T>&, const Var<T>&);      \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                \
  template Var<T> sum(const Var<T>&);                                  \
  template Var<T> mean(const Var<T>&);                                 \
  template Var<T> reshape(const Var<T>&, Shape);                       \
  template Var<T> flatten(const Var<T>&);                              \
  template Var<T> relu(const Var<T>&);                                 \
  template Var<T> leaky_relu(const Var<T>&, T);                        \
  template Var<T> tanh(const Var<T>&);                                 \
  template Var<T> sigmoid(const Var<T>&);                              \
  template Var<T> softmax(const Var<T>&);

DRNET_INSTANTIATE(float)
DRNET_INSTANTIATE(double)

#undef DRNET_INSTANTIATE

}  // namespace drnet
