#include "drnet/optim.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "drnet/error.hpp"

namespace drnet {

template <typename T>
Var<T> categorical_cross_entropy(const Var<T>& probs, const Var<T>& onehot) {
  require_same_shape(probs.shape(), onehot.shape(), "categorical_cross_entropy");
  if (probs.shape().rank() != 2) throw ShapeError("categorical_cross_entropy expects [batch, classes], got " + probs.shape().str());
  const std::size_t n = probs.shape()[0];
  const T lo = static_cast<T>(kProbabilityClamp), hi = T(1) - lo;
  const auto& p = probs.value();
  const auto& y = onehot.value();
  double total = 0.0;
  std::uint64_t clamp_bits = 1469598103934665603ull;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const bool clamped = p[i] < lo || p[i] > hi;
    clamp_bits = (clamp_bits ^ (clamped ? 1u : 0u)) * 1099511628211ull;
    if (y[i] != T(0)) total -= static_cast<double>(y[i]) * std::log(static_cast<double>(std::clamp(p[i], lo, hi)));
  }
  if (probs.tape().tracking_branches()) probs.tape().note_branch(clamp_bits);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
  if (!probs.requires_grad()) return probs.tape().constant(std::move(out));
  return probs.tape().record(std::move(out), [probs, onehot, n, lo, hi](const Tensor<T>& g, const Tensor<T>&,
                                                                        GradSink<T>& s) {
    Tensor<T>& gp = s.slot(probs);
    const auto& p = probs.value();
    const auto& y = onehot.value();
    const T scale = g[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < p.numel(); ++i)
      if (p[i] >= lo && p[i] <= hi && y[i] != T(0)) gp[i] -= scale * y[i] / p[i];
  });
}

template <typename T>
Var<T> binary_cross_entropy(const Var<T>& pred, const Var<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "binary_cross_entropy");
  const std::size_t n = pred.value().numel();
  const T lo = static_cast<T>(kProbabilityClamp), hi = T(1) - lo;
  const auto& p = pred.value();
  const auto& t = target.value();
  double total = 0.0;
  std::uint64_t clamp_bits = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    const double pc = static_cast<double>(std::clamp(p[i], lo, hi));
    clamp_bits = (clamp_bits ^ ((p[i] < lo || p[i] > hi) ? 1u : 0u)) * 1099511628211ull;
    total -= static_cast<double>(t[i]) * std::log(pc) + (1.0 - static_cast<double>(t[i])) * std::log(1.0 - pc);
  }
  if (pred.tape().tracking_branches()) pred.tape().note_branch(clamp_bits);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
  if (!pred.requires_grad()) return pred.tape().constant(std::move(out));
  return pred.tape().record(std::move(out), [pred, target, n, lo, hi](const Tensor<T>& g, const Tensor<T>&,
                                                                      GradSink<T>& s) {
    Tensor<T>& gp = s.slot(pred);
    const auto& p = pred.value();
    const auto& t = target.value();
    const T scale = g[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] < lo || p[i] > hi) continue;
      gp[i] += scale * (-t[i] / p[i] + (T(1) - t[i]) / (T(1) - p[i]));
    }
  });
}

template <typename T>
void Adam<T>::step(NetworkParams<T>& params, const Gradients<T>& grads) {
  for (const auto& [name, g] : grads.named()) {
    if (!params.contains(name) || !NetworkParams<T>::is_trainable(name)) continue;
    if (g.shape() != params.at(name).shape())
      throw ShapeError(fmt::format("gradient for '{}' has shape {}, parameter {}", name, g.shape().str(),
                                   params.at(name).shape().str()));
    for (T v : g.data())
      if (!std::isfinite(v)) throw NumericError("non-finite gradient for parameter '" + name + "'");
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (const auto& [name, g] : grads.named()) {
    if (!params.contains(name) || !NetworkParams<T>::is_trainable(name)) continue;
    Tensor<T>& theta = params.at(name);
    auto [mit, m_new] = first_.try_emplace(name, theta.shape());
    auto [vit, v_new] = second_.try_emplace(name, theta.shape());
    Tensor<T>& m = mit->second;
    Tensor<T>& v = vit->second;
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon));
    }
  }
}

double lr_schedule(double initial, int epoch, double factor, int step_epochs) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: epoch must be non-negative");
  if (step_epochs <= 0 || !(factor > 0.0)) throw std::invalid_argument("lr_schedule: invalid decay parameters");
  const int k = epoch / step_epochs;
  return initial / std::pow(1.0 / factor, k);
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 0) throw std::invalid_argument("early stopping patience must be non-negative");
}

StopDecision EarlyStopping::update(double val_loss, const NetworkParams<float>& params) {
  if (!std::isfinite(val_loss)) throw NumericError(fmt::format("non-finite validation loss at epoch {}", epoch_ + 1));
  ++epoch_;
  if (!has_best() || val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    best_params_ = params;
    counter_ = 0;
    return StopDecision::Continue;
  }
  ++counter_;
  return counter_ > patience_ ? StopDecision::Stop : StopDecision::Continue;
}

template Var<float> categorical_cross_entropy(const Var<float>&, const Var<float>&);
template Var<double> categorical_cross_entropy(const Var<double>&, const Var<double>&);
template Var<float> binary_cross_entropy(const Var<float>&, const Var<float>&);
template Var<double> binary_cross_entropy(const Var<double>&, const Var<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace drnet
