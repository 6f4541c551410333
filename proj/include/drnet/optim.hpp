#pragma once

#include <map>
#include <string>

#include "drnet/autodiff.hpp"
#include "drnet/network.hpp"

namespace drnet {

/// Probabilities are clamped to [kProbabilityClamp, 1 - kProbabilityClamp] before taking logs.
inline constexpr double kProbabilityClamp = 1e-7;

/// Mean over the batch of -sum_k y_k log p_k for [batch, classes] inputs.
template <typename T>
Var<T> categorical_cross_entropy(const Var<T>& probs, const Var<T>& onehot);

/// Mean over all elements of -[t log p + (1 - t) log(1 - p)].
template <typename T>
Var<T> binary_cross_entropy(const Var<T>& pred, const Var<T>& target);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moment tensors are created lazily per trainable parameter.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Updates every trainable parameter that has a gradient. Throws
  /// NumericError naming the parameter if any gradient entry is non-finite;
  /// in that case nothing is modified.
  void step(NetworkParams<T>& params, const Gradients<T>& grads);

  double learning_rate() const { return config_.learning_rate; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const AdamConfig& config() const { return config_; }
  long step_count() const { return t_; }
  const Tensor<T>& first_moment(const std::string& name) const { return first_.at(name); }
  const Tensor<T>& second_moment(const std::string& name) const { return second_.at(name); }

 private:
  AdamConfig config_;
  long t_ = 0;
  std::map<std::string, Tensor<T>> first_;
  std::map<std::string, Tensor<T>> second_;
};

/// initial * factor^floor(epoch / step_epochs), computed as a division by an
/// exact power so that e.g. 0.001 -> 0.0001 -> 1e-05 hold bit-for-bit.
double lr_schedule(double initial, int epoch, double factor = 0.1, int step_epochs = 10);

enum class StopDecision { Continue, Stop };

/// Patience-based early stopping on validation loss. Improvement means
/// strictly lower; the counter resets exactly then. Training stops once the
/// counter exceeds the patience.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience = 15);

  StopDecision update(double val_loss, const NetworkParams<float>& params);

  bool has_best() const { return best_epoch_ >= 0; }
  double best_loss() const { return best_loss_; }
  int best_epoch() const { return best_epoch_; }
  int epochs_since_improvement() const { return counter_; }
  int patience() const { return patience_; }
  const NetworkParams<float>& best_params() const { return best_params_; }

 private:
  int patience_;
  int epoch_ = -1;
  int best_epoch_ = -1;
  int counter_ = 0;
  double best_loss_ = 0.0;
  NetworkParams<float> best_params_;
};

}  // namespace drnet
