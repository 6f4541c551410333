#pragma once

// Classifier training loop, evaluation and training-history export.

#include <array>
#include <filesystem>
#include <functional>
#include <vector>

#include "drnet/augment.hpp"
#include "drnet/classifier.hpp"
#include "drnet/batch.hpp"
#include "drnet/dataset.hpp"
#include "drnet/metrics.hpp"

namespace drnet {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  double val_accuracy = 0.0;  // not exported
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  int max_epochs = 50;
  double learning_rate = 0.001;
  double lr_factor = 0.1;
  int lr_step_epochs = 10;
  int patience = 15;
  bool augment = true;
  AugmentConfig augmentation{};
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t eval_batch_size = 64;
  /// Maps (epoch, measured validation loss) to the loss fed to early
  /// stopping and recorded in the history. Test hook; identity when empty.
  std::function<double(int, double)> val_loss_adjust;
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
};

struct TrainResult {
  NetworkParams<float> params;  // best-validation parameters
  TrainHistory history;
};

/// Mini-batch Adam on categorical cross-entropy with a step learning-rate
/// schedule, online augmentation (stream keyed by seed, epoch and image
/// index) and early stopping on validation loss. Each epoch visits the
/// training set in a seeded random order; a trailing batch of one image is
/// skipped because batch normalization needs two samples. Throws
/// NumericError naming the epoch and step on a non-finite loss.
TrainResult train_classifier(const ClassifierConfig& config, const TrainConfig& train_config, const LabeledSet& train,
                             const LabeledSet& val);

/// Mean cross-entropy in eval mode.
double evaluate_loss(const NetworkParams<float>& params, const ClassifierConfig& config, const LabeledSet& set,
                     std::size_t batch_size = 64);

/// Confusion matrix of predict_class over the set.
ConfusionMatrix evaluate(const NetworkParams<float>& params, const ClassifierConfig& config, const LabeledSet& set,
                         std::size_t batch_size = 64);

/// [n, 1, s, s] tensor of the chosen images.
Tensor<float> batch_tensor(const LabeledSet& set, const std::vector<std::size_t>& indices);
/// [n, 5] one-hot rows of the chosen labels.
Tensor<float> onehot_tensor(const LabeledSet& set, const std::vector<std::size_t>& indices);

/// Per-class number of synthetic images that lifts every minority class to
/// ceil(target_fraction * majority count); zero for the majority class.
std::array<std::size_t, kNumClasses> synthetic_quota(const std::array<std::size_t, kNumClasses>& train_counts,
                                                     double target_fraction = 0.5);

/// Columns epoch,train_loss,val_loss,lr,seconds. Throws DataError on an
/// empty history or I/O failure.
void export_history(const std::filesystem::path& path, const TrainHistory& history);
TrainHistory read_history(const std::filesystem::path& path);

}  // namespace drnet
