#include "drnet/training.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "drnet/error.hpp"
#include "drnet/optim.hpp"

namespace drnet {

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (!(lr_factor > 0.0 && lr_factor <= 1.0)) throw ConfigError("train.lr_factor must be in (0, 1]");
  if (lr_step_epochs < 1) throw ConfigError("train.lr_step_epochs must be positive");
  if (patience < 0) throw ConfigError("train.patience must be non-negative");
  if (eval_batch_size < 1) throw ConfigError("eval batch size must be positive");
  augmentation.validate();
}

Tensor<float> batch_tensor(const LabeledSet& set, const std::vector<std::size_t>& indices) {
  std::vector<const NormalizedImage*> images;
  images.reserve(indices.size());
  for (std::size_t i : indices) images.push_back(&set.images.at(i));
  return images_to_tensor(images);
}

Tensor<float> onehot_tensor(const LabeledSet& set, const std::vector<std::size_t>& indices) {
  Tensor<float> t(Shape{indices.size(), kNumClasses});
  for (std::size_t r = 0; r < indices.size(); ++r)
    t[r * kNumClasses + static_cast<std::size_t>(set.labels.at(indices[r]))] = 1.0f;
  return t;
}

namespace {

std::vector<std::vector<std::size_t>> chunks(std::size_t n, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += size) {
    std::vector<std::size_t> c(std::min(size, n - start));
    std::iota(c.begin(), c.end(), start);
    out.push_back(std::move(c));
  }
  return out;
}

void require_set(const LabeledSet& set, const ClassifierConfig& config, const char* what) {
  if (set.images.size() != set.labels.size()) throw DataError(fmt::format("{}: images and labels differ in count", what));
  for (const auto& img : set.images)
    if (img.width != config.input_size || img.height != config.input_size)
      throw ShapeError(fmt::format("{}: image is {}x{}, classifier expects {}x{}", what, img.width, img.height,
                                   config.input_size, config.input_size));
}

}  // namespace

double evaluate_loss(const NetworkParams<float>& params, const ClassifierConfig& config, const LabeledSet& set,
                     std::size_t batch_size) {
  if (set.size() == 0) throw DataError("evaluate_loss: empty set");
  require_set(set, config, "evaluate_loss");
  NetworkParams<float> view = params;
  double total = 0.0;
  for (const auto& idx : chunks(set.size(), batch_size)) {
    Tape<float> tape;
    ForwardContext<float> ctx(tape, view, Mode::Eval, nullptr, false);
    const Var<float> probs = softmax(classifier_logits(ctx, config, tape.constant(batch_tensor(set, idx))));
    const Var<float> loss = categorical_cross_entropy(probs, tape.constant(onehot_tensor(set, idx)));
    total += static_cast<double>(loss.value().item()) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(set.size());
}

ConfusionMatrix evaluate(const NetworkParams<float>& params, const ClassifierConfig& config, const LabeledSet& set,
                         std::size_t batch_size) {
  if (set.size() == 0) throw DataError("evaluate: empty set");
  require_set(set, config, "evaluate");
  ConfusionMatrix cm;
  for (const auto& idx : chunks(set.size(), batch_size)) {
    const auto predicted = predict_classes(predict(params, config, batch_tensor(set, idx)));
    for (std::size_t r = 0; r < idx.size(); ++r) cm.add(set.labels[idx[r]], predicted[r]);
  }
  return cm;
}

TrainResult train_classifier(const ClassifierConfig& config, const TrainConfig& tc, const LabeledSet& train,
                             const LabeledSet& val) {
  config.validate();
  tc.validate();
  if (train.size() < 2) throw DataError("train_classifier: training set needs at least 2 images");
  if (val.size() == 0) throw DataError("train_classifier: validation set is empty");
  require_set(train, config, "training set");
  require_set(val, config, "validation set");

  const Architecture arch = classifier_architecture(config);
  NetworkParams<float> params = arch.init<float>(config.seed, InitScheme::HeNormal);
  Adam<float> opt(AdamConfig{tc.learning_rate});
  EarlyStopping stopper(tc.patience);
  TrainHistory history;

  std::vector<std::size_t> order(train.size());
  std::vector<NormalizedImage> augmented(train.size());
  for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = lr_schedule(tc.learning_rate, epoch, tc.lr_factor, tc.lr_step_epochs);
    opt.set_learning_rate(lr);

    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream shuffle(tc.seed, RngStream::mix({0x73687566ull, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    const LabeledSet* source = &train;
    LabeledSet epoch_set;
    if (tc.augment) {
      epoch_set.labels = train.labels;
      epoch_set.images.resize(train.size());
      parallel_for(train.size(), tc.threads, [&](std::size_t i) {
        RngStream rng = augment_stream(tc.seed, static_cast<std::uint64_t>(epoch), i);
        epoch_set.images[i] = augment(train.images[i], tc.augmentation, rng);
      });
      source = &epoch_set;
    }

    double loss_sum = 0.0;
    std::size_t seen = 0, step = 0;
    for (std::size_t start = 0; start + 1 < order.size(); start += tc.batch_size, ++step) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                         order.begin() + static_cast<long>(std::min(order.size(), start + tc.batch_size)));
      if (idx.size() < 2) break;
      Tape<float> tape;
      ForwardContext<float> ctx(tape, params, Mode::Train, nullptr, true);
      const Var<float> probs = softmax(arch.forward(ctx, tape.constant(batch_tensor(*source, idx))));
      const Var<float> loss = categorical_cross_entropy(probs, tape.constant(onehot_tensor(*source, idx)));
      const double value = loss.value().item();
      if (!std::isfinite(value))
        throw NumericError(fmt::format("non-finite training loss at epoch {}, step {}", epoch, step));
      opt.step(params, tape.backward(loss));
      loss_sum += value * static_cast<double>(idx.size());
      seen += idx.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    const double measured = evaluate_loss(params, config, val, tc.eval_batch_size);
    if (!std::isfinite(measured)) throw NumericError(fmt::format("non-finite validation loss at epoch {}", epoch));
    rec.val_loss = tc.val_loss_adjust ? tc.val_loss_adjust(epoch, measured) : measured;
    const ConfusionMatrix cm = evaluate(params, config, val, tc.eval_batch_size);
    rec.val_accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.epochs.push_back(rec);
    if (tc.on_epoch) tc.on_epoch(rec);
    if (stopper.update(rec.val_loss, params) == StopDecision::Stop) {
      history.stopped_early = true;
      break;
    }
  }
  history.best_epoch = stopper.best_epoch();
  history.best_val_loss = stopper.best_loss();
  return {stopper.best_params(), std::move(history)};
}

std::array<std::size_t, kNumClasses> synthetic_quota(const std::array<std::size_t, kNumClasses>& counts,
                                                     double target_fraction) {
  if (!(target_fraction >= 0.0 && target_fraction <= 1.0))
    throw ConfigError(fmt::format("synthetic target fraction must be in [0, 1], got {}", target_fraction));
  const std::size_t majority = *std::max_element(counts.begin(), counts.end());
  const auto target = static_cast<std::size_t>(std::ceil(target_fraction * static_cast<double>(majority)));
  std::array<std::size_t, kNumClasses> out{};
  for (std::size_t k = 0; k < kNumClasses; ++k)
    if (counts[k] != majority && counts[k] < target) out[k] = target - counts[k];
  return out;
}

void export_history(const std::filesystem::path& path, const TrainHistory& history) {
  if (history.epochs.empty()) throw DataError("export_history: history is empty");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,lr,seconds\n";
  for (const auto& e : history.epochs)
    out << fmt::format("{},{},{},{},{:.3f}\n", e.epoch, e.train_loss, e.val_loss, e.lr, e.seconds);
  if (!out) throw DataError("failed writing " + path.string());
}

TrainHistory read_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,val_loss,lr,seconds")
    throw DataError(path.string() + ": unexpected history header");
  TrainHistory h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(row, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(fmt::format("{}: bad value '{}'", path.string(), cell));
      }
    }
    if (values.size() != 5) throw DataError(fmt::format("{}: expected 5 columns in '{}'", path.string(), line));
    EpochRecord e;
    e.epoch = static_cast<int>(values[0]);
    e.train_loss = values[1];
    e.val_loss = values[2];
    e.lr = values[3];
    e.seconds = values[4];
    h.epochs.push_back(e);
  }
  if (h.epochs.empty()) throw DataError(path.string() + ": history has no rows");
  return h;
}

}  // namespace drnet
