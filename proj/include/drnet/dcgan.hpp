#pragma once

// DCGAN for grayscale images: architectures, adversarial training, sampling
// and pixel-intensity distribution comparison.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "drnet/batch.hpp"
#include "drnet/network.hpp"
#include "drnet/optim.hpp"

namespace drnet {

struct GanConfig {
  std::size_t latent_dim = 100;
  std::size_t image_size = 128;
  std::size_t batch_size = 4;
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 3750;
  double learning_rate = 0.0002;
  double beta1 = 0.5;
  std::uint64_t seed = 0;
  /// Discriminator width of the first stage; doubles per stage.
  std::size_t base_channels = 32;
  double leaky_slope = 0.2;
  double dropout = 0.3;

  /// Throws ConfigError unless every count is positive and image_size is a power of two >= 32.
  void validate() const;
  /// Number of stride-2 stages between 8x8 and image_size.
  std::size_t stages() const;
};

/// latent -> dense 8*8*C -> BN -> relu -> transpose-conv stages halving the
/// channel count (BN + relu) -> final 1-channel transpose conv -> tanh.
/// At image_size 128: 256 -> 128 -> 64 -> 32 -> 1 channels.
Architecture generator_architecture(const GanConfig& config);
/// Stride-2 conv stages with base_channels * 2^i channels, each followed by
/// leaky relu and dropout, then flatten -> dense(1) -> sigmoid.
Architecture discriminator_architecture(const GanConfig& config);

NetworkParams<float> build_generator(const GanConfig& config);
NetworkParams<float> build_discriminator(const GanConfig& config);

/// [n, latent_dim] with entries uniform on [-1, 1].
Tensor<float> sample_latent(std::size_t n, const GanConfig& config, RngStream& rng);

struct GanModel {
  GanConfig config;
  NetworkParams<float> generator;
  NetworkParams<float> discriminator;
  Adam<float> generator_opt;
  Adam<float> discriminator_opt;
  long step = 0;

  /// Freshly initialised networks and optimizers.
  explicit GanModel(const GanConfig& config);
};

struct GanStepResult {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double real_score = 0.0;  // mean D(real) before the discriminator update
  double fake_score = 0.0;  // mean D(G(z)) during the generator update
};

/// One discriminator update on BCE(real -> 1, fake -> 0) with fakes detached,
/// then one generator update on BCE(D(G(z)) -> 1) with the discriminator
/// frozen. The discriminator half-step leaves every generator tensor,
/// including batch-norm running statistics, untouched. Throws NumericError on
/// a non-finite loss.
GanStepResult gan_train_step(GanModel& model, const Tensor<float>& real_batch, RngStream& rng);

struct GanEpochSummary {
  std::size_t epoch = 0;
  double d_loss_avg = 0.0;
  double g_loss_avg = 0.0;
};

struct GanHistory {
  std::vector<double> d_losses;
  std::vector<double> g_losses;
  std::vector<GanEpochSummary> epochs;
};

/// Called after each epoch; may write checkpoints or evaluate samples.
using GanEpochCallback = std::function<void(const GanEpochSummary&, const GanModel&)>;

/// Trains for config.epochs x config.steps_per_epoch steps on images of
/// image_size x image_size. Batches are drawn with replacement from a
/// stream keyed by (seed, epoch, step).
GanHistory train_gan(GanModel& model, const std::vector<NormalizedImage>& images,
                     const GanEpochCallback& on_epoch = {});

/// Generator and discriminator in one parameter set (prefixes "generator."
/// and "discriminator."), plus meta.* entries for the step counter, loss
/// averages and the architecture-defining sizes.
NetworkParams<float> gan_checkpoint(const GanModel& model, const GanEpochSummary& summary);
/// Restores networks from gan_checkpoint output; config sizes come from the meta entries.
GanModel gan_from_checkpoint(const NetworkParams<float>& params, GanConfig config = {});

/// n images from the generator in eval mode; deterministic in `seed`.
std::vector<NormalizedImage> generate_images(const NetworkParams<float>& generator, const GanConfig& config,
                                             std::size_t n, std::uint64_t seed);

/// Probability mass per bin over all samples of all images, bins equally
/// spaced on [-1, 1]. Throws DataError on empty input.
std::vector<double> intensity_distribution(const std::vector<NormalizedImage>& images, std::size_t bins = 64);

/// Jensen-Shannon divergence in bits, in [0, 1].
double distribution_divergence(const std::vector<double>& p, const std::vector<double>& q);

/// CSV with columns bin_left,bin_right,density_real,density_fake.
void write_histogram_csv(const std::filesystem::path& path, const std::vector<double>& real,
                         const std::vector<double>& fake);

}  // namespace drnet
