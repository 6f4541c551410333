#include "drnet/dcgan.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>

#include "drnet/error.hpp"

namespace drnet {

void GanConfig::validate() const {
  if (latent_dim == 0 || batch_size == 0 || epochs == 0 || steps_per_epoch == 0 || base_channels == 0)
    throw ConfigError("gan: latent_dim, batch_size, epochs, steps_per_epoch and base_channels must be positive");
  if (image_size < 32 || (image_size & (image_size - 1)) != 0)
    throw ConfigError(fmt::format("gan.image_size must be a power of two >= 32, got {}", image_size));
  if (!(learning_rate > 0.0)) throw ConfigError("gan.learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("gan.beta1 must be in [0, 1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("gan.dropout must be in [0, 1)");
}

std::size_t GanConfig::stages() const {
  std::size_t n = 0;
  for (std::size_t s = image_size; s > 8; s /= 2) ++n;
  return n;
}

Architecture generator_architecture(const GanConfig& config) {
  config.validate();
  const std::size_t n = config.stages();
  std::size_t channels = config.base_channels << (n - 1);
  std::vector<LayerSpec> layers{
      {"project", DenseLayer{config.latent_dim, 8 * 8 * channels}},
      {"project_reshape", ReshapeLayer{{channels, 8, 8}}},
      {"project_bn", BatchNormLayer{channels}},
      {"project_relu", ActivationLayer{Activation::Relu}},
  };
  for (std::size_t i = 0; i < n; ++i) {
    const bool last = i + 1 == n;
    const std::size_t out = last ? 1 : channels / 2;
    const std::string name = fmt::format("up{}", i);
    layers.push_back({name, ConvTransposeLayer{channels, out, 4, 2, 1}});
    if (last) {
      layers.push_back({name + "_tanh", ActivationLayer{Activation::Tanh}});
    } else {
      layers.push_back({name + "_bn", BatchNormLayer{out}});
      layers.push_back({name + "_relu", ActivationLayer{Activation::Relu}});
    }
    channels = out;
  }
  return Architecture(std::move(layers), Shape{config.latent_dim});
}

Architecture discriminator_architecture(const GanConfig& config) {
  config.validate();
  const std::size_t n = config.stages();
  std::vector<LayerSpec> layers;
  std::size_t in = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t out = config.base_channels << i;
    const std::string name = fmt::format("down{}", i);
    layers.push_back({name, ConvLayer{in, out, 4, 2, 1}});
    layers.push_back({name + "_leaky", ActivationLayer{Activation::LeakyRelu, config.leaky_slope}});
    layers.push_back({name + "_dropout", DropoutLayer{config.dropout}});
    in = out;
  }
  layers.push_back({"flatten", FlattenLayer{}});
  layers.push_back({"head", DenseLayer{in * 8 * 8, 1}});
  layers.push_back({"head_sigmoid", ActivationLayer{Activation::Sigmoid}});
  return Architecture(std::move(layers), Shape{1, config.image_size, config.image_size});
}

NetworkParams<float> build_generator(const GanConfig& config) {
  return generator_architecture(config).init<float>(RngStream::mix({config.seed, 0x67656eull}), InitScheme::Dcgan);
}

NetworkParams<float> build_discriminator(const GanConfig& config) {
  return discriminator_architecture(config).init<float>(RngStream::mix({config.seed, 0x646973ull}), InitScheme::Dcgan);
}

Tensor<float> sample_latent(std::size_t n, const GanConfig& config, RngStream& rng) {
  if (n == 0) throw std::invalid_argument("sample_latent: n must be at least 1");
  Tensor<float> z(Shape{n, config.latent_dim});
  for (float& v : z.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return z;
}

namespace {

AdamConfig gan_adam(const GanConfig& c) { return AdamConfig{c.learning_rate, c.beta1, 0.999, 1e-8}; }

double mean_of(const Tensor<float>& t) { return static_cast<double>(t.sum()) / static_cast<double>(t.numel()); }

void require_finite(double v, const char* what, long step) {
  if (!std::isfinite(v)) throw NumericError(fmt::format("gan: non-finite {} at step {}", what, step));
}

}  // namespace

GanModel::GanModel(const GanConfig& cfg)
    : config(cfg),
      generator(build_generator(cfg)),
      discriminator(build_discriminator(cfg)),
      generator_opt(gan_adam(cfg)),
      discriminator_opt(gan_adam(cfg)) {}

GanStepResult gan_train_step(GanModel& model, const Tensor<float>& real_batch, RngStream& rng) {
  const GanConfig& cfg = model.config;
  const Architecture gen_arch = generator_architecture(cfg);
  const Architecture disc_arch = discriminator_architecture(cfg);
  const std::size_t n = real_batch.shape()[0];
  if (real_batch.shape() != disc_arch.input_shape(n))
    throw ShapeError(fmt::format("gan: real batch {} does not match {}", real_batch.shape().str(),
                                 disc_arch.input_shape(n).str()));
  GanStepResult result;

  {
    // The generator runs in train mode (batch statistics) but must not move
    // its running statistics during the discriminator half-step.
    NetworkParams<float> frozen_gen = model.generator;
    Tape<float> tape;
    RngStream drop = rng.derive(1);
    ForwardContext<float> gctx(tape, frozen_gen, Mode::Train, nullptr, false);
    const Var<float> fake = gen_arch.forward(gctx, tape.constant(sample_latent(n, cfg, rng)));
    ForwardContext<float> dctx(tape, model.discriminator, Mode::Train, &drop, true);
    const Var<float> real_score = disc_arch.forward(dctx, tape.constant(real_batch));
    const Var<float> fake_score = disc_arch.forward(dctx, detach(fake));
    const Tensor<float> ones(real_score.shape(), 1.0f), zeros(fake_score.shape(), 0.0f);
    const Var<float> loss = mul_scalar(binary_cross_entropy(real_score, tape.constant(ones)) +
                                           binary_cross_entropy(fake_score, tape.constant(zeros)),
                                       0.5f);
    result.d_loss = loss.value().item();
    result.real_score = mean_of(real_score.value());
    require_finite(result.d_loss, "discriminator loss", model.step);
    model.discriminator_opt.step(model.discriminator, tape.backward(loss));
  }
  {
    Tape<float> tape;
    RngStream drop = rng.derive(2);
    ForwardContext<float> gctx(tape, model.generator, Mode::Train, nullptr, true);
    const Var<float> fake = gen_arch.forward(gctx, tape.constant(sample_latent(n, cfg, rng)));
    ForwardContext<float> dctx(tape, model.discriminator, Mode::Train, &drop, false);
    const Var<float> score = disc_arch.forward(dctx, fake);
    const Var<float> loss = binary_cross_entropy(score, tape.constant(Tensor<float>(score.shape(), 1.0f)));
    result.g_loss = loss.value().item();
    result.fake_score = mean_of(score.value());
    require_finite(result.g_loss, "generator loss", model.step);
    model.generator_opt.step(model.generator, tape.backward(loss));
  }
  ++model.step;
  return result;
}

GanHistory train_gan(GanModel& model, const std::vector<NormalizedImage>& images, const GanEpochCallback& on_epoch) {
  const GanConfig& cfg = model.config;
  cfg.validate();
  if (images.empty()) throw DataError("train_gan: no training images");
  for (const auto& img : images)
    if (img.width != cfg.image_size || img.height != cfg.image_size)
      throw DataError(fmt::format("train_gan: expected {0}x{0} images, got {1}x{2}", cfg.image_size, img.width,
                                  img.height));
  GanHistory history;
  std::vector<const NormalizedImage*> batch(cfg.batch_size);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double d_sum = 0.0, g_sum = 0.0;
    for (std::size_t s = 0; s < cfg.steps_per_epoch; ++s) {
      RngStream rng(cfg.seed, RngStream::mix({0x6761ull, epoch, s}));
      for (auto& p : batch) p = &images[rng.below(images.size())];
      const GanStepResult r = gan_train_step(model, images_to_tensor(batch), rng);
      history.d_losses.push_back(r.d_loss);
      history.g_losses.push_back(r.g_loss);
      d_sum += r.d_loss;
      g_sum += r.g_loss;
    }
    const double steps = static_cast<double>(cfg.steps_per_epoch);
    GanEpochSummary summary{epoch, d_sum / steps, g_sum / steps};
    history.epochs.push_back(summary);
    if (on_epoch) on_epoch(summary, model);
  }
  return history;
}

namespace {

const std::string kGenPrefix = "generator.";
const std::string kDiscPrefix = "discriminator.";

Tensor<float> meta_value(double v) { return Tensor<float>(Shape{1}, static_cast<float>(v)); }

}  // namespace

NetworkParams<float> gan_checkpoint(const GanModel& model, const GanEpochSummary& summary) {
  NetworkParams<float> out;
  for (const auto& [name, t] : model.generator) out.add(kGenPrefix + name, t);
  for (const auto& [name, t] : model.discriminator) out.add(kDiscPrefix + name, t);
  out.add("meta.step", meta_value(static_cast<double>(model.step)));
  out.add("meta.epoch", meta_value(static_cast<double>(summary.epoch)));
  out.add("meta.d_loss_avg", meta_value(summary.d_loss_avg));
  out.add("meta.g_loss_avg", meta_value(summary.g_loss_avg));
  out.add("meta.image_size", meta_value(static_cast<double>(model.config.image_size)));
  out.add("meta.latent_dim", meta_value(static_cast<double>(model.config.latent_dim)));
  out.add("meta.base_channels", meta_value(static_cast<double>(model.config.base_channels)));
  return out;
}

GanModel gan_from_checkpoint(const NetworkParams<float>& params, GanConfig config) {
  auto size_of = [&](const std::string& key) -> std::size_t {
    if (!params.contains(key)) throw DataError("gan checkpoint lacks " + key);
    return static_cast<std::size_t>(std::lround(params.at(key).data()[0]));
  };
  config.image_size = size_of("meta.image_size");
  config.latent_dim = size_of("meta.latent_dim");
  config.base_channels = size_of("meta.base_channels");
  GanModel model(config);
  for (auto* part : {&model.generator, &model.discriminator}) {
    const std::string& prefix = part == &model.generator ? kGenPrefix : kDiscPrefix;
    for (const auto& [name, t] : NetworkParams<float>(*part)) {
      const std::string key = prefix + name;
      if (!params.contains(key)) throw DataError("gan checkpoint lacks " + key);
      if (params.at(key).shape() != t.shape())
        throw DataError(fmt::format("gan checkpoint tensor {} has shape {}, expected {}", key,
                                    params.at(key).shape().str(), t.shape().str()));
      part->set(name, params.at(key));
    }
  }
  model.step = static_cast<long>(size_of("meta.step"));
  return model;
}

std::vector<NormalizedImage> generate_images(const NetworkParams<float>& generator, const GanConfig& config,
                                             std::size_t n, std::uint64_t seed) {
  std::vector<NormalizedImage> out;
  if (n == 0) return out;
  const Architecture arch = generator_architecture(config);
  NetworkParams<float> params = generator;
  RngStream rng(seed, 0x73616d70ull);
  constexpr std::size_t kChunk = 16;
  for (std::size_t done = 0; done < n; done += kChunk) {
    const std::size_t m = std::min(kChunk, n - done);
    Tape<float> tape;
    ForwardContext<float> ctx(tape, params, Mode::Eval, nullptr, false);
    const Var<float> images = arch.forward(ctx, tape.constant(sample_latent(m, config, rng)));
    for (auto& img : tensor_to_images(images.value())) out.push_back(std::move(img));
  }
  return out;
}

std::vector<double> intensity_distribution(const std::vector<NormalizedImage>& images, std::size_t bins) {
  if (images.empty()) throw DataError("intensity_distribution: no images");
  if (bins == 0) throw std::invalid_argument("intensity_distribution: bins must be positive");
  std::vector<double> counts(bins, 0.0);
  double total = 0.0;
  for (const auto& img : images)
    for (float v : img.data) {
      const double pos = (std::clamp(static_cast<double>(v), -1.0, 1.0) + 1.0) / 2.0 * static_cast<double>(bins);
      counts[std::min(bins - 1, static_cast<std::size_t>(pos))] += 1.0;
      total += 1.0;
    }
  if (total == 0.0) throw DataError("intensity_distribution: images have no samples");
  for (double& c : counts) c /= total;
  return counts;
}

double distribution_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty())
    throw std::invalid_argument(fmt::format("distribution_divergence: bin counts {} and {} differ", p.size(), q.size()));
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return std::clamp(js, 0.0, 1.0);
}

void write_histogram_csv(const std::filesystem::path& path, const std::vector<double>& real,
                         const std::vector<double>& fake) {
  if (real.size() != fake.size()) throw std::invalid_argument("write_histogram_csv: bin counts differ");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "bin_left,bin_right,density_real,density_fake\n";
  const double width = 2.0 / static_cast<double>(real.size());
  for (std::size_t i = 0; i < real.size(); ++i)
    out << fmt::format("{:.6f},{:.6f},{:.9g},{:.9g}\n", -1.0 + width * i, -1.0 + width * (i + 1), real[i], fake[i]);
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace drnet
