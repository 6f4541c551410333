#include <doctest.h>

#include <cmath>

#include "drnet/dcgan.hpp"
#include "drnet/error.hpp"
#include "drnet/synthetic.hpp"

using namespace drnet;

namespace {

GanConfig small_config() {
  GanConfig c;
  c.image_size = 32;
  c.batch_size = 4;
  c.base_channels = 8;
  c.latent_dim = 16;
  c.seed = 5;
  return c;
}

Tensor<float> batch_of(const std::vector<NormalizedImage>& imgs) {
  std::vector<const NormalizedImage*> ptrs;
  for (const auto& i : imgs) ptrs.push_back(&i);
  return images_to_tensor(ptrs);
}

Tensor<float> discriminate(NetworkParams<float> d, const GanConfig& cfg, const Tensor<float>& x) {
  Tape<float> t;
  ForwardContext<float> ctx(t, d, Mode::Eval);
  return discriminator_architecture(cfg).forward(ctx, t.constant(x)).value();
}

// JS divergence in bits from the definition.
double js_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  double js = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) js += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0) js += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return js;
}

}  // namespace

TEST_SUITE("dcgan") {
  TEST_CASE("generator shapes at the default size") {
    const GanConfig cfg;
    const auto arch = generator_architecture(cfg);
    const auto shapes = arch.layer_shapes(4);
    std::vector<std::size_t> extents;
    for (const auto& s : shapes)
      if (s.rank() == 4 && (extents.empty() || extents.back() != s[2])) extents.push_back(s[2]);
    CHECK(extents == std::vector<std::size_t>{8, 16, 32, 64, 128});
    CHECK(arch.output_shape(4) == Shape{4, 1, 128, 128});
    std::vector<std::size_t> channels;
    for (const auto& l : arch.layers())
      if (auto* c = std::get_if<ConvTransposeLayer>(&l.kind)) channels.push_back(c->out_channels);
    CHECK(channels == std::vector<std::size_t>{128, 64, 32, 1});
    const auto params = build_generator(cfg);
    CHECK(params.at("project.weight").shape() == Shape{100, 8 * 8 * 256});
  }

  TEST_CASE("discriminator shapes at the default size") {
    const GanConfig cfg;
    const auto arch = discriminator_architecture(cfg);
    std::vector<std::size_t> extents{128};
    std::vector<std::size_t> channels;
    for (const auto& s : arch.layer_shapes(4))
      if (s.rank() == 4 && s[2] != extents.back()) {
        extents.push_back(s[2]);
        channels.push_back(s[1]);
      }
    CHECK(extents == std::vector<std::size_t>{128, 64, 32, 16, 8});
    CHECK(channels == std::vector<std::size_t>{32, 64, 128, 256});
    CHECK(arch.output_shape(4) == Shape{4, 1});
  }

  TEST_CASE("generator and discriminator output ranges") {
    const auto cfg = small_config();
    const auto g = build_generator(cfg);
    RngStream rng(1);
    const auto imgs = generate_images(g, cfg, 6, 9);
    REQUIRE(imgs.size() == 6);
    for (const auto& img : imgs) {
      CHECK(img.width == 32);
      for (float v : img.data) CHECK((v > -1.0f && v < 1.0f));
    }
    const auto d = build_discriminator(cfg);
    const auto x = Tensor<float>::uniform(Shape{4, 1, 32, 32}, rng, -1, 1);
    const auto scores = discriminate(d, cfg, x);
    for (float v : scores.data()) CHECK((v > 0.0f && v < 1.0f));

    auto zero = d;
    for (const auto& [name, t] : d) zero.set(name, Tensor<float>(t.shape(), 0.0f));
    const auto half = discriminate(zero, cfg, x);
    for (float v : half.data()) CHECK(v == 0.5f);
  }

  TEST_CASE("default-size generator forward") {
    const GanConfig cfg;
    const auto imgs = generate_images(build_generator(cfg), cfg, 4, 1);
    REQUIRE(imgs.size() == 4);
    CHECK(imgs[0].width == 128);
    CHECK(imgs[0].height == 128);
  }

  TEST_CASE("config validation") {
    GanConfig c;
    CHECK_NOTHROW(c.validate());
    for (std::size_t bad : {16ul, 48ul, 100ul}) {
      c.image_size = bad;
      CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("latent sampling") {
    const GanConfig cfg;
    RngStream rng(2);
    const auto z = sample_latent(7, cfg, rng);
    CHECK(z.shape() == Shape{7, 100});
    const auto big = sample_latent(1000, cfg, rng);
    double s = 0;
    for (float v : big.data()) {
      CHECK((v >= -1.0f && v <= 1.0f));
      s += v;
    }
    CHECK(std::abs(s / 1e5) < 0.01);
  }

  TEST_CASE("discriminator half-step loss is ln 2 with zero weights") {
    auto cfg = small_config();
    GanModel model(cfg);
    for (const auto& [name, t] : model.discriminator) model.discriminator.set(name, Tensor<float>(t.shape(), 0.0f));
    const auto real = batch_of(make_disc_ring_dataset(4, 32, 1));
    RngStream rng(3);
    const auto r = gan_train_step(model, real, rng);
    CHECK(r.d_loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  }

  TEST_CASE("each half-step only moves its own network") {
    const auto cfg = small_config();
    GanModel model(cfg);
    const auto real = batch_of(make_disc_ring_dataset(4, 32, 2));
    // Freeze the generator's step by zero learning rate; D alone must change, G bitwise unchanged.
    model.generator_opt.set_learning_rate(0.0);
    const auto g_before = model.generator;
    const auto d_before = model.discriminator;
    RngStream rng(4);
    gan_train_step(model, real, rng);
    for (const auto& [name, t] : g_before)
      if (NetworkParams<float>::is_trainable(name)) CHECK(model.generator.at(name) == t);
    bool d_changed = false;
    for (const auto& [name, t] : d_before) d_changed |= !(model.discriminator.at(name) == t);
    CHECK(d_changed);

    GanModel m2(cfg);
    m2.discriminator_opt.set_learning_rate(0.0);
    const auto d2 = m2.discriminator;
    const auto g2 = m2.generator;
    RngStream rng2(4);
    gan_train_step(m2, real, rng2);
    for (const auto& [name, t] : d2) CHECK(m2.discriminator.at(name) == t);
    bool g_changed = false;
    for (const auto& [name, t] : g2) g_changed |= !(m2.generator.at(name) == t);
    CHECK(g_changed);
  }

  TEST_CASE("training is deterministic") {
    auto cfg = small_config();
    cfg.epochs = 2;
    cfg.steps_per_epoch = 3;
    const auto data = make_disc_ring_dataset(12, 32, 3);
    GanModel a(cfg), b(cfg);
    const auto ha = train_gan(a, data), hb = train_gan(b, data);
    CHECK(ha.d_losses == hb.d_losses);
    CHECK(ha.g_losses == hb.g_losses);
    CHECK(ha.d_losses.size() == 6);
    CHECK(ha.epochs.size() == 2);
    for (double v : ha.d_losses) CHECK(std::isfinite(v));
  }

  TEST_CASE("constant dataset: D learns and G drifts toward the constant") {
    auto cfg = small_config();
    cfg.epochs = 1;
    cfg.steps_per_epoch = 200;
    const float level = 0.5f;
    std::vector<NormalizedImage> data(8, NormalizedImage(32, 32, level));
    GanModel model(cfg);
    auto gap = [&](const GanModel& m) {
      double s = 0;
      const auto imgs = generate_images(m.generator, cfg, 16, 77);
      for (const auto& img : imgs)
        for (float v : img.data) s += std::abs(v - level);
      return s / (16.0 * 32 * 32);
    };
    const double before = gap(model);
    double best_real = 0;
    const auto real = batch_of(std::vector<NormalizedImage>(4, NormalizedImage(32, 32, level)));
    RngStream rng(8);
    for (int s = 0; s < 200; ++s) best_real = std::max(best_real, gan_train_step(model, real, rng).real_score);
    CHECK(best_real >= 0.9);
    CHECK(gap(model) < before);
  }

  TEST_CASE("generation") {
    const auto cfg = small_config();
    const auto g = build_generator(cfg);
    CHECK(generate_images(g, cfg, 0, 1).empty());
    CHECK(generate_images(g, cfg, 3, 42) == generate_images(g, cfg, 3, 42));
    CHECK_FALSE(generate_images(g, cfg, 3, 42) == generate_images(g, cfg, 3, 43));
    // Chunking does not change results.
    const auto many = generate_images(g, cfg, 20, 5);
    CHECK(many.size() == 20);
  }

  TEST_CASE("intensity distribution") {
    const std::vector<NormalizedImage> zeros(3, NormalizedImage(10, 10, 0.0f));
    const auto h = intensity_distribution(zeros);
    REQUIRE(h.size() == 64);
    CHECK(h[32] == 1.0);  // bins are [-1 + k/32, -1 + (k+1)/32); 0 opens bin 32
    double total = 0;
    for (double v : h) total += v;
    CHECK(std::abs(total - 1.0) < 1e-9);

    RngStream rng(10);
    std::vector<NormalizedImage> noise(10, NormalizedImage(100, 1000));
    for (auto& img : noise)
      for (auto& v : img.data) v = static_cast<float>(rng.uniform(-1, 1));
    const auto u = intensity_distribution(noise);
    const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
    CHECK(*hi <= 2 * *lo);
    double su = 0;
    for (double v : u) su += v;
    CHECK(std::abs(su - 1.0) < 1e-9);
    std::vector<NormalizedImage> edges{NormalizedImage(2, 1)};
    edges[0].data = {-1.0f, 1.0f};
    const auto e = intensity_distribution(edges);
    CHECK(e.front() == 0.5);
    CHECK(e.back() == 0.5);
    CHECK_THROWS_AS(intensity_distribution({}), DataError);
  }

  TEST_CASE("JS divergence examples") {
    const std::vector<double> p{0.25, 0.25, 0.5};
    CHECK(distribution_divergence(p, p) == 0.0);
    CHECK(distribution_divergence({1, 0}, {0, 1}) == doctest::Approx(1.0));
    CHECK(distribution_divergence({0.5, 0.5}, {1, 0}) == doctest::Approx(0.3113).epsilon(1e-3));
    CHECK(distribution_divergence({0.5, 0.5}, {1, 0}) == doctest::Approx(js_oracle({0.5, 0.5}, {1, 0})));
    CHECK_THROWS(distribution_divergence({1.0}, {0.5, 0.5}));
    RngStream rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> a(8), b(8);
      double sa = 0, sb = 0;
      for (int i = 0; i < 8; ++i) {
        sa += a[i] = rng.bernoulli(0.2) ? 0.0 : rng.uniform();
        sb += b[i] = rng.uniform();
      }
      for (auto& v : a) v /= sa;
      for (auto& v : b) v /= sb;
      const double d = distribution_divergence(a, b);
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
      CHECK(d == doctest::Approx(distribution_divergence(b, a)));
      CHECK(d == doctest::Approx(js_oracle(a, b)).epsilon(1e-9));
    }
  }

  TEST_CASE("checkpoint round trip") {
    auto cfg = small_config();
    GanModel model(cfg);
    model.step = 12;
    const auto ckpt = gan_checkpoint(model, GanEpochSummary{2, 0.6, 0.8});
    CHECK(ckpt.contains("generator.project.weight"));
    CHECK(ckpt.contains("discriminator.head.weight"));
    CHECK(ckpt.at("meta.step")[0] == 12.0f);
    const auto back = gan_from_checkpoint(ckpt);
    CHECK(back.config.image_size == 32);
    CHECK(back.config.latent_dim == 16);
    CHECK(back.config.base_channels == 8);
    CHECK(back.step == 12);
    for (const auto& [name, t] : model.generator) CHECK(back.generator.at(name) == t);
    auto broken = ckpt;
    broken.set("generator.project.weight", Tensor<float>(Shape{3}));
    CHECK_THROWS_AS(gan_from_checkpoint(broken), DataError);
  }
}
