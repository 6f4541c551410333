#include <doctest.h>

#include <algorithm>

#include "drnet/augment.hpp"
#include "drnet/error.hpp"

using namespace drnet;

namespace {

NormalizedImage random_image(std::size_t w, std::size_t h, RngStream& rng) {
  NormalizedImage img(w, h);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(-1, 1));
  return img;
}

AugmentConfig zero_ranges() {
  AugmentConfig c;
  c.rotation_max = c.shift_max = c.shear_max = c.zoom_max = 0.0;
  c.hflip = false;
  c.brightness_min = c.brightness_max = 1.0;
  return c;
}

}  // namespace

TEST_SUITE("augment") {
  TEST_CASE("zero ranges give identity parameters") {
    RngStream rng(1);
    const auto p = sample_params(zero_ranges(), rng, 32, 32);
    CHECK(p.affine.is_identity());
    CHECK(p.brightness == 1.0);
    const auto none = sample_params(AugmentConfig::none(), rng, 32, 32);
    CHECK(none.affine.is_identity());
  }

  TEST_CASE("parameters are deterministic per seed, epoch and index") {
    const AugmentConfig cfg;
    auto a = augment_stream(5, 2, 17), b = augment_stream(5, 2, 17), c = augment_stream(5, 2, 18);
    const auto pa = sample_params(cfg, a, 64, 64), pb = sample_params(cfg, b, 64, 64), pc = sample_params(cfg, c, 64, 64);
    CHECK(pa.affine.rotation_deg == pb.affine.rotation_deg);
    CHECK(pa.affine.shift_x == pb.affine.shift_x);
    CHECK(pa.brightness == pb.brightness);
    CHECK(pa.affine.rotation_deg != pc.affine.rotation_deg);
    auto d = augment_stream(5, 3, 17);
    CHECK(sample_params(cfg, d, 64, 64).affine.rotation_deg != pa.affine.rotation_deg);
  }

  TEST_CASE("sampled ranges fill their bounds") {
    AugmentConfig cfg;
    RngStream rng(9);
    double rmin = 1e9, rmax = -1e9;
    int flips = 0;
    for (int i = 0; i < 10000; ++i) {
      const auto p = sample_params(cfg, rng, 100, 50);
      rmin = std::min(rmin, p.affine.rotation_deg);
      rmax = std::max(rmax, p.affine.rotation_deg);
      CHECK(std::abs(p.affine.shift_x) <= 20.0);
      CHECK(std::abs(p.affine.shift_y) <= 10.0);
      CHECK(std::abs(p.affine.shear_deg) <= 10.0);
      CHECK(p.affine.zoom >= 0.8);
      CHECK(p.affine.zoom <= 1.2);
      CHECK(p.brightness >= 0.8);
      CHECK(p.brightness <= 1.2);
      flips += p.affine.flip;
    }
    CHECK(rmin >= -20.0);
    CHECK(rmin <= -19.0);
    CHECK(rmax >= 19.0);
    CHECK(rmax <= 20.0);
    CHECK(std::abs(flips - 5000) < 300);
  }

  TEST_CASE("affine examples") {
    RngStream rng(2);
    const auto img = random_image(21, 17, rng);
    CHECK(apply_affine(img, AffineParams{}) == img);
    AffineParams flip;
    flip.flip = true;
    const auto once = apply_affine(img, flip);
    CHECK_FALSE(once == img);
    CHECK(apply_affine(once, flip) == img);
    for (std::size_t y = 0; y < 17; ++y)
      for (std::size_t x = 0; x < 21; ++x) CHECK(once.at(y, x) == img.at(y, 20 - x));

    NormalizedImage dot(16, 16, -1.0f);
    dot.at(5, 7) = 1.0f;
    AffineParams shift;
    shift.shift_x = 1.0;
    const auto moved = apply_affine(dot, shift);
    CHECK(moved.at(5, 8) == doctest::Approx(1.0f));
    CHECK(moved.at(5, 7) == doctest::Approx(-1.0f));
    AffineParams down;
    down.shift_y = 2.0;
    CHECK(apply_affine(dot, down).at(7, 7) == doctest::Approx(1.0f));
  }

  TEST_CASE("rotation by 90 degrees permutes pixels") {
    RngStream rng(3);
    const auto img = random_image(9, 9, rng);
    AffineParams r;
    r.rotation_deg = 90.0;
    const auto out = apply_affine(img, r);
    // Every output pixel is some input pixel, and the centre is fixed.
    CHECK(out.at(4, 4) == doctest::Approx(img.at(4, 4)).epsilon(1e-5));
    for (float v : out.data)
      CHECK(std::any_of(img.data.begin(), img.data.end(), [&](float u) { return std::abs(u - v) < 1e-4f; }));
  }

  TEST_CASE("out-of-bounds samples are black") {
    NormalizedImage white(10, 10, 1.0f);
    AffineParams s;
    s.shift_x = 3.0;
    const auto out = apply_affine(white, s);
    for (std::size_t y = 0; y < 10; ++y) {
      for (std::size_t x = 0; x < 3; ++x) CHECK(out.at(y, x) == -1.0f);
      for (std::size_t x = 3; x < 10; ++x) CHECK(out.at(y, x) == 1.0f);
    }
  }

  TEST_CASE("brightness examples") {
    RngStream rng(4);
    const auto img = random_image(8, 8, rng);
    CHECK(apply_brightness(img, 1.0) == img);
    const NormalizedImage black(5, 5, -1.0f);
    for (double f : {0.5, 0.8, 1.2, 3.0}) CHECK(apply_brightness(black, f) == black);
    NormalizedImage mid(1, 1, 0.0f);
    CHECK(apply_brightness(mid, 1.2).data[0] == doctest::Approx(0.2f));
    CHECK(apply_brightness(NormalizedImage(1, 1, 0.9f), 2.0).data[0] == 1.0f);
    CHECK_THROWS(apply_brightness(mid, 0.0));
  }

  TEST_CASE("augmented outputs stay in range and keep their shape") {
    RngStream rng(5);
    AugmentConfig strong;
    strong.rotation_max = 45;
    strong.brightness_max = 2.0;
    for (int i = 0; i < 50; ++i) {
      const auto img = random_image(24, 20, rng);
      auto s = augment_stream(1, 0, i);
      const auto out = augment(img, strong, s);
      CHECK(out.width == 24);
      CHECK(out.height == 20);
      CHECK(std::all_of(out.data.begin(), out.data.end(), [](float v) { return v >= -1.0f && v <= 1.0f; }));
    }
  }

  TEST_CASE("zero-range config makes augmentation the identity") {
    RngStream rng(6);
    for (int i = 0; i < 10; ++i) {
      const auto img = random_image(12, 12, rng);
      CHECK(augment(img, zero_ranges(), rng) == img);
      CHECK(augment(img, AugmentConfig::none(), rng) == img);
    }
  }

  TEST_CASE("config validation") {
    AugmentConfig c;
    CHECK_NOTHROW(c.validate());
    c.zoom_max = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.rotation_max = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.brightness_min = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}
