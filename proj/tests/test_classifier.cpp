#include <doctest.h>

#include <cmath>

#include "drnet/classifier.hpp"
#include "drnet/error.hpp"
#include "drnet/gradient_suite.hpp"

using namespace drnet;

namespace {

ClassifierConfig tiny() {
  ClassifierConfig c;
  c.input_size = 32;
  c.stage_widths = {8, 16};
  c.fc_widths = {16};
  c.seed = 3;
  return c;
}

}  // namespace

TEST_SUITE("classifier") {
  TEST_CASE("class enumeration") {
    CHECK(static_cast<int>(DrClass::NoDR) == 0);
    CHECK(static_cast<int>(DrClass::Proliferative) == 4);
    CHECK(class_name(DrClass::Mild) == "Mild");
    CHECK(class_from_index(3) == DrClass::Severe);
    CHECK_THROWS_AS(class_from_index(5), DataError);
  }

  TEST_CASE("default architecture shapes") {
    const ClassifierConfig cfg;
    const auto arch = classifier_architecture(cfg);
    CHECK(arch.output_shape(1) == Shape{1, 5});
    const auto shapes = arch.layer_shapes(1);
    // The stem ends at the max-pool; its output is the first 64-channel 56x56 map after a 112x112 one.
    bool saw112 = false, stem56 = false;
    for (std::size_t i = 0; i < arch.layers().size(); ++i) {
      const auto& s = shapes[i];
      if (s.rank() == 4 && s[2] == 112 && s[1] == 64) saw112 = true;
      if (std::holds_alternative<MaxPoolLayer>(arch.layers()[i].kind)) stem56 = s == Shape{1, 64, 56, 56};
    }
    CHECK(saw112);
    CHECK(stem56);
  }

  TEST_CASE("default network runs on a 224 input") {
    const ClassifierConfig cfg;
    const auto params = build_classifier(cfg);
    RngStream rng(1);
    const auto p = predict(params, cfg, Tensor<float>::uniform(Shape{1, 1, 224, 224}, rng, -1, 1));
    CHECK(p.shape() == Shape{1, 5});
  }

  TEST_CASE("parameter count is a pure function of config") {
    const auto cfg = tiny();
    CHECK(build_classifier(cfg).parameter_count() == build_classifier(cfg).parameter_count());
    auto other = cfg;
    other.seed = 99;
    CHECK(build_classifier(other).parameter_count() == build_classifier(cfg).parameter_count());
    auto wider = cfg;
    wider.fc_widths = {32};
    CHECK(build_classifier(wider).parameter_count() > build_classifier(cfg).parameter_count());
  }

  TEST_CASE("config validation") {
    auto c = tiny();
    CHECK_NOTHROW(c.validate());
    c.stage_widths.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny();
    c.input_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("predict examples") {
    const auto cfg = tiny();
    auto params = build_classifier(cfg);
    RngStream rng(2);
    const auto x = Tensor<float>::uniform(Shape{6, 1, 32, 32}, rng, -1, 1);
    const auto p = predict(params, cfg, x);
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += p[r * 5 + c];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
    CHECK(predict(params, cfg, x) == p);
    params.at(std::string(kLogitsWeight)).fill(0.0f);
    params.at(std::string(kLogitsBias)).fill(0.0f);
    const auto flat = predict(params, cfg, x);
    for (float v : flat.data()) CHECK(v == 0.2f);
    CHECK_THROWS_AS(predict(params, cfg, Tensor<float>(Shape{1, 1, 28, 28})), ShapeError);
  }

  TEST_CASE("predict_class examples") {
    const std::vector<float> a{0.1f, 0.7f, 0.1f, 0.05f, 0.05f}, tie{0.5f, 0.5f, 0, 0, 0}, last{0, 0, 0, 0, 1};
    CHECK(predict_class(a) == DrClass::Mild);
    CHECK(predict_class(tie) == DrClass::NoDR);
    CHECK(predict_class(last) == DrClass::Proliferative);
    const std::vector<float> bad{0.1f, NAN, 0, 0, 0};
    CHECK_THROWS_AS(predict_class(bad), NumericError);
  }

  TEST_CASE("argmax is invariant to positive logit scaling") {
    RngStream rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      Tape<float> t;
      const auto logits = Tensor<float>::normal(Shape{1, 5}, rng, 0, 2);
      const float k = static_cast<float>(0.1 + rng.uniform() * 5);
      const auto p1 = softmax(t.constant(logits)).value();
      const auto p2 = softmax(mul_scalar(t.constant(logits), k)).value();
      CHECK(predict_class(p1.data()) == predict_class(p2.data()));
    }
  }

  TEST_CASE("reduced classifier gradient check") {
    GradientSuiteOptions opts;
    opts.seeds = 2;
    for (const auto& name : gradient_case_names(true))
      if (name.starts_with("classifier")) {
        const auto r = run_gradient_case(name, opts);
        CHECK_MESSAGE(r.max_relative_error < 1e-4, name);
        CHECK(r.checked > 0);
      }
  }

  TEST_CASE("checkpoint metadata round trip") {
    auto cfg = tiny();
    cfg.stem_channels = 12;
    const auto params = build_classifier(cfg);
    const auto ckpt = classifier_checkpoint(params, cfg);
    const auto back = classifier_config_from_checkpoint(ckpt);
    CHECK(back.input_size == 32);
    CHECK(back.stage_widths == cfg.stage_widths);
    CHECK(back.fc_widths == cfg.fc_widths);
    CHECK(back.stem_channels == 12);
    auto broken = ckpt;
    broken.set("logits.weight", Tensor<float>(Shape{2, 2}));
    CHECK_THROWS_AS(classifier_config_from_checkpoint(broken), DataError);
  }
}
