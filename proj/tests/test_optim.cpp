#include <doctest.h>

#include <cmath>

#include "drnet/error.hpp"
#include "drnet/gradcheck.hpp"
#include "drnet/optim.hpp"

using namespace drnet;

namespace {

Gradients<float> grads_for(NetworkParams<float>& params, const std::function<Var<float>(ForwardContext<float>&)>& loss) {
  Tape<float> t;
  ForwardContext<float> ctx(t, params, Mode::Train);
  return t.backward(loss(ctx));
}

}  // namespace

TEST_SUITE("optim") {
  TEST_CASE("categorical cross-entropy examples") {
    Tape<double> t;
    const double p = 1.0 - 1e-7, q = 1e-7 / 4;
    auto perfect = t.constant(Tensor<double>(Shape{1, 5}, std::vector<double>{p, q, q, q, q}));
    auto onehot = t.constant(Tensor<double>(Shape{1, 5}, std::vector<double>{1, 0, 0, 0, 0}));
    CHECK(categorical_cross_entropy(perfect, onehot).value().item() < 1e-6);
    auto uniform = t.constant(Tensor<double>(Shape{3, 5}, 0.2));
    Tensor<double> y(Shape{3, 5});
    y[0] = y[5 + 2] = y[10 + 4] = 1.0;
    CHECK(categorical_cross_entropy(uniform, t.constant(y)).value().item() == doctest::Approx(std::log(5.0)));
    CHECK_THROWS_AS(categorical_cross_entropy(uniform, onehot), ShapeError);
  }

  TEST_CASE("softmax plus cross-entropy gradient is (p - y) / batch") {
    RngStream rng(2);
    for (int trial = 0; trial < 10; ++trial) {
      const auto logits = Tensor<double>::normal(Shape{4, 5}, rng, 0, 2);
      Tensor<double> y(Shape{4, 5});
      for (std::size_t n = 0; n < 4; ++n) y[n * 5 + rng.below(5)] = 1.0;
      auto f = [&](Tape<double>& t, const Var<double>& v) { return categorical_cross_entropy(softmax(v), t.constant(y)); };
      CHECK(grad_check(f, logits).max_relative_error < 1e-4);
      Tape<double> t;
      auto v = t.variable(logits);
      auto probs = softmax(v);
      const auto g = t.backward(categorical_cross_entropy(probs, t.constant(y))).of(v);
      for (std::size_t i = 0; i < g.numel(); ++i) CHECK(g[i] == doctest::Approx((probs.value()[i] - y[i]) / 4.0));
    }
  }

  TEST_CASE("binary cross-entropy examples") {
    Tape<double> t;
    auto half = t.constant(Tensor<double>(Shape{4}, 0.5));
    auto targets = t.constant(Tensor<double>(Shape{4}, std::vector<double>{0, 1, 1, 0}));
    CHECK(binary_cross_entropy(half, targets).value().item() == doctest::Approx(std::log(2.0)));
    CHECK(binary_cross_entropy(targets, targets).value().item() < 1e-6);
    CHECK_THROWS_AS(binary_cross_entropy(half, t.constant(Tensor<double>(Shape{3}))), ShapeError);
    RngStream rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const auto logits = Tensor<double>::normal(Shape{6}, rng, 0, 2);
      Tensor<double> tgt(Shape{6});
      for (auto& v : tgt.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
      auto f = [&](Tape<double>& tp, const Var<double>& v) { return binary_cross_entropy(sigmoid(v), tp.constant(tgt)); };
      CHECK(grad_check(f, logits).max_relative_error < 1e-4);
    }
  }

  TEST_CASE("losses are non-negative after clamping") {
    RngStream rng(8);
    Tape<double> t;
    for (int trial = 0; trial < 50; ++trial) {
      Tensor<double> p(Shape{8});
      Tensor<double> y(Shape{8});
      for (std::size_t i = 0; i < 8; ++i) {
        p[i] = rng.bernoulli(0.2) ? (rng.bernoulli(0.5) ? 0.0 : 1.0) : rng.uniform();
        y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      }
      CHECK(binary_cross_entropy(t.constant(p), t.constant(y)).value().item() >= 0.0);
    }
  }

  TEST_CASE("adam first step") {
    NetworkParams<float> params;
    params.add("theta", Tensor<float>(Shape{1}, 1.0f));
    Adam<float> adam;
    const auto g = grads_for(params, [](ForwardContext<float>& ctx) { return mul_scalar(sum(ctx.param("theta")), 2.0f); });
    adam.step(params, g);
    // Bias-corrected first step moves by lr * g / (|g| + eps).
    const double expected = 1.0 - 0.001 * 2.0 / (2.0 + 1e-8);
    CHECK(params.at("theta")[0] == doctest::Approx(expected).epsilon(1e-6));
    CHECK(adam.step_count() == 1);
    CHECK(adam.first_moment("theta").shape() == Shape{1});
  }

  TEST_CASE("adam with zero gradients is a fixed point") {
    NetworkParams<float> params;
    RngStream rng(1);
    params.add("w", Tensor<float>::normal(Shape{3, 4}, rng, 0, 1));
    const auto before = params.at("w");
    Adam<float> adam;
    for (int i = 0; i < 5; ++i) {
      const auto g = grads_for(params, [](ForwardContext<float>& ctx) { return mul_scalar(sum(ctx.param("w")), 0.0f); });
      adam.step(params, g);
      CHECK(adam.step_count() == i + 1);
    }
    CHECK(params.at("w") == before);
  }

  TEST_CASE("adam minimises a quadratic like a scalar simulation") {
    NetworkParams<float> params;
    params.add("theta", Tensor<float>(Shape{1}, 1.0f));
    AdamConfig cfg;
    cfg.learning_rate = 0.01;
    Adam<float> adam(cfg);
    // Independent scalar Adam.
    double th = 1.0, m = 0, v = 0;
    int reached = -1;
    for (int step = 1; step <= 500; ++step) {
      const auto g = grads_for(params, [](ForwardContext<float>& ctx) { return sum(square(ctx.param("theta"))); });
      adam.step(params, g);
      const double gd = 2 * th;
      m = 0.9 * m + 0.1 * gd;
      v = 0.999 * v + 0.001 * gd * gd;
      th -= 0.01 * (m / (1 - std::pow(0.9, step))) / (std::sqrt(v / (1 - std::pow(0.999, step))) + 1e-8);
      CHECK(params.at("theta")[0] == doctest::Approx(th).epsilon(1e-3).scale(1e-3));
      if (reached < 0 && std::abs(params.at("theta")[0]) < 0.01f) reached = step;
    }
    CHECK(reached > 0);
  }

  TEST_CASE("adam rejects non-finite gradients by name") {
    NetworkParams<float> params;
    params.add("bad_param", Tensor<float>(Shape{1}, 1.0f));
    Adam<float> adam;
    const auto g = grads_for(params, [](ForwardContext<float>& ctx) {
      return mul_scalar(sum(ctx.param("bad_param")), std::numeric_limits<float>::infinity());
    });
    try {
      adam.step(params, g);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("bad_param") != std::string::npos);
    }
  }

  TEST_CASE("lr_schedule examples") {
    CHECK(lr_schedule(0.001, 0) == 0.001);
    CHECK(lr_schedule(0.001, 10) == 0.0001);
    CHECK(lr_schedule(0.001, 25) == 1e-5);
    CHECK_THROWS(lr_schedule(0.001, -1));
  }

  TEST_CASE("lr_schedule is piecewise constant and non-increasing") {
    double prev = lr_schedule(0.001, 0);
    for (int e = 0; e < 60; ++e) {
      const double lr = lr_schedule(0.001, e);
      CHECK(lr <= prev);
      CHECK(lr == 0.001 / std::pow(10.0, e / 10));
      if (e % 10 != 0) CHECK(lr == prev);
      prev = lr;
    }
  }

  TEST_CASE("early stopping examples") {
    NetworkParams<float> p;
    p.add("w", Tensor<float>(Shape{1}, 0.0f));
    EarlyStopping es(15);
    for (double loss : {1.0, 0.9, 0.8}) CHECK(es.update(loss, p) == StopDecision::Continue);
    CHECK(es.epochs_since_improvement() == 0);
    CHECK(es.best_epoch() == 2);

    CHECK(es.update(0.8, p) == StopDecision::Continue);
    CHECK(es.epochs_since_improvement() == 1);
    CHECK(es.update(0.7, p) == StopDecision::Continue);
    CHECK(es.epochs_since_improvement() == 0);

    EarlyStopping es2(15);
    p.at("w")[0] = 42.0f;
    es2.update(0.5, p);
    for (int i = 1; i <= 16; ++i) {
      p.at("w")[0] = static_cast<float>(i);
      const auto d = es2.update(0.6 + i * 0.01, p);
      CHECK(d == (i == 16 ? StopDecision::Stop : StopDecision::Continue));
    }
    CHECK(es2.best_params().at("w")[0] == 42.0f);
    CHECK_THROWS_AS(es2.update(std::nan(""), p), NumericError);
  }

  TEST_CASE("early stopping snapshot always tracks the minimum") {
    RngStream rng(77);
    for (int trial = 0; trial < 20; ++trial) {
      EarlyStopping es(3);
      NetworkParams<float> p;
      p.add("w", Tensor<float>(Shape{1}));
      double best = 1e9;
      float best_tag = -1;
      for (int e = 0; e < 40; ++e) {
        const double loss = rng.uniform();
        p.at("w")[0] = static_cast<float>(e);
        if (loss < best) {
          best = loss;
          best_tag = static_cast<float>(e);
        }
        const auto d = es.update(loss, p);
        CHECK(es.best_loss() == best);
        CHECK(es.best_params().at("w")[0] == best_tag);
        if (d == StopDecision::Stop) {
          CHECK(es.epochs_since_improvement() == 4);
          break;
        }
      }
    }
  }
}
