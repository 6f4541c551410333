#include "drnet/gradient_suite.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <functional>
#include <map>

#include "drnet/classifier.hpp"
#include "drnet/error.hpp"
#include "drnet/gradcheck.hpp"
#include "drnet/layers.hpp"
#include "drnet/optim.hpp"

namespace drnet {
namespace {

using D = double;
using T = Tensor<D>;
using V = Var<D>;

T normal(Shape s, RngStream& rng, double sd = 1.0) {
  T t(std::move(s));
  for (double& v : t.data()) v = rng.normal(0.0, sd);
  return t;
}

// Random linear functional so every output entry contributes a distinct gradient.
V project(Tape<D>& tape, const V& y, std::uint64_t seed) {
  RngStream rng(seed, 0x70726f6aull);
  return sum(mul(y, tape.constant(normal(y.shape(), rng))));
}

struct Problem {
  T input;
  ScalarFunction fn;
  std::size_t max_coordinates = 0;
};

using Builder = std::function<Problem(std::uint64_t seed)>;

ClassifierConfig small_classifier() {
  ClassifierConfig c;
  c.input_size = 32;
  c.stage_widths = {8, 16};
  c.fc_widths = {16};
  return c;
}

NetworkParams<D> randomized_params(const Architecture& arch, std::uint64_t seed) {
  NetworkParams<D> p = arch.init<D>(seed, InitScheme::HeNormal);
  RngStream rng(seed, 0x7374617473ull);
  for (const auto& [name, t] : NetworkParams<D>(p)) {
    if (name.ends_with(".running_mean")) p.set(name, normal(t.shape(), rng, 0.2));
    if (name.ends_with(".running_var")) {
      T v(t.shape());
      for (double& x : v.data()) x = rng.uniform(0.5, 1.5);
      p.set(name, v);
    }
    if (name.ends_with(".gamma")) {
      T g(t.shape());
      for (double& x : g.data()) x = rng.uniform(0.5, 1.5);
      p.set(name, g);
    }
    if (name.ends_with(".beta")) p.set(name, normal(t.shape(), rng, 0.1));
  }
  return p;
}

// Whole-network problem: gradient wrt the input or wrt one named parameter.
Problem network_problem(const Architecture& arch, std::size_t batch, Mode mode, const std::string& wrt,
                        std::uint64_t seed, std::size_t max_coordinates) {
  auto params = std::make_shared<NetworkParams<D>>(randomized_params(arch, seed));
  RngStream rng(seed, 0x696e70ull);
  T image = normal(arch.input_shape(batch), rng);
  Problem p;
  p.max_coordinates = max_coordinates;
  if (wrt.empty()) {
    p.input = image;
    p.fn = [=](Tape<D>& tape, const V& x) {
      NetworkParams<D> local = *params;  // train-mode BN writes running stats
      ForwardContext<D> ctx(tape, local, mode, nullptr, false);
      return project(tape, arch.forward(ctx, x), seed);
    };
  } else {
    p.input = params->at(wrt);
    p.fn = [=](Tape<D>& tape, const V& w) {
      NetworkParams<D> local = *params;
      ForwardContext<D> ctx(tape, local, mode, nullptr, false);
      ctx.bind(wrt, w);
      return project(tape, arch.forward(ctx, tape.constant(image)), seed);
    };
  }
  return p;
}

Architecture stage_arch(std::size_t in, std::size_t out, std::size_t stride) {
  return Architecture({{"stage", ResidualStageLayer{in, out, stride}}}, Shape{in, 8, 8});
}

const std::map<std::string, Builder>& builders() {
  static const std::map<std::string, Builder> table = [] {
    std::map<std::string, Builder> b;
    b["dense.input"] = [](std::uint64_t s) {
      RngStream r(s);
      T w = normal(Shape{5, 4}, r), bias = normal(Shape{4}, r);
      return Problem{normal(Shape{3, 5}, r), [=](Tape<D>& t, const V& x) {
                       return project(t, dense<D>(x, t.constant(w), t.constant(bias)), s);
                     }};
    };
    b["dense.weight"] = [](std::uint64_t s) {
      RngStream r(s);
      T x = normal(Shape{3, 5}, r), bias = normal(Shape{4}, r);
      return Problem{normal(Shape{5, 4}, r), [=](Tape<D>& t, const V& w) {
                       return project(t, dense<D>(t.constant(x), w, t.constant(bias)), s);
                     }};
    };
    b["conv2d.input"] = [](std::uint64_t s) {
      RngStream r(s);
      T w = normal(Shape{4, 3, 3, 3}, r, 0.5), bias = normal(Shape{4}, r);
      return Problem{normal(Shape{2, 3, 6, 6}, r), [=](Tape<D>& t, const V& x) {
                       return project(t, conv2d<D>(x, t.constant(w), t.constant(bias), {1, 1}), s);
                     }};
    };
    b["conv2d.weight"] = [](std::uint64_t s) {
      RngStream r(s);
      T x = normal(Shape{2, 3, 7, 7}, r), bias = normal(Shape{4}, r);
      return Problem{normal(Shape{4, 3, 3, 3}, r, 0.5), [=](Tape<D>& t, const V& w) {
                       return project(t, conv2d<D>(t.constant(x), w, t.constant(bias), {2, 1}), s);
                     }};
    };
    b["conv2d.bias"] = [](std::uint64_t s) {
      RngStream r(s);
      T x = normal(Shape{2, 3, 5, 5}, r), w = normal(Shape{4, 3, 3, 3}, r, 0.5);
      return Problem{normal(Shape{4}, r), [=](Tape<D>& t, const V& bias) {
                       return project(t, conv2d<D>(t.constant(x), t.constant(w), bias, {1, 0}), s);
                     }};
    };
    b["conv2d_transpose.input"] = [](std::uint64_t s) {
      RngStream r(s);
      T w = normal(Shape{3, 2, 4, 4}, r, 0.5), bias = normal(Shape{2}, r);
      return Problem{normal(Shape{2, 3, 4, 4}, r), [=](Tape<D>& t, const V& x) {
                       return project(t, conv2d_transpose<D>(x, t.constant(w), t.constant(bias), {2, 1}), s);
                     }};
    };
    b["conv2d_transpose.weight"] = [](std::uint64_t s) {
      RngStream r(s);
      T x = normal(Shape{2, 3, 4, 4}, r), bias = normal(Shape{2}, r);
      return Problem{normal(Shape{3, 2, 4, 4}, r, 0.5), [=](Tape<D>& t, const V& w) {
                       return project(t, conv2d_transpose<D>(t.constant(x), w, t.constant(bias), {2, 1}), s);
                     }};
    };
    b["batch_norm.train.input"] = [](std::uint64_t s) {
      RngStream r(s);
      T gamma = normal(Shape{2}, r), beta = normal(Shape{2}, r);
      return Problem{normal(Shape{3, 2, 4, 4}, r), [=](Tape<D>& t, const V& x) {
                       T mean(Shape{2}, 0.0), var(Shape{2}, 1.0);
                       return project(t, batch_norm<D>(x, t.constant(gamma), t.constant(beta), mean, var, Mode::Train), s);
                     }};
    };
    b["batch_norm.train.gamma"] = [](std::uint64_t s) {
      RngStream r(s);
      T x = normal(Shape{3, 2, 4, 4}, r), beta = normal(Shape{2}, r);
      return Problem{normal(Shape{2}, r), [=](Tape<D>& t, const V& gamma) {
                       T mean(Shape{2}, 0.0), var(Shape{2}, 1.0);
                       return project(t, batch_norm<D>(t.constant(x), gamma, t.constant(beta), mean, var, Mode::Train), s);
                     }};
    };
    b["batch_norm.train.beta"] = [](std::uint64_t s) {
      RngStream r(s);
      T x = normal(Shape{3, 2, 4, 4}, r), gamma = normal(Shape{2}, r);
      return Problem{normal(Shape{2}, r), [=](Tape<D>& t, const V& beta) {
                       T mean(Shape{2}, 0.0), var(Shape{2}, 1.0);
                       return project(t, batch_norm<D>(t.constant(x), t.constant(gamma), beta, mean, var, Mode::Train), s);
                     }};
    };
    b["batch_norm.eval.input"] = [](std::uint64_t s) {
      RngStream r(s);
      T gamma = normal(Shape{3}, r), beta = normal(Shape{3}, r), mean = normal(Shape{3}, r);
      T var(Shape{3});
      for (double& v : var.data()) v = r.uniform(0.5, 2.0);
      return Problem{normal(Shape{2, 3, 3, 3}, r), [=](Tape<D>& t, const V& x) {
                       T m = mean, v = var;
                       return project(t, batch_norm<D>(x, t.constant(gamma), t.constant(beta), m, v, Mode::Eval), s);
                     }};
    };
    b["max_pool2d.4x4"] = [](std::uint64_t s) {
      RngStream r(s);
      return Problem{normal(Shape{1, 1, 4, 4}, r),
                     [=](Tape<D>& t, const V& x) { return project(t, max_pool2d<D>(x, 2, 2), s); }};
    };
    b["max_pool2d.overlap"] = [](std::uint64_t s) {
      RngStream r(s);
      return Problem{normal(Shape{2, 2, 7, 7}, r),
                     [=](Tape<D>& t, const V& x) { return project(t, max_pool2d<D>(x, 3, 2), s); }};
    };
    b["zero_pad2d"] = [](std::uint64_t s) {
      RngStream r(s);
      return Problem{normal(Shape{2, 2, 3, 3}, r),
                     [=](Tape<D>& t, const V& x) { return project(t, zero_pad2d<D>(x, 2), s); }};
    };
    b["global_avg_pool"] = [](std::uint64_t s) {
      RngStream r(s);
      return Problem{normal(Shape{2, 3, 4, 4}, r),
                     [=](Tape<D>& t, const V& x) { return project(t, global_avg_pool<D>(x), s); }};
    };
    const std::pair<const char*, Activation> acts[] = {{"relu", Activation::Relu},
                                                       {"leaky_relu", Activation::LeakyRelu},
                                                       {"tanh", Activation::Tanh},
                                                       {"sigmoid", Activation::Sigmoid},
                                                       {"softmax", Activation::Softmax}};
    for (const auto& [name, kind] : acts) {
      const Activation k = kind;
      b[std::string("activation.") + name] = [k](std::uint64_t s) {
        RngStream r(s);
        return Problem{normal(Shape{4, 6}, r, 2.0),
                       [=](Tape<D>& t, const V& x) { return project(t, activate<D>(k, x, 0.2), s); }};
      };
    }
    b["dropout.train"] = [](std::uint64_t s) {
      RngStream r(s);
      return Problem{normal(Shape{4, 8}, r), [=](Tape<D>& t, const V& x) {
                       RngStream mask(s, 0x6d61736bull);
                       return project(t, dropout<D>(x, 0.3, Mode::Train, mask), s);
                     }};
    };
    b["softmax_cross_entropy"] = [](std::uint64_t s) {
      RngStream r(s);
      T onehot(Shape{4, 5});
      for (std::size_t i = 0; i < 4; ++i) onehot[i * 5 + r.below(5)] = 1.0;
      return Problem{normal(Shape{4, 5}, r, 2.0), [=](Tape<D>& t, const V& logits) {
                       return categorical_cross_entropy<D>(softmax(logits), t.constant(onehot));
                     }};
    };
    b["sigmoid_binary_cross_entropy"] = [](std::uint64_t s) {
      RngStream r(s);
      T target(Shape{6, 1});
      for (double& v : target.data()) v = r.bernoulli(0.5) ? 1.0 : 0.0;
      return Problem{normal(Shape{6, 1}, r, 2.0), [=](Tape<D>& t, const V& x) {
                       return binary_cross_entropy<D>(sigmoid(x), t.constant(target));
                     }};
    };
    b["residual_stage.eval.1x4x8x8"] = [](std::uint64_t s) {
      return network_problem(stage_arch(4, 8, 2), 1, Mode::Eval, "", s, 0);
    };
    b["residual_stage.train.input"] = [](std::uint64_t s) {
      return network_problem(stage_arch(4, 8, 2), 2, Mode::Train, "", s, 128);
    };
    b["residual_stage.train.weights"] = [](std::uint64_t s) {
      return network_problem(stage_arch(4, 4, 1), 2, Mode::Train, "stage.block1.conv2.weight", s, 64);
    };
    b["residual_stage.train.shortcut"] = [](std::uint64_t s) {
      return network_problem(stage_arch(4, 8, 2), 2, Mode::Train, "stage.block0.shortcut.conv.weight", s, 0);
    };
    return b;
  }();
  return table;
}

const std::map<std::string, Builder>& classifier_builders() {
  static const std::map<std::string, Builder> table = [] {
    std::map<std::string, Builder> b;
    const Architecture arch = classifier_architecture(small_classifier());
    b["classifier.eval.input"] = [arch](std::uint64_t s) {
      return network_problem(arch, 1, Mode::Eval, "", s, 48);
    };
    b["classifier.train.stem"] = [arch](std::uint64_t s) {
      return network_problem(arch, 2, Mode::Train, "stem.conv.weight", s, 32);
    };
    b["classifier.train.stage1"] = [arch](std::uint64_t s) {
      return network_problem(arch, 2, Mode::Train, "stage1.block0.conv1.weight", s, 32);
    };
    b["classifier.train.logits"] = [arch](std::uint64_t s) {
      return network_problem(arch, 2, Mode::Train, "logits.weight", s, 0);
    };
    return b;
  }();
  return table;
}

const Builder& find_builder(const std::string& name) {
  if (auto it = builders().find(name); it != builders().end()) return it->second;
  if (auto it = classifier_builders().find(name); it != classifier_builders().end()) return it->second;
  throw std::invalid_argument("unknown gradient case '" + name + "'");
}

}  // namespace

std::vector<std::string> gradient_case_names(bool include_classifier) {
  std::vector<std::string> names;
  for (const auto& [name, _] : builders()) names.push_back(name);
  if (include_classifier)
    for (const auto& [name, _] : classifier_builders()) names.push_back(name);
  return names;
}

GradientCaseResult run_gradient_case(const std::string& name, const GradientSuiteOptions& options) {
  const Builder& build = find_builder(name);
  GradientCaseResult result;
  result.name = name;
  for (unsigned i = 0; i < options.seeds; ++i) {
    const std::uint64_t seed = RngStream::mix({options.base_seed, i});
    const Problem p = build(seed);
    GradCheckOptions gc;
    gc.max_coordinates = p.max_coordinates;
    gc.seed = seed;
    const GradCheckResult r = grad_check(p.fn, p.input, gc);
    result.max_relative_error = std::max(result.max_relative_error, r.max_relative_error);
    result.checked += r.checked;
    result.excluded += r.excluded;
    ++result.seeds;
  }
  result.passed = result.checked > 0 && result.max_relative_error < options.tolerance;
  return result;
}

std::vector<GradientCaseResult> run_gradient_suite(const GradientSuiteOptions& options) {
  std::vector<GradientCaseResult> out;
  for (const auto& name : gradient_case_names(options.include_classifier)) out.push_back(run_gradient_case(name, options));
  return out;
}

}  // namespace drnet
