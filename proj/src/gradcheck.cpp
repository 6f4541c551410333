#include "drnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drnet/error.hpp"

namespace drnet {
namespace {

struct Evaluation {
  double value;
  std::uint64_t signature;
};

Evaluation evaluate(const ScalarFunction& fn, const Tensor<double>& input) {
  Tape<double> tape;
  tape.set_branch_tracking(true);
  Var<double> x = tape.constant(input);
  Var<double> y = fn(tape, x);
  if (y.value().numel() != 1) throw ShapeError("grad_check: function must return a scalar, got " + y.shape().str());
  const double v = y.value()[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: function returned a non-finite value");
  return {v, tape.branch_signature()};
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& fn, const Tensor<double>& input, const GradCheckOptions& options) {
  Tape<double> tape;
  tape.set_branch_tracking(true);
  Var<double> x = tape.variable(input);
  Var<double> y = fn(tape, x);
  if (y.value().numel() != 1) throw ShapeError("grad_check: function must return a scalar, got " + y.shape().str());
  if (!std::isfinite(y.value()[0])) throw NumericError("grad_check: function returned a non-finite value");
  const std::uint64_t base_signature = tape.branch_signature();
  const Tensor<double> analytic = tape.backward(y).of(x);
  for (double g : analytic.data())
    if (!std::isfinite(g)) throw NumericError("grad_check: non-finite analytic gradient");

  std::vector<std::size_t> coords(input.numel());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coordinates != 0 && options.max_coordinates < coords.size()) {
    RngStream rng(options.seed, 0x6772616463686bull);
    for (std::size_t i = 0; i < options.max_coordinates; ++i)
      std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
    coords.resize(options.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  Tensor<double> probe = input;
  const double eps = options.epsilon;
  for (std::size_t i : coords) {
    const double orig = probe[i];
    const double hi = orig + eps, lo = orig - eps;
    probe[i] = hi;
    const Evaluation plus = evaluate(fn, probe);
    probe[i] = lo;
    const Evaluation minus = evaluate(fn, probe);
    probe[i] = orig;
    if (plus.signature != base_signature || minus.signature != base_signature) {
      ++result.excluded;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (hi - lo);
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) / std::max(options.denominator_floor, std::abs(a) + std::abs(numeric));
    result.max_relative_error = std::max(result.max_relative_error, rel);
    ++result.checked;
  }
  return result;
}

}  // namespace drnet
