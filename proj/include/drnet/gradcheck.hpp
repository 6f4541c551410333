#pragma once

#include <cstdint>
#include <functional>

#include "drnet/autodiff.hpp"

namespace drnet {

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Check at most this many coordinates (sampled without replacement); 0 checks all.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  /// Lower bound on the relative-error denominator; keeps roundoff on
  /// near-zero gradients (about 1e-11 at epsilon 1e-5) from reading as error.
  double denominator_floor = 1e-6;
};

struct GradCheckResult {
  /// max |analytic - numeric| / max(denominator_floor, |analytic| + |numeric|) over reliable coordinates
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose +/- epsilon perturbation flipped a relu/pool/clamp branch.
  std::size_t excluded = 0;
};

using ScalarFunction = std::function<Var<double>(Tape<double>&, const Var<double>&)>;

/// Compares reverse-mode gradients of a scalar function against central
/// differences in 64-bit arithmetic. Throws NumericError on non-finite outputs.
GradCheckResult grad_check(const ScalarFunction& fn, const Tensor<double>& input, const GradCheckOptions& options = {});

}  // namespace drnet
