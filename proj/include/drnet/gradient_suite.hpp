#pragma once

// Finite-difference checks over every layer primitive and a reduced
// classifier, run in 64-bit arithmetic over several random seeds.

#include <cstdint>
#include <string>
#include <vector>

namespace drnet {

struct GradientSuiteOptions {
  unsigned seeds = 10;
  std::uint64_t base_seed = 1;
  double tolerance = 1e-4;
  /// Includes the reduced 32x32 classifier cases (the slowest ones).
  bool include_classifier = true;
};

struct GradientCaseResult {
  std::string name;
  double max_relative_error = 0.0;  // worst over all seeds
  std::size_t checked = 0;
  std::size_t excluded = 0;
  unsigned seeds = 0;
  bool passed = false;
};

std::vector<std::string> gradient_case_names(bool include_classifier = true);
std::vector<GradientCaseResult> run_gradient_suite(const GradientSuiteOptions& options = {});
GradientCaseResult run_gradient_case(const std::string& name, const GradientSuiteOptions& options = {});

}  // namespace drnet
