#pragma once

// Confusion matrices and per-class precision / recall / F1 reports.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "drnet/classifier.hpp"

namespace drnet {

/// Rows are true labels, columns predicted labels.
class ConfusionMatrix {
 public:
  using Counts = std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(const Counts& counts) : counts_(counts) {}

  void add(DrClass truth, DrClass predicted, std::uint64_t n = 1);
  std::uint64_t at(DrClass truth, DrClass predicted) const;
  const Counts& counts() const { return counts_; }

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(DrClass truth) const;
  std::uint64_t column_sum(DrClass predicted) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  Counts counts_{};
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct ClassReport {
  std::array<ClassMetrics, kNumClasses> classes{};
  double accuracy = 0.0;
  std::uint64_t total = 0;

  const ClassMetrics& operator[](DrClass c) const { return classes[static_cast<std::size_t>(c)]; }
};

/// One-vs-rest metrics per class; any metric with a zero denominator is 0.
/// Throws DataError for an all-zero matrix.
ClassReport classification_report(const ConfusionMatrix& cm);

/// Aligned text table with three decimals.
std::string format_report(const ClassReport& report);
std::string format_confusion(const ConfusionMatrix& cm);

/// `class,precision,recall,f1,support` rows and a final
/// `accuracy,,,<accuracy>,<total>` row.
void write_report_csv(const std::filesystem::path& path, const ClassReport& report);
/// Header `true\predicted,NoDR,...`, then one row per true class.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);
ConfusionMatrix read_confusion_csv(const std::filesystem::path& path);

}  // namespace drnet
