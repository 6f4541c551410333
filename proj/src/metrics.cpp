#include "drnet/metrics.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

#include "drnet/error.hpp"

namespace drnet {

namespace {
std::size_t idx(DrClass c) { return static_cast<std::size_t>(c); }
double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

void ConfusionMatrix::add(DrClass truth, DrClass predicted, std::uint64_t n) { counts_[idx(truth)][idx(predicted)] += n; }
std::uint64_t ConfusionMatrix::at(DrClass truth, DrClass predicted) const { return counts_[idx(truth)][idx(predicted)]; }

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts_)
    for (auto v : row) t += v;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) t += counts_[k][k];
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(DrClass truth) const {
  std::uint64_t t = 0;
  for (auto v : counts_[idx(truth)]) t += v;
  return t;
}

std::uint64_t ConfusionMatrix::column_sum(DrClass predicted) const {
  std::uint64_t t = 0;
  for (const auto& row : counts_) t += row[idx(predicted)];
  return t;
}

ClassReport classification_report(const ConfusionMatrix& cm) {
  ClassReport r;
  r.total = cm.total();
  if (r.total == 0) throw DataError("classification_report: confusion matrix is empty");
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const auto c = static_cast<DrClass>(k);
    ClassMetrics& m = r.classes[k];
    const std::uint64_t tp = cm.at(c, c);
    m.support = cm.row_sum(c);
    m.precision = ratio(tp, cm.column_sum(c));
    m.recall = ratio(tp, m.support);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  r.accuracy = ratio(cm.trace(), r.total);
  return r;
}

std::string format_report(const ClassReport& report) {
  std::string out = fmt::format("{:<14}{:>10}{:>10}{:>10}{:>10}\n", "class", "precision", "recall", "f1", "support");
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const ClassMetrics& m = report.classes[k];
    out += fmt::format("{:<14}{:>10.3f}{:>10.3f}{:>10.3f}{:>10}\n", class_name(static_cast<DrClass>(k)), m.precision,
                       m.recall, m.f1, m.support);
  }
  out += fmt::format("{:<14}{:>10}{:>10}{:>10.3f}{:>10}\n", "accuracy", "", "", report.accuracy, report.total);
  return out;
}

std::string format_confusion(const ConfusionMatrix& cm) {
  std::string out = fmt::format("{:<14}", "true\\pred");
  for (std::size_t k = 0; k < kNumClasses; ++k) out += fmt::format("{:>14}", class_name(static_cast<DrClass>(k)));
  out += '\n';
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    out += fmt::format("{:<14}", class_name(static_cast<DrClass>(t)));
    for (std::size_t p = 0; p < kNumClasses; ++p) out += fmt::format("{:>14}", cm.counts()[t][p]);
    out += '\n';
  }
  return out;
}

void write_report_csv(const std::filesystem::path& path, const ClassReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "class,precision,recall,f1,support\n";
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const ClassMetrics& m = report.classes[k];
    out << fmt::format("{},{:.6f},{:.6f},{:.6f},{}\n", class_name(static_cast<DrClass>(k)), m.precision, m.recall, m.f1,
                       m.support);
  }
  out << fmt::format("accuracy,,,{:.6f},{}\n", report.accuracy, report.total);
  if (!out) throw DataError("failed writing " + path.string());
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "true\\predicted";
  for (std::size_t k = 0; k < kNumClasses; ++k) out << ',' << class_name(static_cast<DrClass>(k));
  out << '\n';
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    out << class_name(static_cast<DrClass>(t));
    for (std::size_t p = 0; p < kNumClasses; ++p) out << ',' << cm.counts()[t][p];
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

ConfusionMatrix read_confusion_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty confusion matrix file");
  ConfusionMatrix::Counts counts{};
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    if (!std::getline(in, line)) throw DataError(fmt::format("{}: expected {} rows", path.string(), kNumClasses));
    std::stringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    if (cell != class_name(static_cast<DrClass>(t)))
      throw DataError(fmt::format("{}: row {} should be {}, got '{}'", path.string(), t + 1,
                                  class_name(static_cast<DrClass>(t)), cell));
    for (std::size_t p = 0; p < kNumClasses; ++p) {
      if (!std::getline(row, cell, ',')) throw DataError(fmt::format("{}: row {} is short", path.string(), t + 1));
      try {
        std::size_t used = 0;
        const long long v = std::stoll(cell, &used);
        if (v < 0 || used != cell.size()) throw std::invalid_argument("negative");
        counts[t][p] = static_cast<std::uint64_t>(v);
      } catch (const std::exception&) {
        throw DataError(fmt::format("{}: bad count '{}' in row {}", path.string(), cell, t + 1));
      }
    }
  }
  return ConfusionMatrix(counts);
}

}  // namespace drnet
