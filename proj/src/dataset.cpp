#include "drnet/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

#include "drnet/error.hpp"
#include "drnet/rng.hpp"

namespace fs = std::filesystem;

namespace drnet {

std::array<std::size_t, kNumClasses> DatasetManifest::counts() const {
  std::array<std::size_t, kNumClasses> c{};
  for (const auto& r : records) ++c[static_cast<std::size_t>(r.label)];
  return c;
}

std::vector<DrClass> DatasetManifest::labels() const {
  std::vector<DrClass> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

namespace {

void sort_records(std::vector<ManifestRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const ManifestRecord& a, const ManifestRecord& b) { return a.path.generic_string() < b.path.generic_string(); });
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

DatasetManifest load_manifest_csv(const fs::path& csv, const fs::path& root) {
  std::ifstream in(csv);
  if (!in) throw DataError("cannot read manifest " + csv.string());
  DatasetManifest m{root, {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line_no == 1) {
      if (line != "path,label") throw DataError(fmt::format("{}: expected header 'path,label', got '{}'", csv.string(), line));
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw DataError(fmt::format("{}:{}: missing label", csv.string(), line_no));
    const std::string rel = trim(line.substr(0, comma));
    const std::string label = trim(line.substr(comma + 1));
    long value = -1;
    try {
      std::size_t used = 0;
      value = std::stol(label, &used);
      if (used != label.size()) value = -1;
    } catch (const std::exception&) {
    }
    if (value < 0 || value >= static_cast<long>(kNumClasses))
      throw DataError(fmt::format("{}:{}: label '{}' is not an integer 0-4", csv.string(), line_no, label));
    if (!fs::is_regular_file(root / rel)) throw DataError(fmt::format("{}:{}: missing file {}", csv.string(), line_no, (root / rel).string()));
    m.records.push_back({fs::path(rel), static_cast<DrClass>(value)});
  }
  if (m.records.empty()) throw DataError("manifest " + csv.string() + " lists no images");
  sort_records(m.records);
  return m;
}

DatasetManifest load_manifest(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  if (fs::is_regular_file(root / "manifest.csv")) return load_manifest_csv(root / "manifest.csv", root);
  DatasetManifest m{root, {}};
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    std::size_t k = 0;
    while (k < kNumClasses && class_directory(static_cast<DrClass>(k)) != name) ++k;
    if (k == kNumClasses) throw DataError("unknown class directory " + entry.path().string());
    for (const auto& file : fs::recursive_directory_iterator(entry.path())) {
      if (!file.is_regular_file() || !is_image_file(file.path())) continue;
      m.records.push_back({fs::relative(file.path(), root), static_cast<DrClass>(k)});
    }
  }
  if (m.records.empty()) throw DataError("no images found under " + root.string());
  sort_records(m.records);
  return m;
}

void write_manifest_csv(const fs::path& csv, const DatasetManifest& manifest) {
  std::ofstream out(csv);
  if (!out) throw DataError("cannot write " + csv.string());
  out << "path,label\n";
  for (const auto& r : manifest.records) out << r.path.generic_string() << ',' << static_cast<int>(r.label) << '\n';
  if (!out) throw DataError("failed writing " + csv.string());
}

ClassStats class_stats(const std::vector<DrClass>& labels) {
  if (labels.empty()) throw DataError("class_stats: empty dataset");
  ClassStats s;
  for (DrClass c : labels) ++s.counts[static_cast<std::size_t>(c)];
  s.total = labels.size();
  for (std::size_t k = 0; k < kNumClasses; ++k)
    s.fractions[k] = static_cast<double>(s.counts[k]) / static_cast<double>(s.total);
  return s;
}

ClassStats class_stats(const DatasetManifest& manifest) { return class_stats(manifest.labels()); }

std::vector<std::size_t> SplitAssignment::indices(Subset which) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < subset.size(); ++i)
    if (subset[i] == which) out.push_back(i);
  return out;
}

std::size_t SplitAssignment::count(Subset which) const {
  return static_cast<std::size_t>(std::count(subset.begin(), subset.end(), which));
}

namespace {

// Largest-remainder apportionment of round(fraction * total) over classes.
std::array<std::size_t, kNumClasses> apportion(const std::array<std::size_t, kNumClasses>& counts, double fraction) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  std::array<std::size_t, kNumClasses> out{};
  std::array<double, kNumClasses> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const double exact = fraction * static_cast<double>(counts[k]);
    out[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - std::floor(exact);
    assigned += out[k];
  }
  std::array<std::size_t, kNumClasses> order{};
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < target && i < kNumClasses; ++i) {
    if (counts[order[i]] == 0) continue;
    ++out[order[i]];
    ++assigned;
  }
  for (std::size_t k = 0; k < kNumClasses; ++k)
    if (counts[k] > 0 && out[k] == 0 && fraction > 0.0) out[k] = 1;
  return out;
}

}  // namespace

SplitAssignment stratified_split(const std::vector<DrClass>& labels, SplitFractions fractions, std::uint64_t seed) {
  if (fractions.train < 0 || fractions.val < 0 || fractions.test < 0 ||
      std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  if (labels.empty()) throw DataError("stratified_split: empty dataset");
  std::array<std::vector<std::size_t>, kNumClasses> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  std::array<std::size_t, kNumClasses> counts{};
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    counts[k] = members[k].size();
    if (counts[k] > 0 && counts[k] < 3)
      throw DataError(fmt::format("class {} has {} images; at least 3 are needed to split",
                                  class_name(static_cast<DrClass>(k)), counts[k]));
  }
  const auto test = apportion(counts, fractions.test);
  const auto val = apportion(counts, fractions.val);

  SplitAssignment split;
  split.seed = seed;
  split.subset.assign(labels.size(), Subset::Train);
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    auto& idx = members[k];
    RngStream rng(seed, RngStream::mix({0x73706c6974ull, k}));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const std::size_t n_test = std::min(test[k], idx.size());
    const std::size_t n_val = std::min(val[k], idx.size() - n_test);
    for (std::size_t i = 0; i < n_test; ++i) split.subset[idx[i]] = Subset::Test;
    for (std::size_t i = n_test; i < n_test + n_val; ++i) split.subset[idx[i]] = Subset::Val;
  }
  return split;
}

SplitAssignment stratified_split(const DatasetManifest& manifest, SplitFractions fractions, std::uint64_t seed) {
  return stratified_split(manifest.labels(), fractions, seed);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = n * t / threads, end = n * (t + 1) / threads;
    workers.emplace_back([&, t, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

LabeledSet load_images(const DatasetManifest& manifest, const std::vector<std::size_t>& indices,
                       const PreprocessConfig& config, std::size_t threads) {
  LabeledSet set;
  set.images.resize(indices.size());
  set.labels.resize(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t i) {
    const ManifestRecord& r = manifest.records.at(indices[i]);
    const fs::path full = manifest.root / r.path;
    try {
      set.images[i] = preprocess_chain(read_image(full), config);
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}: {}", full.string(), e.what()));
    }
    set.labels[i] = r.label;
  });
  return set;
}

}  // namespace drnet
