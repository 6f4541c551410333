#pragma once

// Dataset manifests, stratified splitting and image loading.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "drnet/classifier.hpp"
#include "drnet/imageproc.hpp"

namespace drnet {

struct ManifestRecord {
  std::filesystem::path path;  // relative to the manifest root
  DrClass label;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestRecord> records;

  std::size_t size() const { return records.size(); }
  std::array<std::size_t, kNumClasses> counts() const;
  std::vector<DrClass> labels() const;
};

/// Reads either `<root>/manifest.csv` (header `path,label`) or one
/// subdirectory per class named 0_no_dr, 1_mild, 2_moderate, 3_severe,
/// 4_proliferative. Records are sorted by path. Throws DataError for an
/// empty root, an unknown class directory, a bad CSV row or a missing file.
DatasetManifest load_manifest(const std::filesystem::path& root);
DatasetManifest load_manifest_csv(const std::filesystem::path& csv, const std::filesystem::path& root);
/// Writes `path,label` rows for the manifest.
void write_manifest_csv(const std::filesystem::path& csv, const DatasetManifest& manifest);

/// True for .png, .pgm, .ppm and .pnm (case-insensitive).
bool is_image_file(const std::filesystem::path& path);

struct ClassStats {
  std::array<std::size_t, kNumClasses> counts{};
  std::array<double, kNumClasses> fractions{};
  std::size_t total = 0;
};

/// Throws DataError for an empty label list.
ClassStats class_stats(const std::vector<DrClass>& labels);
ClassStats class_stats(const DatasetManifest& manifest);

enum class Subset : std::uint8_t { Train, Val, Test };

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitAssignment {
  std::vector<Subset> subset;  // one entry per record
  std::uint64_t seed = 0;

  std::vector<std::size_t> indices(Subset which) const;
  std::size_t count(Subset which) const;
};

/// Per class: shuffle with a seeded stream, then slice off test and
/// validation images. The overall test size is round(test * N); it is
/// apportioned over classes by largest remainder (ties to the lower class
/// index), and likewise for validation, so every class stays within one
/// image of its exact share. Classes with 1 or 2 images are rejected; empty
/// classes are allowed.
SplitAssignment stratified_split(const std::vector<DrClass>& labels, SplitFractions fractions, std::uint64_t seed);
SplitAssignment stratified_split(const DatasetManifest& manifest, SplitFractions fractions, std::uint64_t seed);

/// Runs fn(i) for i in [0, n) on up to `threads` workers with contiguous
/// chunks. Exceptions are rethrown (lowest index first) after all workers join.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

struct LabeledSet {
  std::vector<NormalizedImage> images;
  std::vector<DrClass> labels;

  std::size_t size() const { return images.size(); }
};

/// Decodes and preprocesses the chosen records. Throws DataError naming the first file that fails.
LabeledSet load_images(const DatasetManifest& manifest, const std::vector<std::size_t>& indices,
                       const PreprocessConfig& config, std::size_t threads = 1);

}  // namespace drnet
