#pragma once

// Generated datasets and image fixtures for tests, demos and desk-scale runs.

#include <array>
#include <cstdint>
#include <filesystem>

#include "drnet/dataset.hpp"

namespace drnet {

struct ShapesOptions {
  std::size_t count = 2500;
  std::size_t size = 32;
  std::array<double, kNumClasses> fractions{0.60, 0.15, 0.15, 0.05, 0.05};
  std::uint64_t seed = 0;
  double noise = 0.05;  // background noise standard deviation
};

/// One shape per class on a black background: filled disc, filled square,
/// ring, plus sign, triangle. Position, size and intensity vary per image.
/// Images are ordered by class.
LabeledSet make_shapes_dataset(const ShapesOptions& options);

/// Splits `total` by `fractions` with largest-remainder rounding.
std::array<std::size_t, kNumClasses> counts_for_fractions(std::size_t total,
                                                           const std::array<double, kNumClasses>& fractions);
/// counts[k] copies of class k, in class order.
std::vector<DrClass> labels_with_counts(const std::array<std::size_t, kNumClasses>& counts);

/// Half filled discs, half rings, with random radius, offset and brightness.
std::vector<NormalizedImage> make_disc_ring_dataset(std::size_t count, std::size_t size, std::uint64_t seed);

/// Black grayscale canvas with a filled disc; pixels within `radius` of (cx, cy) get `value`.
RasterImage make_disc_image(std::size_t width, std::size_t height, double cx, double cy, double radius,
                            std::uint8_t value);
/// Horizontal ramp from lo (left column) to hi (right column).
RasterImage make_ramp_image(std::size_t width, std::size_t height, std::uint8_t lo, std::uint8_t hi);
/// RGB fundus-like image: dark surround, shaded retina disc, optic disc and vessels.
RasterImage make_fundus_image(std::size_t width, std::size_t height, std::uint64_t seed);

/// Writes each image as PNG under root/<class directory>/img_NNNNN.png.
DatasetManifest write_labeled_set(const std::filesystem::path& root, const LabeledSet& set);

}  // namespace drnet
