#pragma once

// Online stochastic augmentation of normalized single-channel images.

#include <cstdint>

#include "drnet/image.hpp"
#include "drnet/rng.hpp"

namespace drnet {

struct AugmentConfig {
  double rotation_max = 20.0;  // degrees
  double shift_max = 0.2;      // fraction of width / height
  double shear_max = 10.0;     // degrees
  double zoom_max = 0.2;       // zoom drawn from [1 - zoom_max, 1 + zoom_max]
  bool hflip = true;
  double brightness_min = 0.8;
  double brightness_max = 1.2;

  /// Throws ConfigError on negative ranges, zoom_max >= 1 or a bad brightness interval.
  void validate() const;
  /// All ranges zero and flipping off.
  static AugmentConfig none();
};

/// Forward warp about the image center: p' = R * Sh * Z * F * (p - c) + c + shift.
/// Positive rotation turns the image counter-clockwise on screen.
struct AffineParams {
  double rotation_deg = 0.0;
  double shear_deg = 0.0;
  double zoom = 1.0;
  double shift_x = 0.0;  // pixels, positive moves content right
  double shift_y = 0.0;  // pixels, positive moves content down
  bool flip = false;

  bool is_identity() const;
};

struct AugmentParams {
  AffineParams affine;
  double brightness = 1.0;
};

/// Draws every parameter uniformly from its symmetric range. The number of
/// draws is fixed, so streams stay aligned whatever the config.
AugmentParams sample_params(const AugmentConfig& config, RngStream& rng, std::size_t width, std::size_t height);

/// Inverse-mapped bilinear warp; samples outside the source read as -1.
NormalizedImage apply_affine(const NormalizedImage& img, const AffineParams& params);

/// out = clamp(((in + 1) / 2 * factor) * 2 - 1, -1, 1)
NormalizedImage apply_brightness(const NormalizedImage& img, double factor);

/// Random stream for one image in one epoch.
RngStream augment_stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

NormalizedImage augment(const NormalizedImage& img, const AugmentConfig& config, RngStream& rng);

}  // namespace drnet
