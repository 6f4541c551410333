#pragma once

// Fundus preprocessing: grayscale, circle crop, median background
// subtraction, gamma correction, CLAHE, resizing and [-1, 1] normalization.
// Every function here is pure and deterministic.

#include <cstdint>

#include "drnet/image.hpp"

namespace drnet {

enum class MedianMode {
  Subtract,  // out = clamp(in - median(in) + 128)
  Filter,    // out = 3x3 median(in)
};

struct ClaheGrid {
  std::size_t rows = 8;
  std::size_t cols = 8;
};

struct PreprocessConfig {
  /// false: grayscale -> resize -> normalize only (for non-fundus data).
  bool fundus = true;
  std::uint8_t crop_threshold = 10;
  MedianMode median_mode = MedianMode::Subtract;
  int median_window = 31;
  double gamma = 1.2;
  ClaheGrid clahe_tiles{};
  double clahe_clip = 2.0;
  std::size_t output_size = 224;
};

/// luma = round(0.299 R + 0.587 G + 0.114 B); single-channel input passes through.
RasterImage to_grayscale(const RasterImage& img);

/// Crops to the square around the bounding box of samples above `threshold`
/// and zeroes everything outside the inscribed circle. Throws DataError when
/// no sample exceeds the threshold.
RasterImage circle_crop(const RasterImage& img, std::uint8_t threshold = 10);

/// Zeroes samples outside the circle inscribed in the image (centered, diameter = min(width, height)).
void apply_circle_mask(RasterImage& img);

/// Median over a window x window neighbourhood with border replication.
RasterImage median_filter(const RasterImage& img, int window);

/// Subtract mode uses `window` as the background window; filter mode always uses 3x3.
RasterImage median_subtract(const RasterImage& img, int window, MedianMode mode = MedianMode::Subtract);

/// out = round(255 * (in / 255)^gamma)
RasterImage gamma_correct(const RasterImage& img, double gamma);

/// Contrast-limited adaptive histogram equalization. Histogram bins are
/// clipped at clip_limit x (tile area / 256), the excess is spread uniformly
/// over all bins, and per-tile mappings are blended bilinearly between tile
/// centers.
RasterImage clahe(const RasterImage& img, ClaheGrid tiles = {}, double clip_limit = 2.0);

/// Bilinear resampling with pixel-center alignment and edge clamping.
RasterImage resize(const RasterImage& img, std::size_t width, std::size_t height);
NormalizedImage resize(const NormalizedImage& img, std::size_t width, std::size_t height);

/// in / 127.5 - 1
NormalizedImage normalize_pm1(const RasterImage& img);
/// Inverse of normalize_pm1, rounded and clamped to [0, 255].
RasterImage denormalize(const NormalizedImage& img);

/// Full chain in fixed order: grayscale, circle crop, median subtraction,
/// gamma, CLAHE, resize, normalize. The circle mask is re-applied after the
/// median stage and after resizing so the background stays black.
NormalizedImage preprocess_chain(const RasterImage& img, const PreprocessConfig& config = {});

}  // namespace drnet
