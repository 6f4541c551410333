#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace drnet {

/// Decoded 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct RasterImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> data;

  RasterImage() = default;
  RasterImage(std::size_t width, std::size_t height, std::size_t channels, std::uint8_t fill = 0);

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c = 0) { return data[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return data[(y * width + x) * channels + c];
  }
  bool valid() const { return width > 0 && height > 0 && data.size() == width * height * channels; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

/// Single-channel image with samples in [-1, 1].
struct NormalizedImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> data;

  NormalizedImage() = default;
  NormalizedImage(std::size_t width, std::size_t height, float fill = -1.0f)
      : width(width), height(height), data(width * height, fill) {}

  float& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return data[y * width + x]; }

  friend bool operator==(const NormalizedImage&, const NormalizedImage&) = default;
};

/// Reads PNG, binary PGM (P5) or binary PPM (P6), detected by content.
/// Throws DataError naming the path on failure.
RasterImage read_image(const std::filesystem::path& path);
/// PNG for a ".png" extension, PGM/PPM otherwise.
void write_image(const std::filesystem::path& path, const RasterImage& img);
void write_png(const std::filesystem::path& path, const RasterImage& img);
void write_pnm(const std::filesystem::path& path, const RasterImage& img);

}  // namespace drnet
