#include "drnet/imageproc.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>

#include "drnet/error.hpp"

namespace drnet {
namespace {

void require_gray(const RasterImage& img, const char* what) {
  if (!img.valid()) throw DataError(std::string(what) + ": invalid image");
  if (img.channels != 1) throw std::invalid_argument(std::string(what) + " expects a grayscale image");
}

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

RasterImage to_grayscale(const RasterImage& img) {
  if (!img.valid()) throw DataError("to_grayscale: invalid image");
  if (img.channels == 1) return img;
  if (img.channels != 3) throw std::invalid_argument(fmt::format("to_grayscale: unsupported channel count {}", img.channels));
  RasterImage out(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.width * img.height; ++i) {
    const double luma = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] + 0.114 * img.data[3 * i + 2];
    out.data[i] = clamp_u8(luma);
  }
  return out;
}

void apply_circle_mask(RasterImage& img) {
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double r = static_cast<double>(std::min(img.width, img.height)) / 2.0;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      if (dx * dx + dy * dy > r * r)
        for (std::size_t c = 0; c < img.channels; ++c) img.at(y, x, c) = 0;
    }
}

RasterImage circle_crop(const RasterImage& img, std::uint8_t threshold) {
  require_gray(img, "circle_crop");
  std::size_t x0 = img.width, x1 = 0, y0 = img.height, y1 = 0;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      if (img.at(y, x) > threshold) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  if (x0 > x1) throw DataError("circle_crop: no foreground above threshold");
  const std::size_t w = x1 - x0 + 1, h = y1 - y0 + 1, side = std::max(w, h);
  const long ox = static_cast<long>(x0) - static_cast<long>((side - w) / 2);
  const long oy = static_cast<long>(y0) - static_cast<long>((side - h) / 2);
  RasterImage out(side, side, 1);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const long sx = ox + static_cast<long>(x), sy = oy + static_cast<long>(y);
      if (sx >= 0 && sy >= 0 && sx < static_cast<long>(img.width) && sy < static_cast<long>(img.height))
        out.at(y, x) = img.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
    }
  apply_circle_mask(out);
  return out;
}

RasterImage median_filter(const RasterImage& img, int window) {
  require_gray(img, "median_filter");
  if (window < 1 || window % 2 == 0) throw std::invalid_argument(fmt::format("median window must be odd and positive, got {}", window));
  const long half = window / 2;
  const long w = static_cast<long>(img.width), h = static_cast<long>(img.height);
  const std::size_t rank = static_cast<std::size_t>(window) * static_cast<std::size_t>(window) / 2;
  auto sample = [&](long y, long x) { return img.data[std::clamp(y, 0L, h - 1) * w + std::clamp(x, 0L, w - 1)]; };
  RasterImage out(img.width, img.height, 1);
  // Sliding-histogram median: the window histogram is updated by one column per step.
  for (long y = 0; y < h; ++y) {
    std::array<std::size_t, 256> hist{};
    for (long dy = -half; dy <= half; ++dy)
      for (long dx = -half; dx <= half; ++dx) ++hist[sample(y + dy, dx)];
    for (long x = 0; x < w; ++x) {
      if (x > 0)
        for (long dy = -half; dy <= half; ++dy) {
          --hist[sample(y + dy, x - half - 1)];
          ++hist[sample(y + dy, x + half)];
        }
      std::size_t seen = 0;
      int v = 0;
      for (; v < 256; ++v) {
        seen += hist[v];
        if (seen > rank) break;
      }
      out.data[y * w + x] = static_cast<std::uint8_t>(v);
    }
  }
  return out;
}

RasterImage median_subtract(const RasterImage& img, int window, MedianMode mode) {
  if (mode == MedianMode::Filter) return median_filter(img, 3);
  if (window < 3 || window % 2 == 0)
    throw std::invalid_argument(fmt::format("median subtraction window must be odd and >= 3, got {}", window));
  const RasterImage background = median_filter(img, window);
  RasterImage out(img.width, img.height, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>(std::clamp(int(img.data[i]) - int(background.data[i]) + 128, 0, 255));
  return out;
}

RasterImage gamma_correct(const RasterImage& img, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument(fmt::format("gamma must be positive, got {}", gamma));
  if (!img.valid()) throw DataError("gamma_correct: invalid image");
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) lut[v] = clamp_u8(255.0 * std::pow(v / 255.0, gamma));
  RasterImage out = img;
  for (auto& v : out.data) v = lut[v];
  return out;
}

RasterImage clahe(const RasterImage& img, ClaheGrid tiles, double clip_limit) {
  require_gray(img, "clahe");
  if (tiles.rows < 1 || tiles.cols < 1) throw std::invalid_argument("clahe: tile grid must be at least 1x1");
  if (img.width < tiles.cols || img.height < tiles.rows)
    throw std::invalid_argument(fmt::format("clahe: image {}x{} smaller than tile grid {}x{}", img.width, img.height,
                                            tiles.cols, tiles.rows));
  if (!(clip_limit > 0.0)) throw std::invalid_argument("clahe: clip limit must be positive");

  auto bound = [](std::size_t i, std::size_t n, std::size_t extent) { return i * extent / n; };
  std::vector<std::array<double, 256>> luts(tiles.rows * tiles.cols);
  for (std::size_t ty = 0; ty < tiles.rows; ++ty)
    for (std::size_t tx = 0; tx < tiles.cols; ++tx) {
      const std::size_t y0 = bound(ty, tiles.rows, img.height), y1 = bound(ty + 1, tiles.rows, img.height);
      const std::size_t x0 = bound(tx, tiles.cols, img.width), x1 = bound(tx + 1, tiles.cols, img.width);
      std::array<double, 256> hist{};
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) hist[img.at(y, x)] += 1.0;
      const double area = static_cast<double>((y1 - y0) * (x1 - x0));
      const double limit = std::max(1.0, clip_limit * area / 256.0);
      double excess = 0.0;
      for (double& b : hist)
        if (b > limit) {
          excess += b - limit;
          b = limit;
        }
      const double share = excess / 256.0;
      auto& lut = luts[ty * tiles.cols + tx];
      double cdf = 0.0;
      for (int v = 0; v < 256; ++v) {
        cdf += hist[v] + share;
        lut[v] = std::min(255.0, cdf * 255.0 / area);
      }
    }

  // Tile centers; pixels beyond the outer centers use the edge tile only.
  auto center = [&](std::size_t i, std::size_t n, std::size_t extent) {
    return (static_cast<double>(bound(i, n, extent)) + static_cast<double>(bound(i + 1, n, extent)) - 1.0) / 2.0;
  };
  auto locate = [&](double p, std::size_t n, std::size_t extent, std::size_t& lo, std::size_t& hi, double& t) {
    if (n == 1 || p <= center(0, n, extent)) {
      lo = hi = 0;
      t = 0.0;
      return;
    }
    if (p >= center(n - 1, n, extent)) {
      lo = hi = n - 1;
      t = 0.0;
      return;
    }
    lo = 0;
    while (center(lo + 1, n, extent) <= p) ++lo;
    hi = lo + 1;
    const double c0 = center(lo, n, extent), c1 = center(hi, n, extent);
    t = (p - c0) / (c1 - c0);
  };

  RasterImage out(img.width, img.height, 1);
  for (std::size_t y = 0; y < img.height; ++y) {
    std::size_t ty0, ty1;
    double wy;
    locate(static_cast<double>(y), tiles.rows, img.height, ty0, ty1, wy);
    for (std::size_t x = 0; x < img.width; ++x) {
      std::size_t tx0, tx1;
      double wx;
      locate(static_cast<double>(x), tiles.cols, img.width, tx0, tx1, wx);
      const std::uint8_t v = img.at(y, x);
      const double a = luts[ty0 * tiles.cols + tx0][v], b = luts[ty0 * tiles.cols + tx1][v];
      const double c = luts[ty1 * tiles.cols + tx0][v], d = luts[ty1 * tiles.cols + tx1][v];
      const double top = a + (b - a) * wx, bottom = c + (d - c) * wx;
      out.at(y, x) = clamp_u8(top + (bottom - top) * wy);
    }
  }
  return out;
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double t;
};

std::vector<Tap> bilinear_taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, src - 1);
    taps[i] = {i0, i1, s - static_cast<double>(i0)};
  }
  return taps;
}

template <typename Get, typename Put>
void resample(std::size_t sw, std::size_t sh, std::size_t dw, std::size_t dh, std::size_t channels, Get get, Put put) {
  const auto xt = bilinear_taps(sw, dw);
  const auto yt = bilinear_taps(sh, dh);
  for (std::size_t y = 0; y < dh; ++y)
    for (std::size_t x = 0; x < dw; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        const Tap& tx = xt[x];
        const Tap& ty = yt[y];
        const double top = get(ty.i0, tx.i0, c) + (get(ty.i0, tx.i1, c) - get(ty.i0, tx.i0, c)) * tx.t;
        const double bot = get(ty.i1, tx.i0, c) + (get(ty.i1, tx.i1, c) - get(ty.i1, tx.i0, c)) * tx.t;
        put(y, x, c, top + (bot - top) * ty.t);
      }
}

}  // namespace

RasterImage resize(const RasterImage& img, std::size_t width, std::size_t height) {
  if (!img.valid()) throw DataError("resize: invalid image");
  if (width == 0 || height == 0) throw std::invalid_argument("resize: target must be at least 1x1");
  RasterImage out(width, height, img.channels);
  resample(
      img.width, img.height, width, height, img.channels,
      [&](std::size_t y, std::size_t x, std::size_t c) { return static_cast<double>(img.at(y, x, c)); },
      [&](std::size_t y, std::size_t x, std::size_t c, double v) { out.at(y, x, c) = clamp_u8(v); });
  return out;
}

NormalizedImage resize(const NormalizedImage& img, std::size_t width, std::size_t height) {
  if (img.width == 0 || img.height == 0) throw DataError("resize: empty image");
  if (width == 0 || height == 0) throw std::invalid_argument("resize: target must be at least 1x1");
  NormalizedImage out(width, height);
  resample(
      img.width, img.height, width, height, 1,
      [&](std::size_t y, std::size_t x, std::size_t) { return static_cast<double>(img.at(y, x)); },
      [&](std::size_t y, std::size_t x, std::size_t, double v) {
        out.at(y, x) = static_cast<float>(std::clamp(v, -1.0, 1.0));
      });
  return out;
}

NormalizedImage normalize_pm1(const RasterImage& img) {
  require_gray(img, "normalize_pm1");
  NormalizedImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = static_cast<float>(img.data[i] / 127.5 - 1.0);
  return out;
}

RasterImage denormalize(const NormalizedImage& img) {
  RasterImage out(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = clamp_u8((static_cast<double>(img.data[i]) + 1.0) * 127.5);
  return out;
}

NormalizedImage preprocess_chain(const RasterImage& img, const PreprocessConfig& config) {
  const std::size_t size = config.output_size;
  RasterImage gray = to_grayscale(img);
  if (!config.fundus) return normalize_pm1(resize(gray, size, size));
  RasterImage cropped = circle_crop(gray, config.crop_threshold);
  RasterImage denoised = median_subtract(cropped, config.median_window, config.median_mode);
  apply_circle_mask(denoised);
  RasterImage corrected = gamma_correct(denoised, config.gamma);
  RasterImage equalized = clahe(corrected, config.clahe_tiles, config.clahe_clip);
  RasterImage resized = resize(equalized, size, size);
  apply_circle_mask(resized);
  return normalize_pm1(resized);
}

}  // namespace drnet
