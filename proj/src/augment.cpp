#include "drnet/augment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "drnet/error.hpp"

namespace drnet {

void AugmentConfig::validate() const {
  if (rotation_max < 0 || shift_max < 0 || shear_max < 0 || zoom_max < 0)
    throw ConfigError("augment ranges must be non-negative");
  if (zoom_max >= 1.0) throw ConfigError(fmt::format("augment.zoom_max must be < 1, got {}", zoom_max));
  if (shear_max >= 90.0) throw ConfigError(fmt::format("augment.shear_max must be < 90 degrees, got {}", shear_max));
  if (!(brightness_min > 0.0) || brightness_max < brightness_min)
    throw ConfigError(fmt::format("augment brightness range [{}, {}] is invalid", brightness_min, brightness_max));
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.rotation_max = c.shift_max = c.shear_max = c.zoom_max = 0.0;
  c.hflip = false;
  c.brightness_min = c.brightness_max = 1.0;
  return c;
}

bool AffineParams::is_identity() const {
  return rotation_deg == 0.0 && shear_deg == 0.0 && zoom == 1.0 && shift_x == 0.0 && shift_y == 0.0 && !flip;
}

AugmentParams sample_params(const AugmentConfig& config, RngStream& rng, std::size_t width, std::size_t height) {
  config.validate();
  AugmentParams p;
  p.affine.rotation_deg = rng.uniform(-config.rotation_max, config.rotation_max);
  p.affine.shift_x = rng.uniform(-config.shift_max, config.shift_max) * static_cast<double>(width);
  p.affine.shift_y = rng.uniform(-config.shift_max, config.shift_max) * static_cast<double>(height);
  p.affine.shear_deg = rng.uniform(-config.shear_max, config.shear_max);
  p.affine.zoom = rng.uniform(1.0 - config.zoom_max, 1.0 + config.zoom_max);
  const bool coin = rng.bernoulli(0.5);
  p.affine.flip = config.hflip && coin;
  p.brightness = rng.uniform(config.brightness_min, config.brightness_max);
  // uniform(-0, 0) may yield -0.0; normalise so zero ranges give exact identity params.
  if (p.affine.rotation_deg == 0.0) p.affine.rotation_deg = 0.0;
  if (p.affine.shift_x == 0.0) p.affine.shift_x = 0.0;
  if (p.affine.shift_y == 0.0) p.affine.shift_y = 0.0;
  if (p.affine.shear_deg == 0.0) p.affine.shear_deg = 0.0;
  return p;
}

NormalizedImage apply_affine(const NormalizedImage& img, const AffineParams& params) {
  if (!(params.zoom > 0.0)) throw std::invalid_argument(fmt::format("zoom must be positive, got {}", params.zoom));
  if (params.is_identity()) return img;
  const double deg = std::numbers::pi / 180.0;
  const double cr = std::cos(params.rotation_deg * deg), sr = std::sin(params.rotation_deg * deg);
  const double sh = std::tan(params.shear_deg * deg);
  const double f = params.flip ? -1.0 : 1.0;
  // M = R * Sh * Z * F with R = [cr sr; -sr cr], Sh = [1 sh; 0 1], Z = zoom * I, F = diag(f, 1).
  const double z = params.zoom;
  const double m00 = cr * z * f, m01 = (cr * sh + sr) * z;
  const double m10 = -sr * z * f, m11 = (-sr * sh + cr) * z;
  const double det = m00 * m11 - m01 * m10;
  const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;

  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const long w = static_cast<long>(img.width), h = static_cast<long>(img.height);
  auto read = [&](long y, long x) -> double {
    if (x < 0 || y < 0 || x >= w || y >= h) return -1.0;
    return img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };

  NormalizedImage out(img.width, img.height);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx - params.shift_x;
      const double dy = static_cast<double>(y) - cy - params.shift_y;
      const double sx = i00 * dx + i01 * dy + cx;
      const double sy = i10 * dx + i11 * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      const double tx = sx - fx, ty = sy - fy;
      double v = read(y0, x0);
      if (tx != 0.0 || ty != 0.0) {
        const double top = v + (read(y0, x0 + 1) - v) * tx;
        const double bottom = read(y0 + 1, x0) + (read(y0 + 1, x0 + 1) - read(y0 + 1, x0)) * tx;
        v = top + (bottom - top) * ty;
      }
      out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
  return out;
}

NormalizedImage apply_brightness(const NormalizedImage& img, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument(fmt::format("brightness factor must be positive, got {}", factor));
  if (factor == 1.0) return img;
  NormalizedImage out = img;
  for (float& v : out.data)
    v = static_cast<float>(std::clamp((static_cast<double>(v) + 1.0) / 2.0 * factor * 2.0 - 1.0, -1.0, 1.0));
  return out;
}

RngStream augment_stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  return RngStream(seed, RngStream::mix({seed, epoch, index}));
}

NormalizedImage augment(const NormalizedImage& img, const AugmentConfig& config, RngStream& rng) {
  const AugmentParams p = sample_params(config, rng, img.width, img.height);
  return apply_brightness(apply_affine(img, p.affine), p.brightness);
}

}  // namespace drnet
