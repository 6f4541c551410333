#include "drnet/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "drnet/error.hpp"
#include "drnet/rng.hpp"

namespace fs = std::filesystem;

namespace drnet {

std::array<std::size_t, kNumClasses> counts_for_fractions(std::size_t total,
                                                           const std::array<double, kNumClasses>& fractions) {
  const double sum = std::accumulate(fractions.begin(), fractions.end(), 0.0);
  if (!(sum > 0.0)) throw ConfigError("class fractions must have a positive sum");
  std::array<std::size_t, kNumClasses> out{};
  std::array<double, kNumClasses> rem{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (fractions[k] < 0) throw ConfigError("class fractions must be non-negative");
    const double exact = fractions[k] / sum * static_cast<double>(total);
    out[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - std::floor(exact);
    assigned += out[k];
  }
  std::array<std::size_t, kNumClasses> order{};
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % kNumClasses, ++assigned) ++out[order[i]];
  return out;
}

std::vector<DrClass> labels_with_counts(const std::array<std::size_t, kNumClasses>& counts) {
  std::vector<DrClass> out;
  for (std::size_t k = 0; k < kNumClasses; ++k) out.insert(out.end(), counts[k], static_cast<DrClass>(k));
  return out;
}

namespace {

// Fraction of a pixel covered by a shape, from a 4x4 grid of sub-samples.
template <typename Inside>
double coverage(std::size_t x, std::size_t y, Inside inside) {
  int hits = 0;
  for (int sy = 0; sy < 4; ++sy)
    for (int sx = 0; sx < 4; ++sx)
      if (inside(static_cast<double>(x) + (sx + 0.5) / 4.0, static_cast<double>(y) + (sy + 0.5) / 4.0)) ++hits;
  return hits / 16.0;
}

template <typename Inside>
NormalizedImage render(std::size_t size, double intensity, double noise, RngStream& rng, Inside inside) {
  NormalizedImage img(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double c = coverage(x, y, inside);
      const double v = -1.0 + c * (intensity + 1.0) + (noise > 0 ? rng.normal(0.0, noise) : 0.0);
      img.at(y, x) = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
  return img;
}

bool in_triangle(double px, double py, double cx, double cy, double r) {
  // Upward equilateral triangle inscribed in a circle of radius r.
  const double ax = cx, ay = cy - r;
  const double bx = cx - r * std::sqrt(3.0) / 2.0, by = cy + r / 2.0;
  const double qx = cx + r * std::sqrt(3.0) / 2.0, qy = by;
  auto edge = [](double x0, double y0, double x1, double y1, double x, double y) {
    return (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
  };
  const double e0 = edge(ax, ay, bx, by, px, py), e1 = edge(bx, by, qx, qy, px, py), e2 = edge(qx, qy, ax, ay, px, py);
  return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
}

}  // namespace

LabeledSet make_shapes_dataset(const ShapesOptions& o) {
  if (o.size < 16) throw ConfigError("shapes dataset needs images of at least 16x16");
  LabeledSet set;
  set.labels = labels_with_counts(counts_for_fractions(o.count, o.fractions));
  const double s = static_cast<double>(o.size) / 32.0;
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    RngStream rng(o.seed, RngStream::mix({0x7368617065ull, i}));
    const double cx = static_cast<double>(o.size) / 2.0 + rng.uniform(-3.0, 3.0) * s;
    const double cy = static_cast<double>(o.size) / 2.0 + rng.uniform(-3.0, 3.0) * s;
    const double r = rng.uniform(7.0, 11.0) * s;
    const double intensity = rng.uniform(0.3, 1.0);
    std::function<bool(double, double)> inside;
    switch (set.labels[i]) {
      case DrClass::NoDR:
        inside = [=](double x, double y) { return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r; };
        break;
      case DrClass::Mild: {
        const double h = r * 0.85;
        inside = [=](double x, double y) { return std::abs(x - cx) <= h && std::abs(y - cy) <= h; };
        break;
      }
      case DrClass::Moderate: {
        const double inner = r * 0.55;
        inside = [=](double x, double y) {
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          return d2 <= r * r && d2 >= inner * inner;
        };
        break;
      }
      case DrClass::Severe: {
        const double arm = r * 0.3;
        inside = [=](double x, double y) {
          const double dx = std::abs(x - cx), dy = std::abs(y - cy);
          return (dx <= arm && dy <= r) || (dy <= arm && dx <= r);
        };
        break;
      }
      case DrClass::Proliferative:
        inside = [=](double x, double y) { return in_triangle(x, y, cx, cy, r * 1.1); };
        break;
    }
    set.images.push_back(render(o.size, intensity, o.noise, rng, inside));
  }
  return set;
}

std::vector<NormalizedImage> make_disc_ring_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<NormalizedImage> out;
  const double s = static_cast<double>(size) / 32.0;
  for (std::size_t i = 0; i < count; ++i) {
    RngStream rng(seed, RngStream::mix({0x6469736bull, i}));
    const double cx = static_cast<double>(size) / 2.0 + rng.uniform(-2.0, 2.0) * s;
    const double cy = static_cast<double>(size) / 2.0 + rng.uniform(-2.0, 2.0) * s;
    const double r = rng.uniform(6.0, 12.0) * s;
    const double intensity = rng.uniform(0.2, 1.0);
    const bool ring = i % 2 == 1;
    const double inner = ring ? r * rng.uniform(0.5, 0.7) : 0.0;
    out.push_back(render(size, intensity, 0.0, rng, [=](double x, double y) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      return d2 <= r * r && d2 >= inner * inner;
    }));
  }
  return out;
}

RasterImage make_disc_image(std::size_t width, std::size_t height, double cx, double cy, double radius,
                            std::uint8_t value) {
  RasterImage img(width, height, 1);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      if (dx * dx + dy * dy <= radius * radius) img.at(y, x) = value;
    }
  return img;
}

RasterImage make_ramp_image(std::size_t width, std::size_t height, std::uint8_t lo, std::uint8_t hi) {
  RasterImage img(width, height, 1);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double t = width > 1 ? static_cast<double>(x) / static_cast<double>(width - 1) : 0.0;
      img.at(y, x) = static_cast<std::uint8_t>(std::lround(lo + t * (hi - lo)));
    }
  return img;
}

RasterImage make_fundus_image(std::size_t width, std::size_t height, std::uint64_t seed) {
  RngStream rng(seed, 0x66756e64ull);
  RasterImage img(width, height, 3);
  const double cx = static_cast<double>(width) / 2.0 + rng.uniform(-0.03, 0.03) * static_cast<double>(width);
  const double cy = static_cast<double>(height) / 2.0 + rng.uniform(-0.03, 0.03) * static_cast<double>(height);
  const double r = 0.45 * static_cast<double>(std::min(width, height));
  const double disc_angle = rng.uniform(-0.4, 0.4);
  const double ox = cx + 0.45 * r * std::cos(disc_angle), oy = cy + 0.45 * r * std::sin(disc_angle);
  const double od = 0.12 * r;
  struct Vessel {
    double angle, curve, width;
  };
  std::vector<Vessel> vessels;
  for (int v = 0; v < 6; ++v)
    vessels.push_back({rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(-1.5, 1.5), rng.uniform(0.008, 0.018) * r});
  const double brightness = rng.uniform(0.8, 1.1);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double d = std::sqrt(dx * dx + dy * dy) / r;
      if (d > 1.0) continue;
      double shade = brightness * (1.0 - 0.45 * d * d);
      const double odx = static_cast<double>(x) - ox, ody = static_cast<double>(y) - oy;
      const double od_d = std::sqrt(odx * odx + ody * ody);
      if (od_d < od) shade += 0.5 * (1.0 - od_d / od);
      // Vessels: curved rays leaving the optic disc.
      const double angle = std::atan2(ody, odx);
      for (const auto& v : vessels) {
        const double expected = v.angle + v.curve * od_d / r;
        double delta = std::remainder(angle - expected, 2.0 * std::numbers::pi);
        const double dist = std::abs(delta) * od_d;
        if (od_d > od && dist < v.width) shade *= 0.65;
      }
      const double noise = rng.normal(0.0, 0.01);
      img.at(y, x, 0) = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * (0.85 * shade + noise)), 0L, 255L));
      img.at(y, x, 1) = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * (0.45 * shade + noise)), 0L, 255L));
      img.at(y, x, 2) = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * (0.2 * shade + noise)), 0L, 255L));
    }
  return img;
}

DatasetManifest write_labeled_set(const fs::path& root, const LabeledSet& set) {
  DatasetManifest m{root, {}};
  std::array<std::size_t, kNumClasses> next{};
  for (std::size_t i = 0; i < set.size(); ++i) {
    const DrClass c = set.labels[i];
    const fs::path dir = root / class_directory(c);
    fs::create_directories(dir);
    const fs::path rel = fs::path(class_directory(c)) / fmt::format("img_{:05}.png", next[static_cast<std::size_t>(c)]++);
    write_image(root / rel, denormalize(set.images[i]));
    m.records.push_back({rel, c});
  }
  return m;
}

}  // namespace drnet
