#include "rifenet/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "rifenet/errors.hpp"
#include "rifenet/seeding.hpp"

namespace rifenet {
namespace {

struct Shape {
  int kind;
  double cx, cy, radius, angle;

  // Pixel-centre membership test; the mask and the drawing both use it.
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * dx + s * dy, v = -s * dx + c * dy;
    switch (kind) {
      case kSquare: {
        const double a = 0.8 * radius;
        return std::abs(u) <= a && std::abs(v) <= a;
      }
      case kTriangle: {
        // Equilateral, circumradius = radius, apex at -v.
        const double r = radius;
        const double ax = 0, ay = -r;
        const double bx = -r * std::sqrt(3.0) / 2, by = r / 2;
        const double cx2 = r * std::sqrt(3.0) / 2, cy2 = r / 2;
        auto edge = [&](double x0, double y0, double x1, double y1) { return (x1 - x0) * (v - y0) - (y1 - y0) * (u - x0); };
        const double e0 = edge(ax, ay, bx, by), e1 = edge(bx, by, cx2, cy2), e2 = edge(cx2, cy2, ax, ay);
        return (e0 <= 0 && e1 <= 0 && e2 <= 0) || (e0 >= 0 && e1 >= 0 && e2 >= 0);
      }
      case kCross: {
        const double arm = radius / 3;
        return (std::abs(u) <= radius && std::abs(v) <= arm) || (std::abs(v) <= radius && std::abs(u) <= arm);
      }
      case kCircle:
        return u * u + v * v <= radius * radius;
    }
    return false;
  }
};

double color_distance(const float a[3], const float b[3]) {
  double d = 0;
  for (int c = 0; c < 3; ++c) d += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(d);
}

LabeledImage draw_one(int index, int size, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int kind = index % 4 + 1;

  LabeledImage item;
  item.id = "syn_" + std::to_string(index);
  item.image = Image(size, size);
  item.labels = LabelMap(size, size, 0);

  // Background: base colour with a linear gradient and a few soft blobs.
  float base[3];
  for (float& b : base) b = static_cast<float>(0.25 + 0.5 * unit(rng));
  float grad[3];
  for (float& g : grad) g = static_cast<float>(0.2 * (unit(rng) - 0.5));
  const double gangle = 2 * std::numbers::pi * unit(rng);
  struct Blob {
    double x, y, r;
    float col[3];
  };
  std::vector<Blob> blobs(3 + static_cast<int>(unit(rng) * 3));
  for (auto& b : blobs) {
    b.x = unit(rng) * size;
    b.y = unit(rng) * size;
    b.r = (0.08 + 0.15 * unit(rng)) * size;
    for (float& c : b.col) c = static_cast<float>(0.15 * (unit(rng) - 0.5));
  }
  std::normal_distribution<double> noise(0.0, 0.03);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double t = ((x - size / 2.0) * std::cos(gangle) + (y - size / 2.0) * std::sin(gangle)) / size;
      for (int c = 0; c < 3; ++c) {
        double v = base[c] + grad[c] * t;
        for (const auto& b : blobs) {
          const double d2 = ((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y)) / (b.r * b.r);
          v += b.col[c] * std::exp(-d2);
        }
        item.image.at(c, y, x) = static_cast<float>(v + noise(rng));
      }
    }

  // Foreground colour far enough from the background base colour.
  float fg[3];
  do {
    for (float& f : fg) f = static_cast<float>(unit(rng));
  } while (color_distance(fg, base) < 0.45);

  Shape shape{kind, 0, 0, 0, 0};
  for (;;) {
    shape.radius = (0.12 + 0.26 * unit(rng)) * size;
    shape.angle = 2 * std::numbers::pi * unit(rng);
    shape.cx = (0.2 + 0.6 * unit(rng)) * size;
    shape.cy = (0.2 + 0.6 * unit(rng)) * size;
    std::size_t count = 0;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) count += shape.contains(x, y);
    const double ratio = static_cast<double>(count) / (static_cast<double>(size) * size);
    if (ratio >= kMinForegroundRatio && ratio <= kMaxForegroundRatio) break;
  }
  std::normal_distribution<double> fg_noise(0.0, 0.02);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      if (shape.contains(x, y)) {
        item.labels.at(y, x) = static_cast<std::uint8_t>(kind);
        for (int c = 0; c < 3; ++c) item.image.at(c, y, x) = static_cast<float>(fg[c] + fg_noise(rng));
      }
      for (int c = 0; c < 3; ++c) item.image.at(c, y, x) = std::clamp(item.image.at(c, y, x), 0.0f, 1.0f);
    }
  return item;
}

}  // namespace

Dataset synthetic_dataset(int n_images, int image_size, std::uint64_t seed) {
  if (n_images < 20) throw ConfigError("synthetic dataset needs at least 20 images");
  if (image_size < 32) throw ConfigError("synthetic image size must be >= 32");
  Dataset ds;
  ds.kind = DatasetKind::Synthetic;
  ds.norm = kSyntheticNorm;
  ds.class_names = {"square", "triangle", "cross", "circle"};
  ds.items.reserve(static_cast<std::size_t>(n_images));
  for (int i = 0; i < n_images; ++i) ds.items.push_back(draw_one(i, image_size, seed));
  ds.build_index(16);
  return ds;
}

}  // namespace rifenet
