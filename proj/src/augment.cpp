#include "rifenet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rifenet/errors.hpp"
#include "rifenet/seeding.hpp"

namespace rifenet {

void GeomRecord::to_source(double x, double y, double& u, double& v) const {
  u = (x + offset_x + 0.5) / scale - 0.5;
  v = (y + offset_y + 0.5) / scale - 0.5;
  if (flip) u = (src_w - 1) - u;
}

void GeomRecord::from_source(double u, double v, double& x, double& y) const {
  if (flip) u = (src_w - 1) - u;
  x = (u + 0.5) * scale - 0.5 - offset_x;
  y = (v + 0.5) * scale - 0.5 - offset_y;
}

AugmentationPolicy AugmentationPolicy::weak() { return AugmentationPolicy{}; }

AugmentationPolicy AugmentationPolicy::strong() {
  AugmentationPolicy p;
  p.kind = AugKind::Strong;
  return p;
}

std::vector<std::string> AugmentationPolicy::ops() const {
  auto num = [](double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  std::vector<std::string> out{"flip(p=" + num(flip_prob) + ")", "scale[" + num(scale_min) + "," + num(scale_max) + "]",
                               "crop"};
  if (kind == AugKind::Strong) {
    out.push_back("color_jitter(" + num(jitter) + ")");
    out.push_back("gaussian_blur(p=" + num(blur_prob) + ",sigma<=" + num(blur_sigma_max) + ")");
    out.push_back("grayscale(p=" + num(gray_prob) + ")");
  }
  return out;
}

GeomRecord sample_geometry(const AugmentationPolicy& policy, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x9e01));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GeomRecord g = GeomRecord::identity(h, w);
  g.flip = unit(rng) < policy.flip_prob;
  g.scale = policy.scale_min + (policy.scale_max - policy.scale_min) * unit(rng);
  // The crop window slides over the scaled image; when the scaled image is
  // smaller than the output the window extends past it on both sides.
  const double slack_x = w * g.scale - w, slack_y = h * g.scale - h;
  g.offset_x = std::min(0.0, slack_x) + std::abs(slack_x) * unit(rng);
  g.offset_y = std::min(0.0, slack_y) + std::abs(slack_y) * unit(rng);
  return g;
}

Image apply_geometry(const Image& image, const GeomRecord& g, float fill) {
  Image out(g.out_h, g.out_w, fill);
  for (int y = 0; y < g.out_h; ++y)
    for (int x = 0; x < g.out_w; ++x) {
      double u, v;
      g.to_source(x, y, u, v);
      if (u < -0.5 || v < -0.5 || u > image.width - 0.5 || v > image.height - 0.5) continue;
      const double cu = std::clamp(u, 0.0, image.width - 1.0), cv = std::clamp(v, 0.0, image.height - 1.0);
      const int x0 = static_cast<int>(cu), y0 = static_cast<int>(cv);
      const int x1 = std::min(x0 + 1, image.width - 1), y1 = std::min(y0 + 1, image.height - 1);
      const double wx = cu - x0, wy = cv - y0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(c, y0, x0) * (1 - wx) + image.at(c, y0, x1) * wx;
        const double bot = image.at(c, y1, x0) * (1 - wx) + image.at(c, y1, x1) * wx;
        out.at(c, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  return out;
}

Mask apply_geometry(const Mask& mask, const GeomRecord& g) {
  Mask out(g.out_h, g.out_w, 0);
  for (int y = 0; y < g.out_h; ++y)
    for (int x = 0; x < g.out_w; ++x) {
      double u, v;
      g.to_source(x, y, u, v);
      const long iu = std::lround(u), iv = std::lround(v);
      if (iu < 0 || iv < 0 || iu >= mask.width || iv >= mask.height) continue;
      out.at(y, x) = mask.at(static_cast<int>(iv), static_cast<int>(iu));
    }
  return out;
}

namespace {

PhotoRecord sample_photometric(const AugmentationPolicy& policy, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0x9e02));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PhotoRecord p;
  p.brightness = 1.0 + policy.jitter * (2 * unit(rng) - 1);
  p.contrast = 1.0 + policy.jitter * (2 * unit(rng) - 1);
  p.saturation = 1.0 + policy.jitter * (2 * unit(rng) - 1);
  const bool blur = unit(rng) < policy.blur_prob;
  const double sigma = 0.1 + (policy.blur_sigma_max - 0.1) * unit(rng);
  p.blur_sigma = blur ? sigma : 0.0;
  p.grayscale = unit(rng) < policy.gray_prob;
  return p;
}

float luma(const Image& img, int y, int x) {
  return 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
}

Image gaussian_blur(const Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double z = 0;
  for (int i = -radius; i <= radius; ++i) z += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= z;
  Image tmp(img.height, img.width), out(img.height, img.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img.at(c, y, std::clamp(x + i, 0, img.width - 1));
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp.at(c, std::clamp(y + i, 0, img.height - 1), x);
        out.at(c, y, x) = static_cast<float>(acc);
      }
  }
  return out;
}

}  // namespace

Image apply_photometric(const Image& image, const PhotoRecord& p) {
  Image out = image;
  double mean = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) mean += luma(image, y, x);
  mean /= static_cast<double>(image.height) * image.width;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const float g = luma(image, y, x);
      for (int c = 0; c < 3; ++c) {
        double v = image.at(c, y, x) * p.brightness;
        v = (v - mean) * p.contrast + mean;
        v = g * p.brightness + (v - g * p.brightness) * p.saturation;
        out.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  if (p.blur_sigma > 0) out = gaussian_blur(out, p.blur_sigma);
  if (p.grayscale)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        const float g = luma(out, y, x);
        for (int c = 0; c < 3; ++c) out.at(c, y, x) = g;
      }
  return out;
}

Augmented augment(const Image& image, const Mask* mask, const AugmentationPolicy& policy, std::uint64_t seed) {
  if (image.empty()) throw ContractError("augment: empty image");
  if (mask && (mask->height != image.height || mask->width != image.width))
    throw ContractError("augment: mask and image sizes differ");
  Augmented out;
  out.geometry = sample_geometry(policy, image.height, image.width, seed);
  out.image = apply_geometry(image, out.geometry, policy.fill);
  if (mask) out.mask = apply_geometry(*mask, out.geometry);
  if (policy.kind == AugKind::Strong) {
    out.photo = sample_photometric(policy, seed);
    out.image = apply_photometric(out.image, *out.photo);
  }
  return out;
}

FrameAlignment align_map(const GeomRecord& from, const GeomRecord& to) {
  if (from.src_h != to.src_h || from.src_w != to.src_w) throw ContractError("align_map: records of different sources");
  FrameAlignment a;
  ag::SpatialMap& m = a.map;
  m.in_h = static_cast<std::size_t>(from.out_h);
  m.in_w = static_cast<std::size_t>(from.out_w);
  m.out_h = static_cast<std::size_t>(to.out_h);
  m.out_w = static_cast<std::size_t>(to.out_w);
  m.offsets = {0};
  a.identity = from == to;
  a.valid.assign(m.out_h * m.out_w, 0.0);
  for (int y = 0; y < to.out_h; ++y)
    for (int x = 0; x < to.out_w; ++x) {
      const std::size_t o = static_cast<std::size_t>(y) * to.out_w + x;
      if (a.identity) {
        m.index.push_back(static_cast<std::uint32_t>(o));
        m.weight.push_back(1.0);
        a.valid[o] = 1.0;
        m.offsets.push_back(m.index.size());
        continue;
      }
      double u, v, fx, fy;
      to.to_source(x, y, u, v);
      from.from_source(u, v, fx, fy);
      if (fx >= 0 && fy >= 0 && fx <= from.out_w - 1 && fy <= from.out_h - 1) {
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        const int x1 = std::min(x0 + 1, from.out_w - 1), y1 = std::min(y0 + 1, from.out_h - 1);
        const double wx = fx - x0, wy = fy - y0;
        const int xs[2] = {x0, x1}, ys[2] = {y0, y1};
        const double wxs[2] = {1 - wx, wx}, wys[2] = {1 - wy, wy};
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) {
            const double w = wys[i] * wxs[j];
            if (w == 0.0) continue;
            m.index.push_back(static_cast<std::uint32_t>(ys[i] * from.out_w + xs[j]));
            m.weight.push_back(w);
          }
        a.valid[o] = 1.0;
      }
      m.offsets.push_back(m.index.size());
    }
  return a;
}

}  // namespace rifenet
