#pragma once
// Raster types shared by the data pipeline and the model front end.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rifenet/tensor.hpp"

namespace rifenet {

// RGB image, channel-major planes, values in [0, 1] before normalisation.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // 3 * height * width

  Image() = default;
  Image(int h, int w, float fill = 0.0f) : height(h), width(w), data(3u * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  bool empty() const { return data.empty(); }
  bool operator==(const Image&) const = default;
};

// Single-channel raster of small integers: binary masks (0/1) or class-index
// label maps (0 = background, 255 = ignore).
struct Raster {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Raster() = default;
  Raster(int h, int w, std::uint8_t fill = 0) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count_nonzero() const;
  bool operator==(const Raster&) const = default;
};

using Mask = Raster;
using LabelMap = Raster;

Image resize_bilinear(const Image& img, int out_h, int out_w);
Raster resize_nearest(const Raster& r, int out_h, int out_w);

// Binary mask of the pixels labelled class_id.
Mask binary_mask(const LabelMap& labels, int class_id);

struct Normalization {
  float mean[3];
  float stddev[3];
};
inline constexpr Normalization kImageNetNorm{{0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}};
inline constexpr Normalization kSyntheticNorm{{0.5f, 0.5f, 0.5f}, {0.25f, 0.25f, 0.25f}};

Tensor to_tensor(const Image& img, const Normalization& norm);
// Mask as a {H*W} tensor of 0/1 values.
Tensor mask_tensor(const Mask& m);

Image load_image(const std::filesystem::path& path);
Raster load_raster(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& img);
void save_raster(const std::filesystem::path& path, const Raster& r, std::uint8_t scale = 1);

// Image with a translucent colour over mask pixels, for debugging dumps.
Image overlay(const Image& img, const Mask& mask, const float rgb[3], float alpha = 0.5f);
// Grey-scale rendering of a {H, W} or {1, H, W} map with values in [0, 1].
Image heatmap(const Tensor& map, int height, int width);

}  // namespace rifenet
