#include "rifenet/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "rifenet/errors.hpp"

namespace rifenet {

std::size_t Raster::count_nonzero() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (img.height == out_h && img.width == out_w) return img;
  Image out(out_h, out_w);
  // Half-pixel centres, matching the usual image-resize convention.
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
        const double bot = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
        out.at(c, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

Raster resize_nearest(const Raster& r, int out_h, int out_w) {
  if (r.height == out_h && r.width == out_w) return r;
  Raster out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(r.height - 1, static_cast<int>(static_cast<long>(y) * r.height / out_h));
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(r.width - 1, static_cast<int>(static_cast<long>(x) * r.width / out_w));
      out.at(y, x) = r.at(sy, sx);
    }
  }
  return out;
}

Mask binary_mask(const LabelMap& labels, int class_id) {
  Mask m(labels.height, labels.width);
  for (std::size_t i = 0; i < labels.data.size(); ++i) m.data[i] = labels.data[i] == class_id ? 1 : 0;
  return m;
}

Tensor to_tensor(const Image& img, const Normalization& norm) {
  const std::size_t h = static_cast<std::size_t>(img.height), w = static_cast<std::size_t>(img.width);
  Tensor t({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i)
      t.data[c * h * w + i] = (img.data[c * h * w + i] - norm.mean[c]) / norm.stddev[c];
  return t;
}

Tensor mask_tensor(const Mask& m) {
  Tensor t({m.data.size()});
  for (std::size_t i = 0; i < m.data.size(); ++i) t.data[i] = m.data[i] ? 1.0 : 0.0;
  return t;
}

Image load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image " + path.string());
  Image img(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y)
    for (int x = 0; x < bgr.cols; ++x) {
      const cv::Vec3b px = bgr.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = px[2 - c] / 255.0f;
    }
  return img;
}

Raster load_raster(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw DataError("cannot read mask " + path.string());
  Raster r(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) r.at(y, x) = m.at<std::uint8_t>(y, x);
  return r;
}

void save_image(const std::filesystem::path& path, const Image& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      cv::Vec3b px;
      for (int c = 0; c < 3; ++c)
        px[2 - c] = static_cast<std::uint8_t>(std::lround(std::clamp(img.at(c, y, x), 0.0f, 1.0f) * 255.0f));
      bgr.at<cv::Vec3b>(y, x) = px;
    }
  if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write " + path.string());
}

void save_raster(const std::filesystem::path& path, const Raster& r, std::uint8_t scale) {
  cv::Mat m(r.height, r.width, CV_8UC1);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(r.at(y, x) * scale);
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write " + path.string());
}

Image overlay(const Image& img, const Mask& mask, const float rgb[3], float alpha) {
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (mask.at(y, x))
        for (int c = 0; c < 3; ++c) out.at(c, y, x) = (1 - alpha) * img.at(c, y, x) + alpha * rgb[c];
  return out;
}

Image heatmap(const Tensor& map, int height, int width) {
  Image out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float v = static_cast<float>(map.data[static_cast<std::size_t>(y) * width + x]);
      // Black to red to yellow.
      out.at(0, y, x) = std::min(1.0f, 2.0f * v);
      out.at(1, y, x) = std::max(0.0f, 2.0f * v - 1.0f);
      out.at(2, y, x) = 0.0f;
    }
  return out;
}

}  // namespace rifenet
