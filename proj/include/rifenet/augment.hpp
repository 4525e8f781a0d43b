#pragma once
// Weak / strong augmentation with recorded geometry.
//
// A weak view applies flip, scale and crop. A strong view draws the same
// geometry from the same seed and adds photometric distortion on top, so the
// two views of one seed share a GeomRecord and predictions can be compared
// pixel-for-pixel. When the records differ, align_map() resamples one frame
// into the other.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rifenet/autograd.hpp"
#include "rifenet/image.hpp"

namespace rifenet {

enum class AugKind { Weak, Strong };

// Continuous pixel-centre mapping between an augmented raster and its source.
struct GeomRecord {
  bool flip = false;
  double scale = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  int src_h = 0, src_w = 0;
  int out_h = 0, out_w = 0;

  static GeomRecord identity(int h, int w) { return {false, 1.0, 0.0, 0.0, h, w, h, w}; }

  // Output pixel (x, y) -> source coordinates (u, v).
  void to_source(double x, double y, double& u, double& v) const;
  void from_source(double u, double v, double& x, double& y) const;
  bool operator==(const GeomRecord&) const = default;
};

struct PhotoRecord {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double blur_sigma = 0.0;  // 0 = no blur
  bool grayscale = false;
};

struct AugmentationPolicy {
  AugKind kind = AugKind::Weak;
  double flip_prob = 0.5;
  double scale_min = 0.9;
  double scale_max = 1.1;
  // Photometric ops, strong policy only.
  double jitter = 0.3;
  double blur_prob = 0.5;
  double blur_sigma_max = 1.5;
  double gray_prob = 0.2;
  // Gray used where the crop reaches past the source border.
  float fill = 0.5f;

  static AugmentationPolicy weak();
  static AugmentationPolicy strong();
  // Ordered transform descriptors, e.g. {"flip(p=0.5)", "scale[0.9,1.1]", ...}.
  std::vector<std::string> ops() const;
};

struct Augmented {
  Image image;
  std::optional<Mask> mask;
  GeomRecord geometry;
  std::optional<PhotoRecord> photo;
};

// Geometry is drawn first from a stream of `seed`, photometric parameters from
// a separate stream, so weak(x, s) and strong(x, s) share their geometry.
Augmented augment(const Image& image, const Mask* mask, const AugmentationPolicy& policy, std::uint64_t seed);

GeomRecord sample_geometry(const AugmentationPolicy& policy, int h, int w, std::uint64_t seed);
Image apply_geometry(const Image& image, const GeomRecord& g, float fill);
Mask apply_geometry(const Mask& mask, const GeomRecord& g);
Image apply_photometric(const Image& image, const PhotoRecord& p);

// Bilinear resampling of a raster in frame `from` onto the pixel grid of frame
// `to`; both records must share the source. valid[i] is 1 where the sample
// lands inside `from`.
struct FrameAlignment {
  ag::SpatialMap map;
  std::vector<double> valid;
  bool identity = false;
};
FrameAlignment align_map(const GeomRecord& from, const GeomRecord& to);

}  // namespace rifenet
