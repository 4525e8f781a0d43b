#pragma once
// Procedural shapes dataset used for desk-scale runs and tests.

#include <cstdint>

#include "rifenet/data.hpp"

namespace rifenet {

enum SyntheticClass : int { kSquare = 1, kTriangle = 2, kCross = 3, kCircle = 4 };

inline constexpr double kMinForegroundRatio = 0.02;
inline constexpr double kMaxForegroundRatio = 0.6;

// One shape per image on a cluttered background; image i has class (i % 4) + 1.
// Shape colour, size, rotation and position vary per image, and the mask is
// the exact set of pixels the shape was drawn on.
Dataset synthetic_dataset(int n_images, int image_size, std::uint64_t seed);

}  // namespace rifenet
