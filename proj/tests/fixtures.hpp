#pragma once
// Hand-countable mask fixtures shared by the unit and acceptance tests.

#include "rifenet/image.hpp"

namespace fixture {

using rifenet::Mask;

// 1 x width strip with pixels [begin, end) set.
inline Mask strip(int width, int begin, int end) {
  Mask m(1, width);
  for (int x = begin; x < end; ++x) m.at(0, x) = 1;
  return m;
}

struct Pair {
  Mask prediction, truth;
};

// Class A, episode 1: I = 50, U = 100 (fg); bg I = 100, U = 150.
inline Pair episode_50_100() { return {strip(200, 0, 75), strip(200, 25, 100)}; }
// Class A, episode 2: I = 15, U = 20 (fg); bg I = 30, U = 35.
inline Pair episode_15_20() { return {strip(50, 0, 15), strip(50, 0, 20)}; }
// I = 30, U = 40.
inline Pair episode_30_40() { return {strip(60, 0, 30), strip(60, 0, 40)}; }
// I = 10, U = 50.
inline Pair episode_10_50() { return {strip(80, 0, 50), strip(80, 40, 50)}; }

}  // namespace fixture
