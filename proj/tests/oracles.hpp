#pragma once
// Straight nested-loop reference implementations. They share no code with the
// library beyond the plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "rifenet/image.hpp"
#include "rifenet/tensor.hpp"

namespace oracle {

using rifenet::Mask;
using rifenet::Tensor;

inline Tensor random_tensor(rifenet::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.data) v = u(rng);
  return t;
}

inline Mask random_mask(int h, int w, std::mt19937_64& rng, double p = 0.4) {
  std::bernoulli_distribution b(p);
  Mask m(h, w);
  for (auto& v : m.data) v = b(rng) ? 1 : 0;
  if (m.count_nonzero() == 0) m.at(h / 2, w / 2) = 1;
  return m;
}

// Mean of feature vectors over mask pixels; mask already at feature size.
inline std::vector<double> masked_average_pool(const Tensor& f, const Mask& m) {
  const std::size_t C = f.dim(0), H = f.dim(1), W = f.dim(2);
  std::vector<double> out(C, 0.0);
  double count = 0;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      if (!m.at(static_cast<int>(y), static_cast<int>(x))) continue;
      count += 1;
      for (std::size_t c = 0; c < C; ++c) out[c] += f.at(c, y, x);
    }
  for (double& v : out) v /= count;
  return out;
}

// Max cosine similarity of each query pixel to any foreground support pixel,
// min-max normalised with eps in the denominator.
inline Tensor prior_mask(const Tensor& q, const Tensor& s, const Mask& m, double eps) {
  const std::size_t C = q.dim(0), Hq = q.dim(1), Wq = q.dim(2), Hs = s.dim(1), Ws = s.dim(2);
  Tensor raw({Hq, Wq});
  for (std::size_t qy = 0; qy < Hq; ++qy)
    for (std::size_t qx = 0; qx < Wq; ++qx) {
      double best = -2.0;
      for (std::size_t sy = 0; sy < Hs; ++sy)
        for (std::size_t sx = 0; sx < Ws; ++sx) {
          if (!m.at(static_cast<int>(sy), static_cast<int>(sx))) continue;
          double dot = 0, nq = 0, ns = 0;
          for (std::size_t c = 0; c < C; ++c) {
            dot += q.at(c, qy, qx) * s.at(c, sy, sx);
            nq += q.at(c, qy, qx) * q.at(c, qy, qx);
            ns += s.at(c, sy, sx) * s.at(c, sy, sx);
          }
          best = std::max(best, dot / (std::sqrt(nq) * std::sqrt(ns)));
        }
      raw.data[qy * Wq + qx] = best;
    }
  double lo = raw.data[0], hi = raw.data[0];
  for (double v : raw.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double& v : raw.data) v = (v - lo) / (hi - lo + eps);
  return raw;
}

// Mean of g*f over each non-overlapping k x k window (k = H / m).
inline Tensor windowed_mean(const Tensor& f, const std::vector<double>& g, std::size_t m) {
  const std::size_t C = f.dim(0), H = f.dim(1), W = f.dim(2);
  const std::size_t kh = H / m, kw = W / m;
  Tensor out({C, m, m});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0;
        for (std::size_t y = i * kh; y < (i + 1) * kh; ++y)
          for (std::size_t x = j * kw; x < (j + 1) * kw; ++x) acc += f.at(c, y, x) * g[y * W + x];
        out.at(c, i, j) = acc / static_cast<double>(kh * kw);
      }
  return out;
}

inline double dice(const std::vector<double>& p, const std::vector<double>& t, double smooth) {
  double inter = 0, sp = 0, st = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * t[i];
    sp += p[i];
    st += t[i];
  }
  return 1.0 - (2 * inter + smooth) / (sp + st + smooth);
}

}  // namespace oracle
