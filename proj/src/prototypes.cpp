#include "rifenet/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rifenet/errors.hpp"
#include "rifenet/simd.hpp"

namespace rifenet {

ag::Var masked_average_pool(const ag::Var& features, const Mask& mask) {
  const Shape& s = features.shape();
  if (s.size() != 3) throw ContractError("masked_average_pool expects {C, H, W} features");
  const Mask m = resize_nearest(mask, static_cast<int>(s[1]), static_cast<int>(s[2]));
  const std::size_t count = m.count_nonzero();
  if (count == 0) throw DegenerateMaskError("support mask has no foreground at feature resolution");
  Tensor weights({s[1] * s[2], 1});
  for (std::size_t i = 0; i < m.data.size(); ++i) weights.data[i] = m.data[i] ? 1.0 : 0.0;
  ag::Var pooled = ag::matmul(ag::reshape(features, {s[0], s[1] * s[2]}), ag::constant(std::move(weights)));
  return ag::reshape(ag::scale(pooled, 1.0 / static_cast<double>(count)), {s[0]});
}

namespace {

// Rows of {C, N} features as unit vectors {N, C}; zero vectors stay zero.
Tensor unit_rows(const Tensor& features) {
  Tensor t = transpose2d(Tensor({features.dim(0), features.size() / features.dim(0)}, features.data));
  const std::size_t n = t.dim(0), c = t.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = t.ptr() + i * c;
    const double norm = std::sqrt(simd::dot(row, row, c));
    if (norm > 0) simd::scale(1.0 / norm, row, c);
  }
  return t;
}

}  // namespace

Tensor prior_scores(const Tensor& query_features, const Tensor& support_features, const Mask& support_mask) {
  if (query_features.rank() != 3 || support_features.rank() != 3 || query_features.dim(0) != support_features.dim(0))
    throw ContractError("prior mask features must be {C, H, W} with equal channel counts");
  const std::size_t C = query_features.dim(0);
  const std::size_t hq = query_features.dim(1), wq = query_features.dim(2);
  const std::size_t hs = support_features.dim(1), ws = support_features.dim(2);
  const Mask m = resize_nearest(support_mask, static_cast<int>(hs), static_cast<int>(ws));
  if (m.count_nonzero() == 0) throw DegenerateMaskError("support mask has no foreground for the prior mask");

  const Tensor q = unit_rows(query_features);
  const Tensor s_all = unit_rows(support_features);
  // Foreground support vectors as columns {C, Nfg}.
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < m.data.size(); ++i)
    if (m.data[i]) fg.push_back(i);
  Tensor sT({C, fg.size()});
  for (std::size_t j = 0; j < fg.size(); ++j)
    for (std::size_t c = 0; c < C; ++c) sT.data[c * fg.size() + j] = s_all.data[fg[j] * C + c];
  Tensor sim({hq * wq, fg.size()}, 0.0);
  simd::gemm(hq * wq, fg.size(), C, q.ptr(), sT.ptr(), sim.ptr());

  Tensor out({hq, wq});
  for (std::size_t i = 0; i < hq * wq; ++i) {
    const double* row = sim.ptr() + i * fg.size();
    out.data[i] = *std::max_element(row, row + fg.size());
  }
  return out;
}

Tensor normalize_prior(const Tensor& scores, double eps) {
  const auto [lo, hi] = std::minmax_element(scores.data.begin(), scores.data.end());
  const double mn = *lo, mx = *hi;
  Tensor out = scores;
  for (double& v : out.data) v = (v - mn) / (mx - mn + eps);
  return out;
}

Tensor prior_mask(const Tensor& query_features, const Tensor& support_features, const Mask& support_mask, double eps) {
  return normalize_prior(prior_scores(query_features, support_features, support_mask), eps);
}

std::vector<GridCell> grid_geometry(std::size_t height, std::size_t width, std::size_t m) {
  std::vector<GridCell> cells;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      cells.push_back({i * height / m, ((i + 1) * height + m - 1) / m, j * width / m, ((j + 1) * width + m - 1) / m});
  return cells;
}

ag::Var guided_local_pool(const ag::Var& features, const Tensor& guidance, std::size_t m) {
  const Shape& s = features.shape();
  if (s.size() != 3) throw ContractError("local pooling expects {C, H, W} features");
  if (m == 0 || m > s[1] || m > s[2])
    throw ConfigError("prototype grid " + std::to_string(m) + " exceeds feature size " + shape_str(s));
  if (guidance.size() != s[1] * s[2]) throw ContractError("guidance size differs from feature plane");
  ag::Var g = ag::constant(Tensor({s[1] * s[2]}, guidance.data));
  ag::Var weighted = ag::reshape(ag::mul_cols(ag::reshape(features, {s[0], s[1] * s[2]}), g), s);
  return ag::spatial(weighted, ag::SpatialMap::adaptive_avg_pool(s[1], s[2], m, m));
}

ChannelAttention::ChannelAttention(nn::ParamStore& store, const std::string& name, std::size_t channels,
                                   std::size_t ratio, nn::Rng& rng) {
  const std::size_t hidden = std::max<std::size_t>(1, channels / ratio);
  w1_ = store.add(name + ".fc1.weight", nn::kaiming_uniform({hidden, channels}, channels, rng));
  b1_ = store.add(name + ".fc1.bias", Tensor({hidden}, 0.0));
  w2_ = store.add(name + ".fc2.weight", nn::xavier_uniform({channels, hidden}, hidden, channels, rng));
  b2_ = store.add(name + ".fc2.bias", Tensor({channels}, 0.0));
}

ag::Var ChannelAttention::gates(const ag::Var& grid) const {
  const std::size_t c = grid.shape()[0];
  ag::Var squeezed = ag::reshape(ag::row_mean(grid), {c, 1});
  ag::Var hidden = ag::relu(ag::add_row_bias(ag::matmul(w1_, squeezed), b1_));
  return ag::reshape(ag::sigmoid(ag::add_row_bias(ag::matmul(w2_, hidden), b2_)), {c});
}

ag::Var ChannelAttention::operator()(const ag::Var& grid) const { return ag::mul_rows(grid, gates(grid)); }

LocalPrototypeGenerator::LocalPrototypeGenerator(nn::ParamStore& store, std::size_t in_channels,
                                                 std::size_t out_channels, std::size_t se_ratio, nn::Rng& rng)
    : squeeze_(store, "local.squeeze", in_channels, out_channels, rng),
      attention_(store, "local.attention", out_channels, se_ratio, rng) {}

LocalPrototypeGrid LocalPrototypeGenerator::operator()(const ag::Var& features, const Tensor& guidance, std::size_t m,
                                                       bool channel_attention) const {
  LocalPrototypeGrid out;
  out.m = m;
  out.geometry = grid_geometry(features.shape()[1], features.shape()[2], m);
  ag::Var squeezed = squeeze_(guided_local_pool(features, guidance, m));
  out.grid = channel_attention ? attention_(squeezed) : squeezed;
  return out;
}

ag::Var expand_global(const ag::Var& prototype, std::size_t height, std::size_t width) {
  const std::size_t c = prototype.size();
  ag::Var ones = ag::constant(Tensor({1, height * width}, 1.0));
  return ag::reshape(ag::matmul(ag::reshape(prototype, {c, 1}), ones), {c, height, width});
}

ag::Var expand_local(const ag::Var& grid, std::size_t height, std::size_t width) {
  const Shape& s = grid.shape();
  if (height < s[1] || width < s[2]) throw ContractError("expand target smaller than prototype grid");
  return ag::spatial(grid, ag::SpatialMap::nearest(s[1], s[2], height, width));
}

}  // namespace rifenet
