#pragma once
// Reverse-mode automatic differentiation over Tensor values.
//
// Each op builds a Node that owns its value, holds its parents and a closure
// that pushes the node's gradient into them. Nodes only record history when
// gradient tracking is enabled and at least one input requires a gradient, so
// frozen computations (the backbone, prior masks) never grow the tape.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rifenet/tensor.hpp"

namespace rifenet::ag {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
  bool has_grad() const { return !grad.data.empty(); }
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.data.at(0); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && node_->has_grad(); }
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad() { return node_->grad; }
  void zero_grad();

  // Same value, no history.
  Var detach() const;

  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

  static Var from_node(std::shared_ptr<Node> n);

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Seeds d(root)/d(root) = 1 and accumulates into every reachable node that
// requires a gradient. root must hold a single element.
void backward(const Var& root);

Var constant(Tensor t);
Var parameter(Tensor t);

Var reshape(const Var& x, Shape shape);
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
Var transpose(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);

// x viewed as rows = shape[0]; b has one entry per row.
Var add_row_bias(const Var& x, const Var& b);
// x is {N, D}; b has D entries.
Var add_col_bias(const Var& x, const Var& b);
// x[r, c] * s[r]
Var mul_rows(const Var& x, const Var& s);
// x[r, c] * g[c]
Var mul_cols(const Var& x, const Var& g);

Var relu(const Var& x);
Var sigmoid(const Var& x);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);

Var row_mean(const Var& x);
Var sum(const Var& x);

// Row-wise softmax of a {N, M} matrix. col_bias, when non-empty, is added to
// every row before normalisation (use -infinity to mask a column out).
Var softmax_rows(const Var& x, std::span<const double> col_bias = {});

// Normalises each row of {N, D} to zero mean and unit variance, then applies
// the optional per-column affine (gamma, beta). Without affine this is
// instance normalisation when rows are channels.
Var layer_norm_rows(const Var& x, const Var* gamma, const Var* beta, double eps = 1e-5);

// {C, H, W} -> {C*k*k, Ho*Wo} patch matrix for convolution as a GEMM.
Var im2col(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad, std::size_t dilation);

// Fixed linear spatial operator: each output pixel is a weighted sum of input
// pixels. Covers resizing, pooling, tiling and geometric warps.
struct SpatialMap {
  std::size_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::vector<std::size_t> offsets;  // CSR row pointers, out_h*out_w + 1
  std::vector<std::uint32_t> index;
  std::vector<double> weight;

  Tensor apply(const Tensor& x) const;

  // align_corners maps the corner pixels onto each other; otherwise pixel
  // centres are matched (src = (dst + 0.5) * in / out - 0.5).
  static SpatialMap bilinear(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w,
                             bool align_corners = true);
  static SpatialMap nearest(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w);
  // Output cell (i, j) averages rows floor(i*H/m) .. ceil((i+1)*H/m).
  static SpatialMap adaptive_avg_pool(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w);
};

Var spatial(const Var& x, const SpatialMap& map);

// 1 - (2*sum(w*p*t) + s) / (sum(w*p) + sum(w*t) + s). weights may be empty.
Var dice_loss(const Var& prediction, const Tensor& target, std::span<const double> weights = {},
              double smooth = 1.0);

}  // namespace rifenet::ag
