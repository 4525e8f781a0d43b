#include "rifenet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "rifenet/errors.hpp"
#include "rifenet/simd.hpp"

namespace rifenet::ag {
namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

Var make_result(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool track = false;
  if (g_grad_enabled)
    for (const auto& p : parents) track = track || p->requires_grad;
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return Var::from_node(std::move(n));
}

void require(bool ok, const char* what) {
  if (!ok) throw ContractError(what);
}

void add_into(Node& target, const Tensor& g) {
  if (!target.requires_grad) return;
  Tensor& buf = target.grad_buffer();
  simd::axpy(1.0, g.ptr(), buf.ptr(), g.size());
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.data.empty()) grad = Tensor(value.shape, 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

void Var::zero_grad() {
  if (node_ && node_->has_grad()) std::fill(node_->grad.data.begin(), node_->grad.data.end(), 0.0);
}

Var Var::detach() const { return Var(node_->value, false); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& root) {
  require(root.defined() && root.size() == 1, "backward() needs a scalar root");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

Var constant(Tensor t) { return Var(std::move(t), false); }
Var parameter(Tensor t) { return Var(std::move(t), true); }

Var reshape(const Var& x, Shape shape) {
  require(numel(shape) == x.size(), "reshape changes element count");
  Tensor out(std::move(shape), x.value().data);
  return make_result(std::move(out), {x.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    Tensor& buf = p.grad_buffer();
    simd::axpy(1.0, self.grad.ptr(), buf.ptr(), buf.size());
  });
}

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.rank() == 2 && B.rank() == 2, "matmul expects 2-D operands");
  const std::size_t m = trans_a ? A.dim(1) : A.dim(0);
  const std::size_t k = trans_a ? A.dim(0) : A.dim(1);
  const std::size_t kb = trans_b ? B.dim(1) : B.dim(0);
  const std::size_t n = trans_b ? B.dim(0) : B.dim(1);
  require(k == kb, "matmul inner dimensions differ");

  Tensor at, bt;
  const double* ap = A.ptr();
  const double* bp = B.ptr();
  if (trans_a) {
    at = transpose2d(A);
    ap = at.ptr();
  }
  if (trans_b) {
    bt = transpose2d(B);
    bp = bt.ptr();
  }
  Tensor out({m, n}, 0.0);
  simd::gemm(m, n, k, ap, bp, out.ptr());

  return make_result(std::move(out), {a.node(), b.node()}, [m, n, k, trans_a, trans_b](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const Tensor& G = self.grad;
    if (na.requires_grad) {
      // dA' = G * B'^T where B' = op(B) is k x n.
      const Tensor& B = nb.value;
      Tensor bT;
      const double* btp;
      if (trans_b) {
        btp = B.ptr();
      } else {
        bT = transpose2d(B);
        btp = bT.ptr();
      }
      if (!trans_a) {
        simd::gemm(m, k, n, G.ptr(), btp, na.grad_buffer().ptr());
      } else {
        Tensor da({m, k}, 0.0);
        simd::gemm(m, k, n, G.ptr(), btp, da.ptr());
        add_into(na, transpose2d(da));
      }
    }
    if (nb.requires_grad) {
      // dB' = A'^T * G where A' = op(A) is m x k.
      const Tensor& A = na.value;
      Tensor aT;
      const double* atp;
      if (trans_a) {
        atp = A.ptr();
      } else {
        aT = transpose2d(A);
        atp = aT.ptr();
      }
      if (!trans_b) {
        simd::gemm(k, n, m, atp, G.ptr(), nb.grad_buffer().ptr());
      } else {
        Tensor db({k, n}, 0.0);
        simd::gemm(k, n, m, atp, G.ptr(), db.ptr());
        add_into(nb, transpose2d(db));
      }
    }
  });
}

Var transpose(const Var& x) {
  require(x.value().rank() == 2, "transpose expects a 2-D operand");
  return make_result(transpose2d(x.value()), {x.node()},
                     [](Node& self) { add_into(*self.parents[0], transpose2d(self.grad)); });
}

Var add(const Var& a, const Var& b) {
  require(a.size() == b.size(), "add: size mismatch");
  Tensor out = a.value();
  simd::axpy(1.0, b.value().ptr(), out.ptr(), out.size());
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    add_into(*self.parents[0], self.grad);
    add_into(*self.parents[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.size() == b.size(), "sub: size mismatch");
  Tensor out = a.value();
  simd::axpy(-1.0, b.value().ptr(), out.ptr(), out.size());
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    add_into(*self.parents[0], self.grad);
    Node& nb = *self.parents[1];
    if (nb.requires_grad) simd::axpy(-1.0, self.grad.ptr(), nb.grad_buffer().ptr(), self.grad.size());
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.size() == b.size(), "mul: size mismatch");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const Tensor& g = self.grad;
    if (na.requires_grad) {
      Tensor& da = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) da.data[i] += g.data[i] * nb.value.data[i];
    }
    if (nb.requires_grad) {
      Tensor& db = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) db.data[i] += g.data[i] * na.value.data[i];
    }
  });
}

Var scale(const Var& x, double s) {
  Tensor out = x.value();
  simd::scale(s, out.ptr(), out.size());
  return make_result(std::move(out), {x.node()}, [s](Node& self) {
    Node& p = *self.parents[0];
    simd::axpy(s, self.grad.ptr(), p.grad_buffer().ptr(), self.grad.size());
  });
}

Var add_scalar(const Var& x, double s) {
  Tensor out = x.value();
  for (double& v : out.data) v += s;
  return make_result(std::move(out), {x.node()}, [](Node& self) { add_into(*self.parents[0], self.grad); });
}

Var add_row_bias(const Var& x, const Var& b) {
  const std::size_t r = x.value().rows(), c = x.value().cols();
  require(b.size() == r, "add_row_bias: bias length must equal row count");
  Tensor out = x.value();
  for (std::size_t i = 0; i < r; ++i) {
    const double bi = b.value().data[i];
    double* row = out.ptr() + i * c;
    for (std::size_t j = 0; j < c; ++j) row[j] += bi;
  }
  return make_result(std::move(out), {x.node(), b.node()}, [r, c](Node& self) {
    add_into(*self.parents[0], self.grad);
    Node& nb = *self.parents[1];
    if (nb.requires_grad) {
      Tensor& db = nb.grad_buffer();
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        const double* g = self.grad.ptr() + i * c;
        for (std::size_t j = 0; j < c; ++j) acc += g[j];
        db.data[i] += acc;
      }
    }
  });
}

Var add_col_bias(const Var& x, const Var& b) {
  const std::size_t r = x.value().rows(), c = x.value().cols();
  require(b.size() == c, "add_col_bias: bias length must equal column count");
  Tensor out = x.value();
  for (std::size_t i = 0; i < r; ++i) simd::axpy(1.0, b.value().ptr(), out.ptr() + i * c, c);
  return make_result(std::move(out), {x.node(), b.node()}, [r, c](Node& self) {
    add_into(*self.parents[0], self.grad);
    Node& nb = *self.parents[1];
    if (nb.requires_grad) {
      Tensor& db = nb.grad_buffer();
      for (std::size_t i = 0; i < r; ++i) simd::axpy(1.0, self.grad.ptr() + i * c, db.ptr(), c);
    }
  });
}

Var mul_rows(const Var& x, const Var& s) {
  const std::size_t r = x.value().rows(), c = x.value().cols();
  require(s.size() == r, "mul_rows: scale length must equal row count");
  Tensor out = x.value();
  for (std::size_t i = 0; i < r; ++i) simd::scale(s.value().data[i], out.ptr() + i * c, c);
  return make_result(std::move(out), {x.node(), s.node()}, [r, c](Node& self) {
    Node& nx = *self.parents[0];
    Node& ns = *self.parents[1];
    const double* g = self.grad.ptr();
    if (nx.requires_grad) {
      Tensor& dx = nx.grad_buffer();
      for (std::size_t i = 0; i < r; ++i) simd::axpy(ns.value.data[i], g + i * c, dx.ptr() + i * c, c);
    }
    if (ns.requires_grad) {
      Tensor& ds = ns.grad_buffer();
      for (std::size_t i = 0; i < r; ++i) ds.data[i] += simd::dot(g + i * c, nx.value.ptr() + i * c, c);
    }
  });
}

Var mul_cols(const Var& x, const Var& gvec) {
  const std::size_t r = x.value().rows(), c = x.value().cols();
  require(gvec.size() == c, "mul_cols: gate length must equal column count");
  Tensor out = x.value();
  const double* gv = gvec.value().ptr();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = out.ptr() + i * c;
    for (std::size_t j = 0; j < c; ++j) row[j] *= gv[j];
  }
  return make_result(std::move(out), {x.node(), gvec.node()}, [r, c](Node& self) {
    Node& nx = *self.parents[0];
    Node& ng = *self.parents[1];
    const double* g = self.grad.ptr();
    if (nx.requires_grad) {
      Tensor& dx = nx.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) dx.data[i * c + j] += g[i * c + j] * ng.value.data[j];
    }
    if (ng.requires_grad) {
      Tensor& dg = ng.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) dg.data[j] += g[i * c + j] * nx.value.data[i * c + j];
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return make_result(std::move(out), {x.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    Tensor& dx = p.grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (p.value.data[i] > 0.0) dx.data[i] += self.grad.data[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return make_result(std::move(out), {x.node()}, [](Node& self) {
    Tensor& dx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double y = self.value.data[i];
      dx.data[i] += self.grad.data[i] * y * (1.0 - y);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Shape rest(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<NodePtr> parents;
  for (const Var& p : parts) {
    require(Shape(p.shape().begin() + 1, p.shape().end()) == rest, "concat_rows: trailing shapes differ");
    rows += p.shape()[0];
    parents.push_back(p.node());
  }
  Shape shape{rows};
  shape.insert(shape.end(), rest.begin(), rest.end());
  Tensor out(shape);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.size();
  }
  return make_result(std::move(out), std::move(parents), [](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) simd::axpy(1.0, self.grad.ptr() + off, p->grad_buffer().ptr(), n);
      off += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = parts[0].shape()[0];
  std::size_t cols = 0;
  std::vector<NodePtr> parents;
  for (const Var& p : parts) {
    require(p.value().rank() == 2 && p.shape()[0] == rows, "concat_cols: row counts differ");
    cols += p.shape()[1];
    parents.push_back(p.node());
  }
  Tensor out({rows, cols});
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const std::size_t pc = p.shape()[1];
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(p.value().ptr() + i * pc, pc, out.ptr() + i * cols + c0);
    c0 += pc;
  }
  return make_result(std::move(out), std::move(parents), [rows, cols](Node& self) {
    std::size_t c0 = 0;
    for (auto& p : self.parents) {
      const std::size_t pc = p->value.shape[1];
      if (p->requires_grad) {
        Tensor& d = p->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i) simd::axpy(1.0, self.grad.ptr() + i * cols + c0, d.ptr() + i * pc, pc);
      }
      c0 += pc;
    }
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& v = x.value();
  require(begin < end && end <= v.rows(), "slice_rows: bad range");
  const std::size_t inner = v.cols();
  Shape shape = v.shape;
  shape[0] = end - begin;
  Tensor out(shape);
  std::copy_n(v.ptr() + begin * inner, (end - begin) * inner, out.ptr());
  return make_result(std::move(out), {x.node()}, [begin, inner](Node& self) {
    Node& p = *self.parents[0];
    simd::axpy(1.0, self.grad.ptr(), p.grad_buffer().ptr() + begin * inner, self.grad.size());
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& v = x.value();
  require(v.rank() == 2 && begin < end && end <= v.dim(1), "slice_cols: bad range");
  const std::size_t rows = v.dim(0), cols = v.dim(1), w = end - begin;
  Tensor out({rows, w});
  for (std::size_t i = 0; i < rows; ++i) std::copy_n(v.ptr() + i * cols + begin, w, out.ptr() + i * w);
  return make_result(std::move(out), {x.node()}, [rows, cols, begin, w](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < rows; ++i) simd::axpy(1.0, self.grad.ptr() + i * w, d.ptr() + i * cols + begin, w);
  });
}

Var row_mean(const Var& x) {
  const std::size_t r = x.value().rows(), c = x.value().cols();
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    const double* row = x.value().ptr() + i * c;
    for (std::size_t j = 0; j < c; ++j) acc += row[j];
    out.data[i] = acc / static_cast<double>(c);
  }
  return make_result(std::move(out), {x.node()}, [r, c](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      const double g = self.grad.data[i] / static_cast<double>(c);
      double* row = d.ptr() + i * c;
      for (std::size_t j = 0; j < c; ++j) row[j] += g;
    }
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().data) acc += v;
  return make_result(Tensor({1}, acc), {x.node()}, [](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    const double g = self.grad.data[0];
    for (double& v : d.data) v += g;
  });
}

Var softmax_rows(const Var& x, std::span<const double> col_bias) {
  const Tensor& v = x.value();
  require(v.rank() == 2, "softmax_rows expects a 2-D operand");
  const std::size_t r = v.dim(0), c = v.dim(1);
  require(col_bias.empty() || col_bias.size() == c, "softmax_rows: bias length must equal column count");
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = v.ptr() + i * c;
    double* o = out.ptr() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = in[j] + (col_bias.empty() ? 0.0 : col_bias[j]);
      mx = std::max(mx, o[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(o[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return make_result(std::move(out), {x.node()}, [r, c](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.ptr() + i * c;
      const double* g = self.grad.ptr() + i * c;
      const double dotyg = simd::dot(y, g, c);
      double* dr = d.ptr() + i * c;
      for (std::size_t j = 0; j < c; ++j) dr[j] += y[j] * (g[j] - dotyg);
    }
  });
}

Var layer_norm_rows(const Var& x, const Var* gamma, const Var* beta, double eps) {
  const std::size_t r = x.value().rows(), c = x.value().cols();
  if (gamma) require(gamma->size() == c, "layer_norm_rows: gamma length");
  if (beta) require(beta->size() == c, "layer_norm_rows: beta length");
  auto xhat = std::make_shared<std::vector<double>>(r * c);
  auto inv = std::make_shared<std::vector<double>>(r);
  Tensor out(x.value().shape);
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = x.value().ptr() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += in[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(c);
    const double s = 1.0 / std::sqrt(var + eps);
    (*inv)[i] = s;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (in[j] - mu) * s;
      (*xhat)[i * c + j] = h;
      out.data[i * c + j] = h * (gamma ? gamma->value().data[j] : 1.0) + (beta ? beta->value().data[j] : 0.0);
    }
  }
  std::vector<NodePtr> parents{x.node()};
  const bool has_gamma = gamma != nullptr, has_beta = beta != nullptr;
  if (has_gamma) parents.push_back(gamma->node());
  if (has_beta) parents.push_back(beta->node());
  return make_result(std::move(out), std::move(parents), [r, c, xhat, inv, has_gamma, has_beta](Node& self) {
    Node& nx = *self.parents[0];
    Node* ng = has_gamma ? self.parents[1].get() : nullptr;
    Node* nb = has_beta ? self.parents[has_gamma ? 2 : 1].get() : nullptr;
    const double* g = self.grad.ptr();
    std::vector<double> dh(c);
    for (std::size_t i = 0; i < r; ++i) {
      const double* h = xhat->data() + i * c;
      const double* gi = g + i * c;
      if (ng && ng->requires_grad) {
        Tensor& dg = ng->grad_buffer();
        for (std::size_t j = 0; j < c; ++j) dg.data[j] += gi[j] * h[j];
      }
      if (nb && nb->requires_grad) simd::axpy(1.0, gi, nb->grad_buffer().ptr(), c);
      if (!nx.requires_grad) continue;
      double mean_dh = 0.0, mean_dhh = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        dh[j] = gi[j] * (ng ? ng->value.data[j] : 1.0);
        mean_dh += dh[j];
        mean_dhh += dh[j] * h[j];
      }
      mean_dh /= static_cast<double>(c);
      mean_dhh /= static_cast<double>(c);
      double* dx = nx.grad_buffer().ptr() + i * c;
      const double s = (*inv)[i];
      for (std::size_t j = 0; j < c; ++j) dx[j] += s * (dh[j] - mean_dh - h[j] * mean_dhh);
    }
  });
}

Var im2col(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad, std::size_t dilation) {
  const Tensor& v = x.value();
  require(v.rank() == 3, "im2col expects {C, H, W}");
  const std::size_t C = v.dim(0), H = v.dim(1), W = v.dim(2);
  const std::size_t span = dilation * (kernel - 1) + 1;
  require(H + 2 * pad >= span && W + 2 * pad >= span, "im2col: kernel larger than padded input");
  const std::size_t Ho = (H + 2 * pad - span) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - span) / stride + 1;
  const std::size_t cols = Ho * Wo;
  Tensor out({C * kernel * kernel, cols}, 0.0);
  auto visit = [=](auto&& fn) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ky = 0; ky < kernel; ++ky)
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const std::size_t row = (c * kernel + ky) * kernel + kx;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky * dilation) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx * dilation) - static_cast<long>(pad);
              if (ix < 0 || ix >= static_cast<long>(W)) continue;
              fn(row * cols + oy * Wo + ox, (c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix));
            }
          }
        }
  };
  visit([&](std::size_t o, std::size_t i) { out.data[o] = v.data[i]; });
  return make_result(std::move(out), {x.node()}, [visit](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    visit([&](std::size_t o, std::size_t i) { d.data[i] += self.grad.data[o]; });
  });
}

Tensor SpatialMap::apply(const Tensor& x) const {
  const std::size_t C = x.rows();
  require(x.cols() == in_h * in_w, "SpatialMap: input size mismatch");
  const std::size_t in = in_h * in_w, out = out_h * out_w;
  Tensor y({C, out_h, out_w}, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double* src = x.ptr() + c * in;
    double* dst = y.ptr() + c * out;
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t e = offsets[o]; e < offsets[o + 1]; ++e) acc += weight[e] * src[index[e]];
      dst[o] = acc;
    }
  }
  return y;
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double w_hi;
};

Tap bilinear_tap(std::size_t o, std::size_t in, std::size_t out, bool align_corners) {
  if (in == 1) return {0, 0, 0.0};
  double src;
  if (align_corners) {
    if (out == 1) return {0, 0, 0.0};
    src = static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  } else {
    src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    if (src <= 0.0) return {0, 0, 0.0};
  }
  std::size_t lo = static_cast<std::size_t>(std::floor(src));
  if (lo >= in - 1) return {in - 1, in - 1, 0.0};
  return {lo, lo + 1, src - static_cast<double>(lo)};
}

}  // namespace

SpatialMap SpatialMap::bilinear(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w,
                                bool align_corners) {
  SpatialMap m{in_h, in_w, out_h, out_w, {0}, {}, {}};
  m.offsets.reserve(out_h * out_w + 1);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const Tap ty = bilinear_tap(oy, in_h, out_h, align_corners);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const Tap tx = bilinear_tap(ox, in_w, out_w, align_corners);
      const std::size_t ys[2] = {ty.lo, ty.hi};
      const double wy[2] = {1.0 - ty.w_hi, ty.w_hi};
      const std::size_t xs[2] = {tx.lo, tx.hi};
      const double wx[2] = {1.0 - tx.w_hi, tx.w_hi};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const double w = wy[a] * wx[b];
          if (w == 0.0) continue;
          m.index.push_back(static_cast<std::uint32_t>(ys[a] * in_w + xs[b]));
          m.weight.push_back(w);
        }
      m.offsets.push_back(m.index.size());
    }
  }
  return m;
}

SpatialMap SpatialMap::nearest(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w) {
  SpatialMap m{in_h, in_w, out_h, out_w, {0}, {}, {}};
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const std::size_t iy = std::min(in_h - 1, oy * in_h / out_h);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const std::size_t ix = std::min(in_w - 1, ox * in_w / out_w);
      m.index.push_back(static_cast<std::uint32_t>(iy * in_w + ix));
      m.weight.push_back(1.0);
      m.offsets.push_back(m.index.size());
    }
  }
  return m;
}

SpatialMap SpatialMap::adaptive_avg_pool(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w) {
  SpatialMap m{in_h, in_w, out_h, out_w, {0}, {}, {}};
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const std::size_t y0 = oy * in_h / out_h, y1 = ((oy + 1) * in_h + out_h - 1) / out_h;
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const std::size_t x0 = ox * in_w / out_w, x1 = ((ox + 1) * in_w + out_w - 1) / out_w;
      const double w = 1.0 / static_cast<double>((y1 - y0) * (x1 - x0));
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) {
          m.index.push_back(static_cast<std::uint32_t>(y * in_w + x));
          m.weight.push_back(w);
        }
      m.offsets.push_back(m.index.size());
    }
  }
  return m;
}

Var spatial(const Var& x, const SpatialMap& map) {
  Tensor out = map.apply(x.value());
  auto shared = std::make_shared<const SpatialMap>(map);
  return make_result(std::move(out), {x.node()}, [shared](Node& self) {
    const SpatialMap& m = *shared;
    Tensor& d = self.parents[0]->grad_buffer();
    const std::size_t in = m.in_h * m.in_w, outn = m.out_h * m.out_w;
    const std::size_t C = d.size() / in;
    for (std::size_t c = 0; c < C; ++c) {
      double* dst = d.ptr() + c * in;
      const double* g = self.grad.ptr() + c * outn;
      for (std::size_t o = 0; o < outn; ++o)
        for (std::size_t e = m.offsets[o]; e < m.offsets[o + 1]; ++e) dst[m.index[e]] += m.weight[e] * g[o];
    }
  });
}

Var dice_loss(const Var& prediction, const Tensor& target, std::span<const double> weights, double smooth) {
  const Tensor& p = prediction.value();
  require(p.size() == target.size(), "dice_loss: prediction and target sizes differ");
  require(weights.empty() || weights.size() == p.size(), "dice_loss: weight size differs");
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    inter += w * p.data[i] * target.data[i];
    psum += w * p.data[i];
    tsum += w * target.data[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = psum + tsum + smooth;
  const double loss = 1.0 - num / den;
  auto t = std::make_shared<const Tensor>(target);
  auto wv = std::make_shared<const std::vector<double>>(weights.begin(), weights.end());
  return make_result(Tensor({1}, loss), {prediction.node()}, [t, wv, num, den](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    const double g = self.grad.data[0];
    const double den2 = den * den;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double w = wv->empty() ? 1.0 : (*wv)[i];
      d.data[i] += -g * w * (2.0 * t->data[i] * den - num) / den2;
    }
  });
}

}  // namespace rifenet::ag
