#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "choreo/tensor.hpp"

// Reverse-mode autodiff on an eagerly evaluated tape. Every vjp rule is
// expressed in terms of the primitives below, so gradients are themselves
// differentiable graphs; calling backward() on a node produced by a prior
// backward() yields second-order derivatives (used by the gradient penalty).
namespace choreo::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using VjpFn = std::function<std::vector<NodePtr>(const NodePtr& self, const NodePtr& g)>;

struct Node {
  Tensor value;
  std::vector<NodePtr> inputs;
  VjpFn vjp;  // empty for leaves and constants
  bool requires_grad = false;
  bool is_leaf = false;
  std::string name;

  const Shape& shape() const { return value.shape(); }
  int rows() const { return value.rows(); }
  int cols() const { return value.cols(); }
};

inline NodePtr constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

inline NodePtr scalar_const(double v) { return constant(Tensor::scalar(v)); }

// Trainable leaf; gradients accumulate for it during backward().
inline NodePtr leaf(Tensor t, std::string name = "") {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  n->is_leaf = true;
  n->name = std::move(name);
  return n;
}

inline NodePtr detach(const NodePtr& x) { return constant(x->value); }

inline NodePtr make(Tensor value, std::vector<NodePtr> inputs, VjpFn vjp) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs)
    if (in->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->vjp = std::move(vjp);
  return n;
}

inline void check_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape()) +
                     " vs " + shape_str(b->shape()));
}

// ---- elementwise binary ----

inline NodePtr add(const NodePtr& a, const NodePtr& b);
inline NodePtr sub(const NodePtr& a, const NodePtr& b);
inline NodePtr mul(const NodePtr& a, const NodePtr& b);
inline NodePtr div(const NodePtr& a, const NodePtr& b);
inline NodePtr neg(const NodePtr& a);
inline NodePtr scale(const NodePtr& a, double c);
inline NodePtr square(const NodePtr& a);

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make(std::move(out), {a, b}, [](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{g, g};
  });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make(std::move(out), {a, b}, [](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{g, neg(g)};
  });
}

inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make(std::move(out), {a, b}, [](const NodePtr& self, const NodePtr& g) {
    return std::vector<NodePtr>{mul(g, self->inputs[1]), mul(g, self->inputs[0])};
  });
}

inline NodePtr div(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "div");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] /= b->value[i];
  return make(std::move(out), {a, b}, [](const NodePtr& self, const NodePtr& g) {
    const NodePtr& a_ = self->inputs[0];
    const NodePtr& b_ = self->inputs[1];
    NodePtr ga = div(g, b_);
    NodePtr gb = neg(mul(g, div(a_, square(b_))));
    return std::vector<NodePtr>{ga, gb};
  });
}

// ---- elementwise unary ----

inline NodePtr neg(const NodePtr& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = -out[i];
  return make(std::move(out), {a}, [](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{neg(g)};
  });
}

inline NodePtr scale(const NodePtr& a, double c) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return make(std::move(out), {a}, [c](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{scale(g, c)};
  });
}

inline NodePtr add_const(const NodePtr& a, double c) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
  return make(std::move(out), {a}, [](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{g};
  });
}

inline NodePtr exp_(const NodePtr& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  return make(std::move(out), {a}, [](const NodePtr& self, const NodePtr& g) {
    return std::vector<NodePtr>{mul(g, self)};
  });
}

inline NodePtr log_(const NodePtr& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
  return make(std::move(out), {a}, [](const NodePtr& self, const NodePtr& g) {
    return std::vector<NodePtr>{div(g, self->inputs[0])};
  });
}

inline NodePtr tanh_(const NodePtr& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  return make(std::move(out), {a}, [](const NodePtr& self, const NodePtr& g) {
    // g * (1 - y^2)
    return std::vector<NodePtr>{mul(g, add_const(neg(square(self)), 1.0))};
  });
}

inline NodePtr sigmoid(const NodePtr& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) {
    double x = out[i];
    out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return make(std::move(out), {a}, [](const NodePtr& self, const NodePtr& g) {
    // g * y * (1 - y)
    return std::vector<NodePtr>{mul(g, mul(self, add_const(neg(self), 1.0)))};
  });
}

inline NodePtr square(const NodePtr& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= out[i];
  return make(std::move(out), {a}, [](const NodePtr& self, const NodePtr& g) {
    return std::vector<NodePtr>{mul(g, scale(self->inputs[0], 2.0))};
  });
}

inline NodePtr sqrt_(const NodePtr& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(out[i]);
  return make(std::move(out), {a}, [](const NodePtr& self, const NodePtr& g) {
    return std::vector<NodePtr>{div(scale(g, 0.5), self)};
  });
}

// Piecewise-constant factor; carries no gradient of its own.
inline NodePtr nondiff_unary(const NodePtr& a, const std::function<double(double)>& f) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(out[i]);
  auto n = std::make_shared<Node>();
  n->value = std::move(out);
  return n;  // constant: no inputs, no grad path
}

inline NodePtr sign_of(const NodePtr& a) {
  return nondiff_unary(a, [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline NodePtr abs_(const NodePtr& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::abs(out[i]);
  return make(std::move(out), {a}, [](const NodePtr& self, const NodePtr& g) {
    return std::vector<NodePtr>{mul(g, sign_of(self->inputs[0]))};
  });
}

inline NodePtr relu(const NodePtr& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0 ? out[i] : 0.0;
  return make(std::move(out), {a}, [](const NodePtr& self, const NodePtr& g) {
    NodePtr mask = nondiff_unary(self->inputs[0], [](double x) { return x > 0 ? 1.0 : 0.0; });
    return std::vector<NodePtr>{mul(g, mask)};
  });
}

inline NodePtr leaky_relu(const NodePtr& a, double alpha = 0.2) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0 ? out[i] : alpha * out[i];
  return make(std::move(out), {a}, [alpha](const NodePtr& self, const NodePtr& g) {
    NodePtr mask = nondiff_unary(self->inputs[0], [alpha](double x) { return x > 0 ? 1.0 : alpha; });
    return std::vector<NodePtr>{mul(g, mask)};
  });
}

inline NodePtr clamp(const NodePtr& a, double lo, double hi) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(hi, std::max(lo, out[i]));
  return make(std::move(out), {a}, [lo, hi](const NodePtr& self, const NodePtr& g) {
    NodePtr mask = nondiff_unary(self->inputs[0],
                                 [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
    return std::vector<NodePtr>{mul(g, mask)};
  });
}

// ---- linear algebra ----

inline NodePtr transpose(const NodePtr& a);

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 || a->cols() != b->rows())
    throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape()) + " x " +
                     shape_str(b->shape()));
  Tensor out({a->rows(), b->cols()});
  out.mat().noalias() = a->value.mat() * b->value.mat();
  return make(std::move(out), {a, b}, [](const NodePtr& self, const NodePtr& g) {
    return std::vector<NodePtr>{matmul(g, transpose(self->inputs[1])),
                                matmul(transpose(self->inputs[0]), g)};
  });
}

inline NodePtr transpose(const NodePtr& a) {
  if (a->value.rank() != 2) throw ShapeError("transpose: rank-2 tensor required");
  Tensor out({a->cols(), a->rows()});
  out.mat().noalias() = a->value.mat().transpose();
  return make(std::move(out), {a}, [](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{transpose(g)};
  });
}

// ---- shape ops ----

inline NodePtr reshape(const NodePtr& a, Shape shape) {
  if (shape_numel(shape) != a->value.numel())
    throw ShapeError("reshape: element count mismatch");
  Tensor out(std::move(shape), a->value.vec());
  Shape in_shape = a->value.shape();
  return make(std::move(out), {a}, [in_shape](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{reshape(g, in_shape)};
  });
}

inline NodePtr slice_rows(const NodePtr& a, int row0, int n);
inline NodePtr pad_rows(const NodePtr& a, int row0, int total_rows);
inline NodePtr slice_cols(const NodePtr& a, int col0, int n);
inline NodePtr pad_cols(const NodePtr& a, int col0, int total_cols);

inline NodePtr slice_rows(const NodePtr& a, int row0, int n) {
  int r = a->rows(), c = a->cols();
  if (row0 < 0 || n < 0 || row0 + n > r) throw ShapeError("slice_rows: out of range");
  Tensor out({n, c});
  std::copy(a->value.data() + static_cast<int64_t>(row0) * c,
            a->value.data() + static_cast<int64_t>(row0 + n) * c, out.data());
  return make(std::move(out), {a}, [row0, r](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{pad_rows(g, row0, r)};
  });
}

inline NodePtr pad_rows(const NodePtr& a, int row0, int total_rows) {
  int n = a->rows(), c = a->cols();
  Tensor out({total_rows, c});
  std::copy(a->value.data(), a->value.data() + static_cast<int64_t>(n) * c,
            out.data() + static_cast<int64_t>(row0) * c);
  return make(std::move(out), {a}, [row0, n](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{slice_rows(g, row0, n)};
  });
}

inline NodePtr slice_cols(const NodePtr& a, int col0, int n) {
  int r = a->rows(), c = a->cols();
  if (col0 < 0 || n < 0 || col0 + n > c) throw ShapeError("slice_cols: out of range");
  Tensor out({r, n});
  for (int i = 0; i < r; ++i)
    std::copy(a->value.data() + static_cast<int64_t>(i) * c + col0,
              a->value.data() + static_cast<int64_t>(i) * c + col0 + n,
              out.data() + static_cast<int64_t>(i) * n);
  return make(std::move(out), {a}, [col0, c](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{pad_cols(g, col0, c)};
  });
}

inline NodePtr pad_cols(const NodePtr& a, int col0, int total_cols) {
  int r = a->rows(), n = a->cols();
  Tensor out({r, total_cols});
  for (int i = 0; i < r; ++i)
    std::copy(a->value.data() + static_cast<int64_t>(i) * n,
              a->value.data() + static_cast<int64_t>(i) * n + n,
              out.data() + static_cast<int64_t>(i) * total_cols + col0);
  return make(std::move(out), {a}, [col0, n](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{slice_cols(g, col0, n)};
  });
}

inline NodePtr concat_rows(const std::vector<NodePtr>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows: empty input");
  int c = xs[0]->cols(), total = 0;
  for (const auto& x : xs) {
    if (x->cols() != c) throw ShapeError("concat_rows: column mismatch");
    total += x->rows();
  }
  Tensor out({total, c});
  int64_t off = 0;
  for (const auto& x : xs) {
    std::copy(x->value.data(), x->value.data() + x->value.numel(), out.data() + off);
    off += x->value.numel();
  }
  std::vector<int> row_of;
  int r0 = 0;
  for (const auto& x : xs) { row_of.push_back(r0); r0 += x->rows(); }
  return make(std::move(out), xs, [row_of](const NodePtr& self, const NodePtr& g) {
    std::vector<NodePtr> gs;
    for (size_t i = 0; i < self->inputs.size(); ++i)
      gs.push_back(slice_rows(g, row_of[i], self->inputs[i]->rows()));
    return gs;
  });
}

inline NodePtr concat_cols(const std::vector<NodePtr>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols: empty input");
  int r = xs[0]->rows(), total = 0;
  for (const auto& x : xs) {
    if (x->rows() != r) throw ShapeError("concat_cols: row mismatch");
    total += x->cols();
  }
  Tensor out({r, total});
  int c0 = 0;
  for (const auto& x : xs) {
    int c = x->cols();
    for (int i = 0; i < r; ++i)
      std::copy(x->value.data() + static_cast<int64_t>(i) * c,
                x->value.data() + static_cast<int64_t>(i) * c + c,
                out.data() + static_cast<int64_t>(i) * total + c0);
    c0 += c;
  }
  std::vector<int> col_of;
  int cc = 0;
  for (const auto& x : xs) { col_of.push_back(cc); cc += x->cols(); }
  return make(std::move(out), xs, [col_of](const NodePtr& self, const NodePtr& g) {
    std::vector<NodePtr> gs;
    for (size_t i = 0; i < self->inputs.size(); ++i)
      gs.push_back(slice_cols(g, col_of[i], self->inputs[i]->cols()));
    return gs;
  });
}

// ---- gather / scatter ----

using IndexMap = std::shared_ptr<const std::vector<int64_t>>;

inline NodePtr scatter_map(const NodePtr& a, const IndexMap& map, Shape in_shape);

// out[i] = map[i] >= 0 ? x[map[i]] : 0
inline NodePtr gather_map(const NodePtr& a, const IndexMap& map, Shape out_shape) {
  if (static_cast<int64_t>(map->size()) != shape_numel(out_shape))
    throw ShapeError("gather_map: map size does not match output shape");
  Tensor out(std::move(out_shape));
  const auto& m = *map;
  const double* src = a->value.data();
  double* dst = out.data();
  for (size_t i = 0; i < m.size(); ++i) dst[i] = m[i] >= 0 ? src[m[i]] : 0.0;
  Shape in_shape = a->value.shape();
  return make(std::move(out), {a}, [map, in_shape](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{scatter_map(g, map, in_shape)};
  });
}

// out[map[i]] += x[i]; adjoint of gather_map
inline NodePtr scatter_map(const NodePtr& a, const IndexMap& map, Shape in_shape) {
  if (static_cast<int64_t>(map->size()) != a->value.numel())
    throw ShapeError("scatter_map: map size does not match input");
  Tensor out(in_shape);
  const auto& m = *map;
  const double* src = a->value.data();
  double* dst = out.data();
  for (size_t i = 0; i < m.size(); ++i)
    if (m[i] >= 0) dst[m[i]] += src[i];
  Shape out_shape = a->value.shape();
  return make(std::move(out), {a}, [map, out_shape](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{gather_map(g, map, out_shape)};
  });
}

inline NodePtr gather_rows(const NodePtr& a, const std::vector<int>& rows) {
  int c = a->cols();
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(rows.size() * static_cast<size_t>(c));
  for (int r : rows) {
    if (r < 0 || r >= a->rows()) throw ShapeError("gather_rows: row out of range");
    for (int j = 0; j < c; ++j) map->push_back(static_cast<int64_t>(r) * c + j);
  }
  return gather_map(a, map, {static_cast<int>(rows.size()), c});
}

// ---- reductions / broadcasts ----

inline NodePtr broadcast_all(const NodePtr& a, Shape shape);

inline NodePtr sum_all(const NodePtr& a) {
  double s = 0;
  for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
  Shape in_shape = a->value.shape();
  return make(Tensor::scalar(s), {a}, [in_shape](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{broadcast_all(g, in_shape)};
  });
}

inline NodePtr mean_all(const NodePtr& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

inline NodePtr broadcast_all(const NodePtr& a, Shape shape) {
  if (a->value.numel() != 1) throw ShapeError("broadcast_all: scalar required");
  Tensor out = Tensor::full(std::move(shape), a->value[0]);
  return make(std::move(out), {a}, [](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{sum_all(g)};
  });
}

inline NodePtr broadcast_cols(const NodePtr& a, int n_cols);
inline NodePtr broadcast_rows(const NodePtr& a, int n_rows);
inline NodePtr colsum(const NodePtr& a);

// m x n -> m x 1
inline NodePtr rowsum(const NodePtr& a) {
  int r = a->rows(), c = a->cols();
  Tensor out({r, 1});
  for (int i = 0; i < r; ++i) {
    double s = 0;
    for (int j = 0; j < c; ++j) s += a->value.at(i, j);
    out[i] = s;
  }
  return make(std::move(out), {a}, [c](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{broadcast_cols(g, c)};
  });
}

// m x n -> 1 x n
inline NodePtr colsum(const NodePtr& a) {
  int r = a->rows(), c = a->cols();
  Tensor out({1, c});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j] += a->value.at(i, j);
  return make(std::move(out), {a}, [r](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{broadcast_rows(g, r)};
  });
}

// m x 1 -> m x n
inline NodePtr broadcast_cols(const NodePtr& a, int n_cols) {
  if (a->cols() != 1) throw ShapeError("broadcast_cols: column vector required");
  int r = a->rows();
  Tensor out({r, n_cols});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n_cols; ++j) out.at(i, j) = a->value[i];
  return make(std::move(out), {a}, [](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{rowsum(g)};
  });
}

// 1 x n -> m x n
inline NodePtr broadcast_rows(const NodePtr& a, int n_rows) {
  if (a->rows() != 1) throw ShapeError("broadcast_rows: row vector required");
  int c = a->cols();
  Tensor out({n_rows, c});
  for (int i = 0; i < n_rows; ++i)
    std::copy(a->value.data(), a->value.data() + c, out.data() + static_cast<int64_t>(i) * c);
  return make(std::move(out), {a}, [](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{colsum(g)};
  });
}

// matrix (m x n) + row vector (1 x n)
inline NodePtr add_rowvec(const NodePtr& a, const NodePtr& b) {
  if (b->rows() != 1 || b->cols() != a->cols())
    throw ShapeError("add_rowvec: bias shape mismatch");
  Tensor out = a->value;
  int r = a->rows(), c = a->cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) += b->value[j];
  return make(std::move(out), {a, b}, [](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{g, colsum(g)};
  });
}

// Per-frame graph mixing for skeleton data laid out as (frames*V) x C rows:
// y[f, v] = sum_u A[v, u] * x[f, u]. A is a fixed adjacency-derived matrix.
inline NodePtr frame_graph_mix(const NodePtr& x, const Tensor& a_mat, int n_frames, int v) {
  int c = x->cols();
  if (x->rows() != n_frames * v) throw ShapeError("frame_graph_mix: row count mismatch");
  if (a_mat.rows() != v || a_mat.cols() != v) throw ShapeError("frame_graph_mix: bad mixing matrix");
  Tensor out({n_frames * v, c});
  for (int f = 0; f < n_frames; ++f) {
    auto xf = Eigen::Map<const Tensor::EigenMat>(x->value.data() + static_cast<int64_t>(f) * v * c, v, c);
    auto yf = Eigen::Map<Tensor::EigenMat>(out.data() + static_cast<int64_t>(f) * v * c, v, c);
    yf.noalias() = a_mat.mat() * xf;
  }
  Tensor a_t({v, v});
  a_t.mat() = a_mat.mat().transpose();
  return make(std::move(out), {x}, [a_t, n_frames, v](const NodePtr&, const NodePtr& g) {
    return std::vector<NodePtr>{frame_graph_mix(g, a_t, n_frames, v)};
  });
}

// ---- backward ----

using GradMap = std::unordered_map<const Node*, NodePtr>;

inline std::vector<Node*> topo_order(const NodePtr& root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node* in = node->inputs[idx++].get();
      if (in->requires_grad && !seen.count(in)) {
        seen.insert(in);
        stack.emplace_back(in, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // children before parents
}

// Gradients of `root` (any shape; seeded with ones) with respect to every
// reachable grad-requiring node. Returned gradients are themselves graph
// nodes, so they can be differentiated again.
inline GradMap backward(const NodePtr& root) {
  GradMap grads;
  if (!root->requires_grad) return grads;
  grads[root.get()] = constant(Tensor::full(root->value.shape(), 1.0));
  auto order = topo_order(root);
  // Keep nodes alive by address while traversing: the graph owns them via
  // inputs chains from root, which outlives this call.
  std::unordered_map<const Node*, NodePtr> ptr_of;
  ptr_of[root.get()] = root;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto git = grads.find(node);
    if (git == grads.end() || !node->vjp) continue;
    NodePtr self = ptr_of.count(node) ? ptr_of[node] : nullptr;
    if (!self) continue;  // unreachable
    auto input_grads = node->vjp(self, git->second);
    for (size_t i = 0; i < node->inputs.size(); ++i) {
      const NodePtr& in = node->inputs[i];
      if (!in->requires_grad) continue;
      if (i < input_grads.size() && input_grads[i]) {
        auto g2 = grads.find(in.get());
        if (g2 == grads.end())
          grads[in.get()] = input_grads[i];
        else
          g2->second = add(g2->second, input_grads[i]);
      }
      ptr_of[in.get()] = in;
    }
  }
  return grads;
}

inline NodePtr grad_of(const GradMap& grads, const NodePtr& x) {
  auto it = grads.find(x.get());
  return it == grads.end() ? nullptr : it->second;
}

}  // namespace choreo::ag
