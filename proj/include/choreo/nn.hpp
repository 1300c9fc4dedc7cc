#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "choreo/graph.hpp"

namespace choreo::nn {

using Rng = std::mt19937_64;

// Named trainable leaves, in registration order (update order is fixed by it).
class ParamSet {
 public:
  ag::NodePtr add(const std::string& name, Tensor init) {
    auto p = ag::leaf(std::move(init), name);
    items_.push_back(p);
    return p;
  }

  const std::vector<ag::NodePtr>& items() const { return items_; }

  ag::NodePtr find(const std::string& name) const {
    for (const auto& p : items_)
      if (p->name == name) return p;
    return nullptr;
  }

  void set_requires_grad(bool on) const {
    for (const auto& p : items_) p->requires_grad = on;
  }

  int64_t numel() const {
    int64_t n = 0;
    for (const auto& p : items_) n += p->value.numel();
    return n;
  }

 private:
  std::vector<ag::NodePtr> items_;
};

// Temporarily freezes a parameter set (e.g. the discriminator during a
// generator update); graphs built inside the scope treat them as constants.
class FreezeGuard {
 public:
  explicit FreezeGuard(const ParamSet& ps) : ps_(ps) { ps_.set_requires_grad(false); }
  ~FreezeGuard() { ps_.set_requires_grad(true); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  const ParamSet& ps_;
};

inline Tensor glorot_uniform(int fan_in, int fan_out, Shape shape, Rng& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  return Tensor::uniform(std::move(shape), -limit, limit, rng);
}

// ---- layers ----

struct Linear {
  ag::NodePtr w, b;

  Linear() = default;
  Linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng)
      : w(ps.add(name + ".w", glorot_uniform(in, out, {in, out}, rng))),
        b(ps.add(name + ".b", Tensor::zeros({1, out}))) {}

  ag::NodePtr operator()(const ag::NodePtr& x) const {
    return ag::add_rowvec(ag::matmul(x, w), b);
  }
};

struct Conv1dGeom {
  int c_in = 1, c_out = 1, k = 3, stride = 1, pad = 0;
  int out_len(int l_in) const { return (l_in + 2 * pad - k) / stride + 1; }
};

// 1-D convolution over rows laid out as (n_samples * L) x C. Implemented as
// an index-map gather (im2col) followed by a GEMM, which keeps the op closed
// under repeated differentiation.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamSet& ps, const std::string& name, Conv1dGeom geom, Rng& rng) : geom_(geom) {
    int fan_in = geom.c_in * geom.k;
    w_ = ps.add(name + ".w", glorot_uniform(fan_in, geom.c_out, {fan_in, geom.c_out}, rng));
    b_ = ps.add(name + ".b", Tensor::zeros({1, geom.c_out}));
  }

  const Conv1dGeom& geom() const { return geom_; }

  ag::NodePtr operator()(const ag::NodePtr& x, int n_samples, int l_in) const {
    if (x->rows() != n_samples * l_in || x->cols() != geom_.c_in)
      throw ShapeError("conv1d: input is " + shape_str(x->shape()) + ", expected (" +
                       std::to_string(n_samples * l_in) + "," + std::to_string(geom_.c_in) + ")");
    int l_out = geom_.out_len(l_in);
    if (l_out <= 0) throw ShapeError("conv1d: input shorter than kernel");
    auto map = im2col_map(n_samples, l_in, l_out);
    auto cols = ag::gather_map(x, map, {n_samples * l_out, geom_.c_in * geom_.k});
    return ag::add_rowvec(ag::matmul(cols, w_), b_);
  }

 private:
  struct MapCache {
    std::mutex mutex;
    std::pair<int, int> key{-1, -1};
    ag::IndexMap map;
  };

  ag::IndexMap im2col_map(int n_samples, int l_in, int l_out) const {
    {
      std::lock_guard<std::mutex> lock(cache_->mutex);
      if (cache_->map && cache_->key == std::pair<int, int>{n_samples, l_in}) return cache_->map;
    }
    auto map = std::make_shared<std::vector<int64_t>>();
    map->reserve(static_cast<size_t>(n_samples) * l_out * geom_.c_in * geom_.k);
    for (int s = 0; s < n_samples; ++s)
      for (int lo = 0; lo < l_out; ++lo)
        for (int c = 0; c < geom_.c_in; ++c)
          for (int k = 0; k < geom_.k; ++k) {
            int li = lo * geom_.stride - geom_.pad + k;
            map->push_back(li < 0 || li >= l_in
                               ? -1
                               : (static_cast<int64_t>(s) * l_in + li) * geom_.c_in + c);
          }
    {
      std::lock_guard<std::mutex> lock(cache_->mutex);
      cache_->key = {n_samples, l_in};
      cache_->map = map;
    }
    return map;
  }

  Conv1dGeom geom_;
  ag::NodePtr w_, b_;
  std::shared_ptr<MapCache> cache_ = std::make_shared<MapCache>();
};

// One GRU direction. Gate layout follows the usual (r, z, n) convention.
struct GruCell {
  int in = 0, hidden = 0;
  ag::NodePtr w_ih, w_hh, b_ih, b_hh;

  GruCell() = default;
  GruCell(ParamSet& ps, const std::string& name, int in_, int hidden_, Rng& rng)
      : in(in_), hidden(hidden_) {
    w_ih = ps.add(name + ".w_ih", glorot_uniform(in, 3 * hidden, {in, 3 * hidden}, rng));
    w_hh = ps.add(name + ".w_hh", glorot_uniform(hidden, 3 * hidden, {hidden, 3 * hidden}, rng));
    b_ih = ps.add(name + ".b_ih", Tensor::zeros({1, 3 * hidden}));
    b_hh = ps.add(name + ".b_hh", Tensor::zeros({1, 3 * hidden}));
  }

  // x_tm: (T*B) x in, time-major. Returns (T*B) x hidden, time-major.
  ag::NodePtr run(const ag::NodePtr& x_tm, int t_steps, int batch, bool reversed) const {
    auto gi_all = ag::add_rowvec(ag::matmul(x_tm, w_ih), b_ih);
    ag::NodePtr h = ag::constant(Tensor::zeros({batch, hidden}));
    std::vector<ag::NodePtr> outs(static_cast<size_t>(t_steps));
    for (int step = 0; step < t_steps; ++step) {
      int t = reversed ? t_steps - 1 - step : step;
      auto gi = ag::slice_rows(gi_all, t * batch, batch);
      auto gh = ag::add_rowvec(ag::matmul(h, w_hh), b_hh);
      auto r = ag::sigmoid(ag::add(ag::slice_cols(gi, 0, hidden), ag::slice_cols(gh, 0, hidden)));
      auto z = ag::sigmoid(
          ag::add(ag::slice_cols(gi, hidden, hidden), ag::slice_cols(gh, hidden, hidden)));
      auto n = ag::tanh_(ag::add(ag::slice_cols(gi, 2 * hidden, hidden),
                                 ag::mul(r, ag::slice_cols(gh, 2 * hidden, hidden))));
      h = ag::add(ag::mul(ag::add_const(ag::neg(z), 1.0), n), ag::mul(z, h));
      outs[static_cast<size_t>(t)] = h;
    }
    return ag::concat_rows(outs);
  }
};

// Stacked bidirectional GRU; per-step output is the concatenation of both
// directions, so the hidden width doubles.
struct BiGru {
  std::vector<std::pair<GruCell, GruCell>> layers;

  BiGru() = default;
  BiGru(ParamSet& ps, const std::string& name, int in, int hidden, int n_layers, Rng& rng) {
    for (int l = 0; l < n_layers; ++l) {
      int li = l == 0 ? in : 2 * hidden;
      layers.emplace_back(GruCell(ps, name + ".l" + std::to_string(l) + ".fw", li, hidden, rng),
                          GruCell(ps, name + ".l" + std::to_string(l) + ".bw", li, hidden, rng));
    }
  }

  ag::NodePtr run(const ag::NodePtr& x_tm, int t_steps, int batch) const {
    ag::NodePtr h = x_tm;
    for (const auto& [fw, bw] : layers)
      h = ag::concat_cols({fw.run(h, t_steps, batch, false), bw.run(h, t_steps, batch, true)});
    return h;
  }
};

// ---- layout helpers ----

// (B*T) x C sample-major rows -> (T*B) x C time-major rows.
inline ag::NodePtr to_time_major(const ag::NodePtr& x, int batch, int t_steps) {
  std::vector<int> perm(static_cast<size_t>(batch) * t_steps);
  for (int t = 0; t < t_steps; ++t)
    for (int b = 0; b < batch; ++b) perm[static_cast<size_t>(t) * batch + b] = b * t_steps + t;
  return ag::gather_rows(x, perm);
}

inline ag::NodePtr to_sample_major(const ag::NodePtr& x, int batch, int t_steps) {
  std::vector<int> perm(static_cast<size_t>(batch) * t_steps);
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < t_steps; ++t) perm[static_cast<size_t>(b) * t_steps + t] = t * batch + b;
  return ag::gather_rows(x, perm);
}

// Rows of one clip from a time-major (T*B) x C tensor.
inline ag::NodePtr clip_rows_time_major(const ag::NodePtr& x, int clip, int batch, int t_steps) {
  std::vector<int> rows(static_cast<size_t>(t_steps));
  for (int t = 0; t < t_steps; ++t) rows[static_cast<size_t>(t)] = t * batch + clip;
  return ag::gather_rows(x, rows);
}

// Mean over each sample's contiguous row block: (n*rows_per) x C -> n x C.
inline ag::NodePtr mean_pool_rows(const ag::NodePtr& x, int n_samples, int rows_per) {
  if (x->rows() != n_samples * rows_per) throw ShapeError("mean_pool_rows: row count mismatch");
  std::vector<ag::NodePtr> pooled;
  pooled.reserve(static_cast<size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s)
    pooled.push_back(ag::scale(ag::colsum(ag::slice_rows(x, s * rows_per, rows_per)),
                               1.0 / rows_per));
  return ag::concat_rows(pooled);
}

inline ag::NodePtr sum_pool_rows(const ag::NodePtr& x, int n_samples, int rows_per) {
  if (x->rows() != n_samples * rows_per) throw ShapeError("sum_pool_rows: row count mismatch");
  std::vector<ag::NodePtr> pooled;
  pooled.reserve(static_cast<size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s)
    pooled.push_back(ag::colsum(ag::slice_rows(x, s * rows_per, rows_per)));
  return ag::concat_rows(pooled);
}

// Row-wise log-softmax; the per-row max shift is a plain constant, which is
// exact for the derivative.
inline ag::NodePtr log_softmax_rows(const ag::NodePtr& x) {
  int r = x->rows(), c = x->cols();
  Tensor shift({r, c});
  for (int i = 0; i < r; ++i) {
    double m = x->value.at(i, 0);
    for (int j = 1; j < c; ++j) m = std::max(m, x->value.at(i, j));
    for (int j = 0; j < c; ++j) shift.at(i, j) = m;
  }
  auto z = ag::sub(x, ag::constant(shift));
  auto lse = ag::log_(ag::rowsum(ag::exp_(z)));  // r x 1
  return ag::sub(z, ag::broadcast_cols(lse, c));
}

// Mean negative log-likelihood of integer labels under row-wise softmax.
inline ag::NodePtr cross_entropy(const ag::NodePtr& logits, const std::vector<int>& labels) {
  int r = logits->rows(), c = logits->cols();
  if (static_cast<int>(labels.size()) != r) throw ShapeError("cross_entropy: label count mismatch");
  Tensor onehot({r, c});
  for (int i = 0; i < r; ++i) {
    int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= c) throw ConfigError("cross_entropy: label out of range");
    onehot.at(i, y) = 1.0;
  }
  auto logp = log_softmax_rows(logits);
  return ag::scale(ag::sum_all(ag::mul(logp, ag::constant(onehot))), -1.0 / r);
}

// Numerically stable softmax of a 1 x n row. Shifting by the max value is
// exact for the derivative, so the shift may be a plain constant.
inline ag::NodePtr softmax_row(const ag::NodePtr& r) {
  double m = r->value[0];
  for (int64_t i = 1; i < r->value.numel(); ++i) m = std::max(m, r->value[i]);
  auto e = ag::exp_(ag::add_const(r, -m));
  auto s = ag::rowsum(e);  // 1 x 1
  return ag::div(e, ag::broadcast_cols(s, r->cols()));
}

// ---- optimizer ----

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr() const { return lr_; }
  int64_t step_count() const { return t_; }

  void step(const ParamSet& params, const ag::GradMap& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& p : params.items()) {
      auto g = ag::grad_of(grads, p);
      if (!g) continue;
      auto& slot = slots_[p->name];
      if (slot.m.numel() == 0) {
        slot.m = Tensor::zeros(p->value.shape());
        slot.v = Tensor::zeros(p->value.shape());
      }
      const Tensor& gv = g->value;
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        double gi = gv[i];
        slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * gi;
        slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * gi * gi;
        double mhat = slot.m[i] / bc1;
        double vhat = slot.v[i] / bc2;
        p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  struct Slot {
    Tensor m, v;
  };
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Slot> slots_;
};

}  // namespace choreo::nn
