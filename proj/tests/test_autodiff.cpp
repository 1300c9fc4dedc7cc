#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <random>

#include "choreo/graph.hpp"
#include "choreo/nn.hpp"

using namespace choreo;
namespace ag = choreo::ag;

namespace {

// Central-difference oracle, independent of the graph's vjp rules.
double fd_partial(const std::function<double(const Tensor&)>& f, Tensor x, int64_t i,
                  double h = 1e-5) {
  x[i] += h;
  double fp = f(x);
  x[i] -= 2 * h;
  double fm = f(x);
  return (fp - fm) / (2 * h);
}

void check_grads(const std::function<ag::NodePtr(const ag::NodePtr&)>& build, const Tensor& x0,
                 double tol = 1e-6) {
  auto x = ag::leaf(x0, "x");
  auto y = build(x);
  REQUIRE(y->value.numel() == 1);
  auto grads = ag::backward(y);
  auto gx = ag::grad_of(grads, x);
  REQUIRE(gx);
  auto f = [&](const Tensor& t) { return build(ag::constant(t))->value.item(); };
  for (int64_t i = 0; i < x0.numel(); ++i) {
    double fd = fd_partial(f, x0, i);
    REQUIRE_THAT(gx->value[i], Catch::Matchers::WithinAbs(fd, tol) ||
                                   Catch::Matchers::WithinRel(fd, 1e-5));
  }
}

}  // namespace

TEST_CASE("elementwise forward values") {
  auto a = ag::constant(Tensor::from({2, 2}, {1, 2, 3, 4}));
  auto b = ag::constant(Tensor::from({2, 2}, {5, 6, 7, 8}));
  auto s = ag::add(a, b);
  CHECK(s->value[3] == 12);
  CHECK(ag::sub(b, a)->value[0] == 4);
  CHECK(ag::mul(a, b)->value[2] == 21);
  CHECK(ag::div(b, a)->value[1] == 3);
  CHECK(ag::sum_all(a)->value.item() == 10);
  CHECK(ag::mean_all(a)->value.item() == 2.5);
}

TEST_CASE("matmul and transpose agree with Eigen") {
  std::mt19937_64 rng(7);
  auto a = Tensor::uniform({3, 4}, -1, 1, rng);
  auto b = Tensor::uniform({4, 2}, -1, 1, rng);
  auto c = ag::matmul(ag::constant(a), ag::constant(b));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
      CHECK_THAT(c->value.at(i, j), Catch::Matchers::WithinAbs(s, 1e-12));
    }
  auto t = ag::transpose(ag::constant(a));
  CHECK(t->value.at(2, 1) == a.at(1, 2));
}

TEST_CASE("gradients of a dense composition match finite differences") {
  std::mt19937_64 rng(11);
  auto w = Tensor::uniform({5, 3}, -0.8, 0.8, rng);
  auto x0 = Tensor::uniform({2, 5}, -0.9, 0.9, rng);
  check_grads(
      [&](const ag::NodePtr& x) {
        auto h = ag::tanh_(ag::matmul(x, ag::constant(w)));
        auto s = ag::sigmoid(h);
        return ag::sum_all(ag::mul(ag::square(s), ag::add_const(h, 0.5)));
      },
      x0);
}

TEST_CASE("gradients of exp/log/sqrt/div compositions") {
  std::mt19937_64 rng(13);
  auto x0 = Tensor::uniform({3, 3}, 0.4, 1.6, rng);
  check_grads(
      [&](const ag::NodePtr& x) {
        auto a = ag::log_(ag::add_const(ag::square(x), 0.3));
        auto b = ag::sqrt_(ag::add_const(ag::exp_(ag::scale(x, -0.7)), 0.1));
        return ag::mean_all(ag::div(a, b));
      },
      x0);
}

TEST_CASE("gradients of abs/relu/leaky/clamp away from kinks") {
  std::mt19937_64 rng(17);
  Tensor x0 = Tensor::uniform({4, 4}, -1, 1, rng);
  for (int64_t i = 0; i < x0.numel(); ++i)
    if (std::abs(x0[i]) < 0.05) x0[i] = 0.21;  // keep clear of the kinks
  check_grads(
      [&](const ag::NodePtr& x) {
        auto y = ag::add(ag::abs_(x), ag::leaky_relu(ag::relu(x), 0.2));
        return ag::sum_all(ag::mul(y, ag::clamp(x, -0.9, 0.9)));
      },
      x0, 1e-5);
}

TEST_CASE("reduction and broadcast adjoints") {
  std::mt19937_64 rng(19);
  auto x0 = Tensor::uniform({3, 4}, -1, 1, rng);
  check_grads([](const ag::NodePtr& x) { return ag::sum_all(ag::square(ag::rowsum(x))); }, x0);
  check_grads([](const ag::NodePtr& x) { return ag::sum_all(ag::square(ag::colsum(x))); }, x0);
  check_grads(
      [](const ag::NodePtr& x) {
        return ag::sum_all(ag::square(ag::broadcast_cols(ag::rowsum(x), 5)));
      },
      x0);
  auto v0 = Tensor::uniform({1, 4}, -1, 1, rng);
  check_grads(
      [](const ag::NodePtr& x) {
        return ag::mean_all(ag::square(ag::broadcast_rows(x, 6)));
      },
      v0);
}

TEST_CASE("slice/pad/concat round trips and adjoints") {
  std::mt19937_64 rng(23);
  auto x0 = Tensor::uniform({6, 3}, -1, 1, rng);
  auto x = ag::constant(x0);
  auto back = ag::concat_rows({ag::slice_rows(x, 0, 2), ag::slice_rows(x, 2, 4)});
  for (int64_t i = 0; i < x0.numel(); ++i) CHECK(back->value[i] == x0[i]);
  auto back2 = ag::concat_cols({ag::slice_cols(x, 0, 1), ag::slice_cols(x, 1, 2)});
  for (int64_t i = 0; i < x0.numel(); ++i) CHECK(back2->value[i] == x0[i]);

  check_grads(
      [](const ag::NodePtr& x) {
        auto parts = ag::concat_cols({ag::slice_cols(x, 1, 2), ag::slice_cols(x, 0, 1)});
        return ag::sum_all(ag::square(ag::pad_rows(parts, 1, 8)));
      },
      x0);
}

TEST_CASE("gather and scatter are adjoint") {
  std::mt19937_64 rng(29);
  auto x0 = Tensor::uniform({4, 3}, -1, 1, rng);
  auto map = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{0, 5, 5, -1, 2, 7});
  check_grads(
      [&](const ag::NodePtr& x) {
        auto y = ag::gather_map(x, map, {2, 3});
        return ag::sum_all(ag::square(y));
      },
      x0);
  check_grads(
      [&](const ag::NodePtr& x) {
        auto y = ag::gather_rows(x, {3, 1, 1, 0});
        return ag::mean_all(ag::square(y));
      },
      x0);
}

TEST_CASE("frame_graph_mix matches per-frame dense product and its adjoint") {
  std::mt19937_64 rng(31);
  int frames = 3, v = 4, c = 2;
  auto a = Tensor::uniform({v, v}, -1, 1, rng);
  auto x0 = Tensor::uniform({frames * v, c}, -1, 1, rng);
  auto y = ag::frame_graph_mix(ag::constant(x0), a, frames, v);
  for (int f = 0; f < frames; ++f)
    for (int i = 0; i < v; ++i)
      for (int j = 0; j < c; ++j) {
        double s = 0;
        for (int u = 0; u < v; ++u) s += a.at(i, u) * x0.at(f * v + u, j);
        CHECK_THAT(y->value.at(f * v + i, j), Catch::Matchers::WithinAbs(s, 1e-12));
      }
  check_grads(
      [&](const ag::NodePtr& x) {
        return ag::sum_all(ag::square(ag::frame_graph_mix(x, a, frames, v)));
      },
      x0);
}

TEST_CASE("softmax_row normalizes and differentiates") {
  std::mt19937_64 rng(37);
  auto r0 = Tensor::uniform({1, 6}, -3, 3, rng);
  auto p = nn::softmax_row(ag::constant(r0));
  double s = 0;
  for (int64_t i = 0; i < 6; ++i) {
    CHECK(p->value[i] > 0);
    s += p->value[i];
  }
  CHECK_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
  check_grads(
      [](const ag::NodePtr& r) {
        auto q = nn::softmax_row(r);
        return ag::sum_all(ag::square(q));
      },
      r0);
}

TEST_CASE("second-order backward through a first-order gradient") {
  // y = sum(x^2); g = dy/dx = 2x; h = sum(g^2) = 4*sum(x^2); dh/dx = 8x.
  auto x = ag::leaf(Tensor::from({3}, {1.0, -2.0, 0.5}), "x");
  auto y = ag::sum_all(ag::square(x));
  auto g = ag::grad_of(ag::backward(y), x);
  REQUIRE(g);
  auto h = ag::sum_all(ag::square(g));
  CHECK_THAT(h->value.item(), Catch::Matchers::WithinAbs(4 * (1 + 4 + 0.25), 1e-12));
  auto g2 = ag::grad_of(ag::backward(h), x);
  REQUIRE(g2);
  CHECK_THAT(g2->value[0], Catch::Matchers::WithinAbs(8.0, 1e-12));
  CHECK_THAT(g2->value[1], Catch::Matchers::WithinAbs(-16.0, 1e-12));
  CHECK_THAT(g2->value[2], Catch::Matchers::WithinAbs(4.0, 1e-12));
}

TEST_CASE("second-order backward through matmul and tanh") {
  // Compare d/dx of ||d sum(tanh(xW)) / dx||^2 against finite differences.
  std::mt19937_64 rng(41);
  auto w = Tensor::uniform({3, 2}, -0.9, 0.9, rng);
  auto x0 = Tensor::uniform({1, 3}, -0.5, 0.5, rng);

  auto penalty_of = [&](const Tensor& xt, bool with_graph) -> std::pair<double, ag::NodePtr> {
    auto x = ag::leaf(xt, "x");
    auto y = ag::sum_all(ag::tanh_(ag::matmul(x, ag::constant(w))));
    auto gx = ag::grad_of(ag::backward(y), x);
    auto pen = ag::sum_all(ag::square(gx));
    return {pen->value.item(), with_graph ? ag::grad_of(ag::backward(pen), x) : nullptr};
  };

  auto [p0, gpen] = penalty_of(x0, true);
  REQUIRE(gpen);
  for (int64_t i = 0; i < x0.numel(); ++i) {
    double fd = fd_partial([&](const Tensor& t) { return penalty_of(t, false).first; }, x0, i);
    CHECK_THAT(gpen->value[i], Catch::Matchers::WithinAbs(fd, 1e-6));
  }
}

TEST_CASE("requires_grad gates traversal") {
  auto x = ag::leaf(Tensor::scalar(2.0), "x");
  auto frozen = ag::leaf(Tensor::scalar(3.0), "w");
  frozen->requires_grad = false;
  auto y = ag::mul(ag::square(x), frozen);
  auto grads = ag::backward(y);
  CHECK(ag::grad_of(grads, x));
  CHECK_FALSE(ag::grad_of(grads, frozen));
  CHECK_THAT(ag::grad_of(grads, x)->value.item(), Catch::Matchers::WithinAbs(12.0, 1e-12));
}

TEST_CASE("gradient accumulates across fan-out") {
  auto x = ag::leaf(Tensor::scalar(1.5), "x");
  auto y = ag::add(ag::square(x), ag::scale(x, 4.0));  // x^2 + 4x -> 2x + 4
  auto g = ag::grad_of(ag::backward(y), x);
  REQUIRE(g);
  CHECK_THAT(g->value.item(), Catch::Matchers::WithinAbs(7.0, 1e-12));
}

TEST_CASE("shape mismatches are rejected") {
  auto a = ag::constant(Tensor::zeros({2, 3}));
  auto b = ag::constant(Tensor::zeros({3, 2}));
  CHECK_THROWS_AS(ag::add(a, b), ShapeError);
  CHECK_THROWS_AS(ag::matmul(a, a), ShapeError);
  CHECK_THROWS_AS(ag::slice_rows(a, 1, 4), ShapeError);
}

TEST_CASE("GRU cell output matches a hand-rolled step") {
  std::mt19937_64 rng(43);
  nn::ParamSet ps;
  nn::GruCell cell(ps, "gru", 3, 2, rng);
  int t_steps = 4, batch = 1;
  auto x = Tensor::uniform({t_steps * batch, 3}, -1, 1, rng);
  auto out = cell.run(ag::constant(x), t_steps, batch, false);
  REQUIRE(out->rows() == t_steps);
  REQUIRE(out->cols() == 2);

  // Manual recurrence with the same weights.
  auto wih = cell.w_ih->value, whh = cell.w_hh->value;
  auto bih = cell.b_ih->value, bhh = cell.b_hh->value;
  std::vector<double> h(2, 0.0);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int t = 0; t < t_steps; ++t) {
    std::vector<double> gi(6, 0), gh(6, 0);
    for (int k = 0; k < 6; ++k) {
      for (int i = 0; i < 3; ++i) gi[k] += x.at(t, i) * wih.at(i, k);
      for (int i = 0; i < 2; ++i) gh[k] += h[i] * whh.at(i, k);
      gi[k] += bih[k];
      gh[k] += bhh[k];
    }
    for (int i = 0; i < 2; ++i) {
      double r = sig(gi[i] + gh[i]);
      double z = sig(gi[2 + i] + gh[2 + i]);
      double n = std::tanh(gi[4 + i] + r * gh[4 + i]);
      h[i] = (1 - z) * n + z * h[i];
    }
    for (int i = 0; i < 2; ++i)
      CHECK_THAT(out->value.at(t, i), Catch::Matchers::WithinAbs(h[i], 1e-10));
  }
}

TEST_CASE("GRU gradients match finite differences") {
  std::mt19937_64 rng(47);
  nn::ParamSet ps;
  nn::BiGru gru(ps, "g", 2, 3, 2, rng);
  auto x0 = Tensor::uniform({5, 2}, -1, 1, rng);  // T=5, B=1
  check_grads(
      [&](const ag::NodePtr& x) { return ag::mean_all(ag::square(gru.run(x, 5, 1))); }, x0,
      1e-5);
}

TEST_CASE("conv1d matches a direct convolution") {
  std::mt19937_64 rng(53);
  nn::ParamSet ps;
  nn::Conv1d conv(ps, "c", {.c_in = 2, .c_out = 3, .k = 3, .stride = 2, .pad = 1}, rng);
  int n = 2, l_in = 7;
  auto x = Tensor::uniform({n * l_in, 2}, -1, 1, rng);
  auto y = conv(ag::constant(x), n, l_in);
  int l_out = conv.geom().out_len(l_in);
  REQUIRE(l_out == 4);
  const auto& w = conv.geom();
  for (int s = 0; s < n; ++s)
    for (int lo = 0; lo < l_out; ++lo)
      for (int co = 0; co < 3; ++co) {
        double sum = 0;
        for (int ci = 0; ci < 2; ++ci)
          for (int k = 0; k < 3; ++k) {
            int li = lo * w.stride - w.pad + k;
            if (li < 0 || li >= l_in) continue;
            // weight rows are (channel, tap) pairs in channel-major order
            sum += x.at(s * l_in + li, ci) *
                   ps.find("c.w")->value.at(ci * 3 + k, co);
          }
        CHECK_THAT(y->value.at(s * l_out + lo, co), Catch::Matchers::WithinAbs(sum, 1e-10));
      }
}

TEST_CASE("conv1d input gradients match finite differences") {
  std::mt19937_64 rng(59);
  nn::ParamSet ps;
  nn::Conv1d conv(ps, "c", {.c_in = 2, .c_out = 2, .k = 3, .stride = 1, .pad = 1}, rng);
  auto x0 = Tensor::uniform({6, 2}, -1, 1, rng);
  check_grads(
      [&](const ag::NodePtr& x) { return ag::sum_all(ag::square(conv(x, 1, 6))); }, x0, 1e-5);
}

TEST_CASE("Adam drives a quadratic toward its minimum") {
  nn::ParamSet ps;
  auto p = ps.add("p", Tensor::from({2}, {3.0, -2.0}));
  nn::Adam opt(0.05);
  for (int i = 0; i < 400; ++i) {
    auto loss = ag::sum_all(ag::square(p));
    opt.step(ps, ag::backward(loss));
  }
  CHECK(std::abs(p->value[0]) < 1e-2);
  CHECK(std::abs(p->value[1]) < 1e-2);
}

TEST_CASE("layout permutations invert each other") {
  std::mt19937_64 rng(61);
  int batch = 3, t_steps = 4;
  auto x0 = Tensor::uniform({batch * t_steps, 2}, -1, 1, rng);
  auto tm = nn::to_time_major(ag::constant(x0), batch, t_steps);
  auto back = nn::to_sample_major(tm, batch, t_steps);
  for (int64_t i = 0; i < x0.numel(); ++i) CHECK(back->value[i] == x0[i]);
  // row (t*B + b) of the time-major view is row (b*T + t) of the original
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < t_steps; ++t)
      CHECK(tm->value.at(t * batch + b, 0) == x0.at(b * t_steps + t, 0));
}
