#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "choreo/discriminator.hpp"
#include "choreo/fixtures.hpp"
#include "choreo/seq_tensor.hpp"

using namespace choreo;
namespace ag = choreo::ag;

namespace {

PoseBackboneConfig small_backbone() { return {.base_width = 8, .out_dim = 32}; }

GlobalDiscriminatorConfig small_global() {
  GlobalDiscriminatorConfig cfg;
  cfg.music_feature_dim = 16;
  cfg.rnn_hidden = 8;
  cfg.attention_dim = 6;
  cfg.pose = {.base_width = 8, .out_dim = cfg.k()};
  return cfg;
}

SkeletonSequence random_seq(int frames, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-0.8f, 0.8f);
  SkeletonSequence seq(frames);
  for (auto& v : seq.raw()) v = d(rng);
  return seq;
}

}  // namespace

TEST_CASE("graph temporal difference matches skeleton_core exactly") {
  auto seq = random_seq(11, 3);
  auto ref = temporal_difference(seq);
  auto node = temporal_difference_node(ag::constant(sequence_tensor(seq)), 1, 11);
  for (int t = 0; t < 11; ++t)
    for (int c = 0; c < kCoordsPerFrame; ++c)
      CHECK_THAT(node->value.at(t, c),
                 Catch::Matchers::WithinAbs(static_cast<double>(ref.at(t, c)), 1e-6));
}

TEST_CASE("pose backbone produces fixed-width features") {
  nn::Rng rng(4);
  nn::ParamSet ps;
  PoseBackbone bb(ps, "bb", rng, small_backbone());
  auto full = random_seq(50, 5);
  auto out = bb.forward(ag::constant(sequence_tensor(full)), 1, 50);
  CHECK(out.features->rows() == 1);
  CHECK(out.features->cols() == 32);
  auto win = random_seq(5, 6);
  auto out_w = bb.forward(ag::constant(sequence_tensor(win)), 1, 5);
  CHECK(out_w.features->cols() == 32);
  CHECK(out.taps.size() == 5);
}

TEST_CASE("full-size backbone emits the 256-wide pose feature") {
  nn::Rng rng(5);
  nn::ParamSet ps;
  PoseBackbone bb(ps, "bb", rng);  // defaults: width 32, out 256
  auto full = random_seq(50, 7);
  auto out = bb.forward(ag::constant(sequence_tensor(full)), 1, 50);
  CHECK(out.features->cols() == 256);
}

TEST_CASE("backbone is deterministic and rejects degenerate input") {
  nn::Rng rng(6);
  nn::ParamSet ps;
  PoseBackbone bb(ps, "bb", rng, small_backbone());
  auto seq = random_seq(8, 8);
  auto a = bb.forward(ag::constant(sequence_tensor(seq)), 1, 8);
  auto b = bb.forward(ag::constant(sequence_tensor(seq)), 1, 8);
  for (int c = 0; c < a.features->cols(); ++c)
    CHECK(a.features->value[c] == b.features->value[c]);
  auto one = random_seq(1, 9);
  CHECK_THROWS_AS(bb.forward(ag::constant(sequence_tensor(one)), 1, 1), DataError);
}

TEST_CASE("a constant sequence zeroes the second stream") {
  SkeletonSequence seq(7);
  for (auto& v : seq.raw()) v = 0.25f;
  auto d = temporal_difference_node(ag::constant(sequence_tensor(seq)), 1, 7);
  for (int64_t i = 0; i < d->value.numel(); ++i) CHECK(d->value[i] == 0.0);
}

TEST_CASE("a constant offset moves stream one only") {
  // The difference stream is shift-invariant, so offsetting every frame by
  // the same constant must leave stream 2 bit-identical.
  auto seq = random_seq(9, 10);
  SkeletonSequence shifted = seq;
  for (auto& v : shifted.raw()) v += 0.07f;
  auto d0 = temporal_difference_node(ag::constant(sequence_tensor(seq)), 1, 9);
  auto d1 = temporal_difference_node(ag::constant(sequence_tensor(shifted)), 1, 9);
  for (int64_t i = 0; i < d0->value.numel(); ++i)
    CHECK_THAT(d1->value[i], Catch::Matchers::WithinAbs(d0->value[i], 1e-6));
  // while the backbone output, which also sees stream 1, changes
  nn::Rng rng(11);
  nn::ParamSet ps;
  PoseBackbone bb(ps, "bb", rng, small_backbone());
  auto f0 = bb.forward(ag::constant(sequence_tensor(seq)), 1, 9);
  auto f1 = bb.forward(ag::constant(sequence_tensor(shifted)), 1, 9);
  double diff = 0;
  for (int c = 0; c < f0.features->cols(); ++c)
    diff += std::abs(f0.features->value[c] - f1.features->value[c]);
  CHECK(diff > 1e-9);
}

TEST_CASE("local discriminator scores one window independently of the rest") {
  nn::Rng rng(12);
  LocalTemporalDiscriminator dl(rng, small_backbone());
  auto seq = random_seq(50, 13);
  auto batch = window(seq, 5, 16);
  auto scores = dl.scores(batch);
  REQUIRE(scores->rows() == 16);
  for (int k = 0; k < 16; ++k) {
    CHECK(scores->value[k] > 0.0);
    CHECK(scores->value[k] < 1.0);
  }
}

TEST_CASE("duplicating a window duplicates its score") {
  nn::Rng rng(14);
  LocalTemporalDiscriminator dl(rng, small_backbone());
  auto w0 = random_seq(5, 15);
  auto w1 = random_seq(5, 16);
  WindowBatch batch;
  batch.window_len = 5;
  batch.stride = 0;
  batch.windows = {w0, w1, w0};
  auto scores = dl.scores(batch);
  REQUIRE(scores->rows() == 3);
  CHECK(scores->value[0] == scores->value[2]);
}

TEST_CASE("permuting windows permutes scores identically") {
  nn::Rng rng(17);
  LocalTemporalDiscriminator dl(rng, small_backbone());
  WindowBatch batch;
  batch.window_len = 4;
  for (int i = 0; i < 6; ++i) batch.windows.push_back(random_seq(4, 100 + static_cast<uint64_t>(i)));
  auto base = dl.scores(batch);
  std::vector<int> perm{5, 2, 0, 4, 1, 3};
  WindowBatch shuffled;
  shuffled.window_len = 4;
  for (int i : perm) shuffled.windows.push_back(batch.windows[static_cast<size_t>(i)]);
  auto permuted = dl.scores(shuffled);
  for (int i = 0; i < 6; ++i)
    CHECK(permuted->value[i] == base->value[perm[static_cast<size_t>(i)]]);
}

TEST_CASE("unequal window lengths are rejected") {
  nn::Rng rng(18);
  LocalTemporalDiscriminator dl(rng, small_backbone());
  WindowBatch batch;
  batch.window_len = 5;
  batch.windows = {random_seq(5, 19), random_seq(4, 20)};
  CHECK_THROWS_AS(dl.scores(batch), ShapeError);
}

TEST_CASE("softmax attention weights sum to one") {
  nn::Rng rng(21);
  nn::ParamSet ps;
  int k = 10, l = 4, t = 7;
  auto w1 = ps.add("w1", nn::glorot_uniform(k, l, {l, k}, rng));
  auto w2 = ps.add("w2", nn::glorot_uniform(l, 1, {1, l}, rng));
  auto o = ag::constant(Tensor::uniform({t, k}, -1, 1, rng));
  auto r = ag::matmul(w2, ag::tanh_(ag::matmul(w1, ag::transpose(o))));
  auto p = nn::softmax_row(r);
  double sum = 0;
  for (int i = 0; i < t; ++i) {
    CHECK(p->value[i] >= 0.0);
    sum += p->value[i];
  }
  CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("equal attention logits average the hidden states") {
  // With all r_i equal the softmax weights are uniform and the pooled
  // feature is the column mean of O.
  nn::Rng rng(22);
  int k = 6, t = 5;
  auto w1 = ag::constant(Tensor::zeros({3, k}));
  auto w2 = ag::constant(Tensor::zeros({1, 3}));
  auto o = ag::constant(Tensor::uniform({t, k}, -1, 1, rng));
  auto f = attention_pool(o, w1, w2, AttentionMode::kSoftmax);
  for (int c = 0; c < k; ++c) {
    double mean = 0;
    for (int i = 0; i < t; ++i) mean += o->value.at(i, c);
    mean /= t;
    CHECK_THAT(f->value[c], Catch::Matchers::WithinAbs(mean, 1e-9));
  }
}

TEST_CASE("paper neglog mode matches the hand-computed two-step case") {
  // T=2, r=(0,0): a_i = -log softmax = log 2, F_M = log2 * (row sum of O).
  nn::Rng rng(23);
  int k = 4;
  auto w1 = ag::constant(Tensor::zeros({3, k}));
  auto w2 = ag::constant(Tensor::zeros({1, 3}));
  auto o = ag::constant(Tensor::uniform({2, k}, -1, 1, rng));
  auto f = attention_pool(o, w1, w2, AttentionMode::kPaperNegLog);
  for (int c = 0; c < k; ++c) {
    double expect = std::log(2.0) * (o->value.at(0, c) + o->value.at(1, c));
    CHECK_THAT(f->value[c], Catch::Matchers::WithinAbs(expect, 1e-9));
  }
}

TEST_CASE("global discriminator scores lie strictly inside (0,1)") {
  nn::Rng rng(24);
  GlobalContentDiscriminator dg(rng, small_global());
  auto seq = random_seq(10, 25);
  auto clip = fixtures::make_audio(2, 1.05, 26);
  auto music = slice_pieces(clip, 10);
  auto out = dg.forward(seq, music);
  REQUIRE(out.score->value.numel() == 1);
  CHECK(out.score->value[0] > 0.0);
  CHECK(out.score->value[0] < 1.0);
  auto out2 = dg.forward(seq, music);
  CHECK(out.score->value[0] == out2.score->value[0]);  // deterministic
}

TEST_CASE("frame-count mismatch between pose and music is rejected") {
  nn::Rng rng(27);
  GlobalContentDiscriminator dg(rng, small_global());
  auto seq = random_seq(9, 28);
  auto clip = fixtures::make_audio(0, 1.05, 29);
  CHECK_THROWS_AS(dg.forward(seq, slice_pieces(clip, 10)), ShapeError);
}

TEST_CASE("the global score depends on the music input") {
  // Finite-difference probe: perturbing a music sample moves the score.
  nn::Rng rng(30);
  GlobalContentDiscriminator dg(rng, small_global());
  auto seq = random_seq(6, 31);
  auto clip = fixtures::make_audio(3, 0.65, 32);
  auto music = slice_pieces(clip, 6);
  auto seq_node = ag::constant(sequence_tensor(seq));
  auto base = dg.forward(seq_node, ag::constant(pieces_tensor(music)), 1, 6).score->value[0];
  double h = 1e-3;
  double max_move = 0;
  for (int64_t i : {int64_t{10}, int64_t{700}, int64_t{5000}}) {
    auto bumped = pieces_tensor(music);
    bumped[i] += h;
    double s = dg.forward(seq_node, ag::constant(bumped), 1, 6).score->value[0];
    max_move = std::max(max_move, std::abs(s - base) / h);
  }
  CHECK(max_move > 1e-9);
}

TEST_CASE("global discriminator exposes its intermediate layers") {
  nn::Rng rng(33);
  GlobalContentDiscriminator dg(rng, small_global());
  auto seq = random_seq(8, 34);
  auto clip = fixtures::make_audio(1, 0.85, 35);
  auto out = dg.forward(seq, slice_pieces(clip, 8));
  // 5 pose taps + music feature + fused + logit
  CHECK(out.taps.size() == 8);
  CHECK(out.f_music->cols() == small_global().k());
  CHECK(out.f_pose->cols() == small_global().k());
}
