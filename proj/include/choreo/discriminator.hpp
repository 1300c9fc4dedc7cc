#pragma once

#include <string>
#include <vector>

#include "choreo/generator.hpp"
#include "choreo/nn.hpp"
#include "choreo/seq_tensor.hpp"

namespace choreo {

// Graph-side temporal difference, matching skeleton_core's exactly: frame
// deltas linearly resampled back to T frames. seq is sample-major (B*T) x C.
inline ag::NodePtr temporal_difference_node(const ag::NodePtr& seq, int batch, int t_len) {
  if (t_len < 2) throw DataError("temporal difference needs at least 2 frames");
  if (seq->rows() != batch * t_len) throw ShapeError("temporal_difference_node: row mismatch");
  int c = seq->cols();
  std::vector<int> cur, nxt;
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t + 1 < t_len; ++t) {
      cur.push_back(b * t_len + t);
      nxt.push_back(b * t_len + t + 1);
    }
  auto diff = ag::sub(ag::gather_rows(seq, nxt), ag::gather_rows(seq, cur));
  auto cs = resample_coeffs(t_len - 1, t_len);
  std::vector<int> lo, hi;
  Tensor w_lo({batch * t_len, c}), w_hi({batch * t_len, c});
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < t_len; ++t) {
      const auto& rc = cs[static_cast<size_t>(t)];
      lo.push_back(b * (t_len - 1) + rc.lo);
      hi.push_back(b * (t_len - 1) + rc.hi);
      for (int j = 0; j < c; ++j) {
        w_lo.at(b * t_len + t, j) = 1.0 - rc.w;
        w_hi.at(b * t_len + t, j) = rc.w;
      }
    }
  return ag::add(ag::mul(ag::gather_rows(diff, lo), ag::constant(w_lo)),
                 ag::mul(ag::gather_rows(diff, hi), ag::constant(w_hi)));
}

struct PoseBackboneConfig {
  int base_width = 32;  // per-stream widths: w, 2w, 4w; fused width 8w
  int out_dim = 256;
};

// Two-stream pose feature extractor: raw coordinates and their temporal
// difference pass separate convolutional stacks, feature maps fuse by
// channel concatenation, then fused convolutions and a projection.
class PoseBackbone {
 public:
  PoseBackbone() = default;
  PoseBackbone(nn::ParamSet& ps, const std::string& name, nn::Rng& rng,
               PoseBackboneConfig cfg = {})
      : cfg_(cfg) {
    int w = cfg.base_width;
    for (int s = 0; s < 2; ++s) {
      std::string sn = name + ".s" + std::to_string(s + 1);
      stream_[s][0] = nn::Conv1d(ps, sn + ".conv1",
                                 {.c_in = kCoordsPerFrame, .c_out = w, .k = 3, .stride = 1, .pad = 1},
                                 rng);
      stream_[s][1] = nn::Conv1d(ps, sn + ".conv2",
                                 {.c_in = w, .c_out = 2 * w, .k = 3, .stride = 1, .pad = 1}, rng);
      stream_[s][2] = nn::Conv1d(ps, sn + ".conv3",
                                 {.c_in = 2 * w, .c_out = 4 * w, .k = 3, .stride = 1, .pad = 1},
                                 rng);
    }
    fused_[0] = nn::Conv1d(ps, name + ".fused1",
                           {.c_in = 8 * w, .c_out = 8 * w, .k = 3, .stride = 1, .pad = 1}, rng);
    fused_[1] = nn::Conv1d(ps, name + ".fused2",
                           {.c_in = 8 * w, .c_out = 8 * w, .k = 3, .stride = 1, .pad = 1}, rng);
    fc_ = nn::Linear(ps, name + ".fc", 8 * w, cfg.out_dim, rng);
  }

  struct Out {
    ag::NodePtr features;            // B x out_dim
    std::vector<ag::NodePtr> taps;   // intermediate layers, shallow to deep
  };

  // seq: sample-major (B*T) x 2V with T >= 2.
  Out forward(const ag::NodePtr& seq, int batch, int t_len) const {
    if (t_len < 2) throw DataError("pose backbone needs at least 2 frames");
    if (seq->rows() != batch * t_len || seq->cols() != kCoordsPerFrame)
      throw ShapeError("pose backbone: bad input shape " + shape_str(seq->shape()));
    ag::NodePtr streams[2] = {seq, temporal_difference_node(seq, batch, t_len)};
    Out out;
    for (int s = 0; s < 2; ++s) {
      auto h = streams[s];
      for (const auto& conv : stream_[s]) h = ag::leaky_relu(conv(h, batch, t_len), 0.2);
      streams[s] = h;
      out.taps.push_back(h);
    }
    auto h = ag::concat_cols({streams[0], streams[1]});
    for (const auto& conv : fused_) {
      h = ag::leaky_relu(conv(h, batch, t_len), 0.2);
      out.taps.push_back(h);
    }
    out.features = fc_(nn::mean_pool_rows(h, batch, t_len));
    out.taps.push_back(out.features);
    return out;
  }

  int out_dim() const { return cfg_.out_dim; }

 private:
  PoseBackboneConfig cfg_;
  nn::Conv1d stream_[2][3];
  nn::Conv1d fused_[2];
  nn::Linear fc_;
};

// PatchGAN-style critic over short pose windows: a trimmed backbone feeds a
// small classifier, one independent realism score per window.
class LocalTemporalDiscriminator {
 public:
  explicit LocalTemporalDiscriminator(nn::Rng& rng, PoseBackboneConfig cfg = {})
      : backbone_(params_, "dl.backbone", rng, cfg),
        fc1_(params_, "dl.head.fc1", cfg.out_dim, 64, rng),
        fc2_(params_, "dl.head.fc2", 64, 1, rng) {}

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  // windows: (N*t) x 2V rows, N equal-length windows. Returns N x 1 in (0,1).
  ag::NodePtr scores(const ag::NodePtr& windows, int n_windows, int window_len) const {
    auto feat = backbone_.forward(windows, n_windows, window_len).features;
    return ag::sigmoid(fc2_(ag::leaky_relu(fc1_(feat), 0.2)));
  }

  ag::NodePtr scores(const WindowBatch& batch) const {
    std::vector<const SkeletonSequence*> ptrs;
    for (const auto& w : batch.windows) ptrs.push_back(&w);
    if (ptrs.empty()) throw ShapeError("local discriminator: empty window batch");
    return scores(ag::constant(sequence_batch_tensor(ptrs)), static_cast<int>(ptrs.size()),
                  batch.window_len);
  }

 private:
  nn::ParamSet params_;
  PoseBackbone backbone_;
  nn::Linear fc1_, fc2_;
};

enum class AttentionMode { kSoftmax, kPaperNegLog };

// Structured self-attention pooling over recurrent states O (T x k):
// r = W_s2 tanh(W_s1 O^T); softmax mode normalizes the weights, the
// paper-literal mode uses a_i = -log softmax(r)_i exactly as printed.
inline ag::NodePtr attention_pool(const ag::NodePtr& o, const ag::NodePtr& w_s1,
                                  const ag::NodePtr& w_s2,
                                  AttentionMode mode = AttentionMode::kSoftmax) {
  auto r = ag::matmul(w_s2, ag::tanh_(ag::matmul(w_s1, ag::transpose(o))));  // 1 x T
  auto p = nn::softmax_row(r);
  auto a = mode == AttentionMode::kSoftmax ? p : ag::neg(ag::log_(ag::clamp(p, 1e-30, 1.0)));
  return ag::matmul(a, o);  // 1 x k
}

struct GlobalDiscriminatorConfig {
  int music_feature_dim = 256;  // per-piece encoder output
  int rnn_hidden = 128;         // k = 256 concatenated
  int rnn_layers = 2;
  int attention_dim = 40;       // l
  PoseBackboneConfig pose;
  AttentionMode attention_mode = AttentionMode::kSoftmax;

  int k() const { return 2 * rnn_hidden; }

  void validate() const {
    if (pose.out_dim != k())
      throw ConfigError("global discriminator: pose feature width (" +
                        std::to_string(pose.out_dim) + ") must equal the music feature width (" +
                        std::to_string(k()) + ") for channel fusion");
  }
};

// Judges whether a pose sequence matches its music. The music path mirrors
// the generator's encoder (weights independent), pooled with self-attention
// into F_M; the pose path produces F_P; a small classifier scores the fused
// features.
class GlobalContentDiscriminator {
 public:
  explicit GlobalContentDiscriminator(nn::Rng& rng, GlobalDiscriminatorConfig cfg = {})
      : cfg_(cfg),
        music_enc_(params_, "dg.music.enc", cfg.music_feature_dim, rng),
        music_gru_(params_, "dg.music.gru", cfg.music_feature_dim, cfg.rnn_hidden,
                   cfg.rnn_layers, rng),
        pose_(params_, "dg.pose", rng, cfg.pose) {
    cfg_.validate();
    w_s1_ = params_.add("dg.attn.w_s1", nn::glorot_uniform(cfg.k(), cfg.attention_dim,
                                                           {cfg.attention_dim, cfg.k()}, rng));
    w_s2_ = params_.add("dg.attn.w_s2",
                        nn::glorot_uniform(cfg.attention_dim, 1, {1, cfg.attention_dim}, rng));
    fuse_conv_ = nn::Conv1d(params_, "dg.fuse.conv",
                            {.c_in = cfg.k(), .c_out = 128, .k = 2, .stride = 1, .pad = 0}, rng);
    fc_ = nn::Linear(params_, "dg.fuse.fc", 128, 1, rng);
  }

  const GlobalDiscriminatorConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  struct Out {
    ag::NodePtr score;   // B x 1, strictly inside (0,1)
    ag::NodePtr logit;   // B x 1 pre-sigmoid
    ag::NodePtr f_music; // B x k
    ag::NodePtr f_pose;  // B x out_dim
    std::vector<ag::NodePtr> taps;
  };

  // Attention-pooled music feature for a batch: pieces (B*T) x 1600.
  ag::NodePtr music_feature(const ag::NodePtr& pieces, int batch, int t_len) const {
    auto feats = music_enc_(pieces);
    auto o = music_gru_.run(nn::to_time_major(feats, batch, t_len), t_len, batch);
    std::vector<ag::NodePtr> pooled;
    for (int b = 0; b < batch; ++b) {
      auto o_clip = nn::clip_rows_time_major(o, b, batch, t_len);  // T x k
      pooled.push_back(attention_pool(o_clip, w_s1_, w_s2_, cfg_.attention_mode));
    }
    return ag::concat_rows(pooled);
  }

  Out forward(const ag::NodePtr& seq, const ag::NodePtr& pieces, int batch, int t_len) const {
    if (seq->rows() != batch * t_len || pieces->rows() != batch * t_len)
      throw ShapeError("global discriminator: sequence and music must share T");
    Out out;
    out.f_music = music_feature(pieces, batch, t_len);
    auto pose = pose_.forward(seq, batch, t_len);
    out.f_pose = pose.features;
    out.taps = pose.taps;
    out.taps.push_back(out.f_music);
    // fuse [F_M; F_P] as a length-2 sequence of k channels
    auto stacked = ag::concat_rows({out.f_music, out.f_pose});  // 2B x k
    std::vector<int> interleave;
    for (int b = 0; b < batch; ++b) {
      interleave.push_back(b);
      interleave.push_back(batch + b);
    }
    auto fused_in = ag::gather_rows(stacked, interleave);           // (B*2) x k
    auto fused = ag::leaky_relu(fuse_conv_(fused_in, batch, 2), 0.2);  // (B*1) x 128
    out.taps.push_back(fused);
    out.logit = fc_(fused);
    out.taps.push_back(out.logit);
    out.score = ag::sigmoid(out.logit);
    return out;
  }

  Out forward(const SkeletonSequence& seq, const MusicPieceBatch& music) const {
    if (seq.frames() != music.pieces)
      throw ShapeError("global discriminator: sequence frames != music pieces");
    return forward(ag::constant(sequence_tensor(seq)), ag::constant(pieces_tensor(music)), 1,
                   seq.frames());
  }

 private:
  GlobalDiscriminatorConfig cfg_;
  nn::ParamSet params_;
  AudioPieceEncoder music_enc_;
  nn::BiGru music_gru_;
  ag::NodePtr w_s1_, w_s2_;
  PoseBackbone pose_;
  nn::Conv1d fuse_conv_;
  nn::Linear fc_;
};

}  // namespace choreo
