#pragma once

#include <string>
#include <vector>

#include "choreo/nn.hpp"
#include "choreo/seq_tensor.hpp"

namespace choreo {

struct GeneratorConfig {
  int audio_feature_dim = 256;  // must be divisible by 8 (conv widths double from dim/8)
  int rnn_hidden = 128;         // per direction; concatenated state k = 2 * rnn_hidden
  int rnn_layers = 2;
  std::vector<int> mlp_hidden_dims{256, 128};
  int output_dim = kCoordsPerFrame;

  int k() const { return 2 * rnn_hidden; }

  void validate() const {
    if (audio_feature_dim < 8 || audio_feature_dim % 8 != 0)
      throw ConfigError("audio_feature_dim must be a positive multiple of 8");
    if (rnn_hidden < 1 || rnn_layers < 1) throw ConfigError("invalid recurrent dimensions");
    if (output_dim < 1) throw ConfigError("invalid output dimension");
  }
};

// Per-piece 1-D convolutional encoder: four strided blocks (kernel 15,
// stride 4, widths doubling from dim/8) collapse 1600 samples to one feature
// vector. Strictly per piece; no cross-piece mixing happens here.
class AudioPieceEncoder {
 public:
  AudioPieceEncoder() = default;
  AudioPieceEncoder(nn::ParamSet& ps, const std::string& name, int feature_dim, nn::Rng& rng) {
    int widths[4] = {feature_dim / 8, feature_dim / 4, feature_dim / 2, feature_dim};
    int c_prev = 1;
    for (int i = 0; i < 4; ++i) {
      convs_[i] = nn::Conv1d(ps, name + ".conv" + std::to_string(i + 1),
                             {.c_in = c_prev, .c_out = widths[i], .k = 15, .stride = 4, .pad = 0},
                             rng);
      c_prev = widths[i];
    }
  }

  // pieces: (N) x 1600 rows, one piece per row. Returns N x feature_dim.
  ag::NodePtr operator()(const ag::NodePtr& pieces) const {
    if (pieces->cols() != kPieceSamples)
      throw ShapeError("piece encoder expects rows of " + std::to_string(kPieceSamples) +
                       " samples, got " + shape_str(pieces->shape()));
    int n = pieces->rows();
    auto h = ag::reshape(pieces, {n * kPieceSamples, 1});
    int l = kPieceSamples;
    for (const auto& conv : convs_) {
      h = ag::leaky_relu(conv(h, n, l), 0.2);
      l = conv.geom().out_len(l);
    }
    return nn::mean_pool_rows(h, n, l);
  }

 private:
  nn::Conv1d convs_[4];
};

// Music-to-pose generator: per-piece audio encoder, bidirectional recurrent
// encoder over the piece sequence, and a per-step perceptron decoder with a
// bounded output stage.
class Generator {
 public:
  explicit Generator(nn::Rng& rng, GeneratorConfig cfg = {}) : cfg_(cfg) {
    cfg_.validate();
    encoder_ = AudioPieceEncoder(params_, "g.enc", cfg_.audio_feature_dim, rng);
    gru_ = nn::BiGru(params_, "g.gru", cfg_.audio_feature_dim, cfg_.rnn_hidden, cfg_.rnn_layers,
                     rng);
    int d_prev = cfg_.k();
    for (size_t i = 0; i < cfg_.mlp_hidden_dims.size(); ++i) {
      mlp_.emplace_back(params_, "g.mlp.fc" + std::to_string(i + 1), d_prev,
                        cfg_.mlp_hidden_dims[i], rng);
      d_prev = cfg_.mlp_hidden_dims[i];
    }
    mlp_.emplace_back(params_, "g.mlp.out", d_prev, cfg_.output_dim, rng);
  }

  const GeneratorConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  // Per-piece features without recurrent mixing (the encode stage alone).
  ag::NodePtr encode_pieces(const ag::NodePtr& pieces) const { return encoder_(pieces); }

  // Recurrent hidden states O: time-major (T*B) x k.
  ag::NodePtr hidden_states(const ag::NodePtr& pieces, int batch, int t_steps) const {
    if (pieces->rows() != batch * t_steps)
      throw ShapeError("generator: pieces row count does not match batch * T");
    auto feats = encoder_(pieces);                         // (B*T) x d, sample-major
    auto tm = nn::to_time_major(feats, batch, t_steps);    // (T*B) x d
    return gru_.run(tm, t_steps, batch);                   // (T*B) x k
  }

  // pieces: (B*T) x 1600 sample-major. Returns (B*T) x 2V in [-1, 1].
  ag::NodePtr forward(const ag::NodePtr& pieces, int batch, int t_steps) const {
    auto h = hidden_states(pieces, batch, t_steps);
    for (size_t i = 0; i + 1 < mlp_.size(); ++i) h = ag::leaky_relu(mlp_[i](h), 0.2);
    auto out = ag::tanh_(mlp_.back()(h));
    return nn::to_sample_major(out, batch, t_steps);
  }

  SkeletonSequence generate(const MusicPieceBatch& music) const {
    auto out = forward(ag::constant(pieces_tensor(music)), 1, music.pieces);
    return sequence_from_tensor(out->value);
  }

 private:
  GeneratorConfig cfg_;
  nn::ParamSet params_;
  AudioPieceEncoder encoder_;
  nn::BiGru gru_;
  std::vector<nn::Linear> mlp_;
};

}  // namespace choreo
