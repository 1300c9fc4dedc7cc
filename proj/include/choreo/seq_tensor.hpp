#pragma once

#include <vector>

#include "choreo/audio.hpp"
#include "choreo/graph.hpp"
#include "choreo/skeleton.hpp"

// Bridges between domain types and graph tensors. Sequences batch as
// sample-major rows: clip b occupies rows [b*T, (b+1)*T).
namespace choreo {

inline Tensor sequence_tensor(const SkeletonSequence& seq) {
  Tensor t({seq.frames(), kCoordsPerFrame});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = seq.raw()[static_cast<size_t>(i)];
  return t;
}

inline Tensor sequence_batch_tensor(const std::vector<const SkeletonSequence*>& seqs) {
  int t_len = seqs.at(0)->frames();
  Tensor t({static_cast<int>(seqs.size()) * t_len, kCoordsPerFrame});
  int64_t off = 0;
  for (const auto* s : seqs) {
    if (s->frames() != t_len) throw ShapeError("sequence batch must share frame count");
    for (float v : s->raw()) t[off++] = v;
  }
  return t;
}

inline SkeletonSequence sequence_from_tensor(const Tensor& t, double fps = kFps) {
  if (t.rank() != 2 || t.cols() != kCoordsPerFrame)
    throw ShapeError("sequence tensor must be T x " + std::to_string(kCoordsPerFrame));
  SkeletonSequence seq(t.rows(), fps);
  for (int64_t i = 0; i < t.numel(); ++i) seq.raw()[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  return seq;
}

// Clip b of a sample-major batch tensor (B*T) x 2V.
inline SkeletonSequence sequence_from_batch(const Tensor& t, int clip, int t_len,
                                            double fps = kFps) {
  SkeletonSequence seq(t_len, fps);
  for (int i = 0; i < t_len; ++i)
    for (int c = 0; c < kCoordsPerFrame; ++c)
      seq.at(i, c) = static_cast<float>(t.at(clip * t_len + i, c));
  return seq;
}

inline Tensor pieces_tensor(const MusicPieceBatch& batch) {
  Tensor t({batch.pieces, kPieceSamples});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = batch.samples[static_cast<size_t>(i)];
  return t;
}

inline Tensor pieces_batch_tensor(const std::vector<const MusicPieceBatch*>& batches) {
  int t_len = batches.at(0)->pieces;
  Tensor t({static_cast<int>(batches.size()) * t_len, kPieceSamples});
  int64_t off = 0;
  for (const auto* b : batches) {
    if (b->pieces != t_len) throw ShapeError("piece batch must share piece count");
    for (double v : b->samples) t[off++] = v;
  }
  return t;
}

}  // namespace choreo
