#pragma once

#include <array>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "choreo/nn.hpp"
#include "choreo/seq_tensor.hpp"

namespace choreo {

// COCO-18 spatial-temporal graph with spatial-configuration partitioning:
// per receptive vertex i, neighbor j lands in the root, centripetal or
// centrifugal subset depending on its hop distance to the neck relative
// to i's. The partition matrices carry column-normalized edge weights.
class SkeletonGraph {
 public:
  static constexpr int kPartitions = 3;
  static constexpr int kCenter = 1;  // neck

  SkeletonGraph() : adjacency_({kJoints, kJoints}) {
    for (auto [a, b] : coco_bones()) {
      adjacency_.at(a, b) = 1.0;
      adjacency_.at(b, a) = 1.0;
    }
    auto dist = hop_distances();
    // column-normalized adjacency with self loops
    Tensor norm({kJoints, kJoints});
    for (int i = 0; i < kJoints; ++i)
      for (int j = 0; j < kJoints; ++j)
        norm.at(i, j) = adjacency_.at(i, j) + (i == j ? 1.0 : 0.0);
    for (int j = 0; j < kJoints; ++j) {
      double deg = 0;
      for (int i = 0; i < kJoints; ++i) deg += norm.at(i, j);
      for (int i = 0; i < kJoints; ++i) norm.at(i, j) /= deg;
    }
    for (auto& p : partitions_) p = Tensor({kJoints, kJoints});
    for (int i = 0; i < kJoints; ++i)
      for (int j = 0; j < kJoints; ++j) {
        if (norm.at(i, j) == 0.0) continue;
        int p = dist[j] == dist[i] ? 0 : (dist[j] < dist[i] ? 1 : 2);
        partitions_[static_cast<size_t>(p)].at(i, j) = norm.at(i, j);
      }
  }

  const Tensor& adjacency() const { return adjacency_; }
  const Tensor& partition(int p) const { return partitions_[static_cast<size_t>(p)]; }

  std::array<int, kJoints> hop_distances() const {
    std::array<int, kJoints> dist;
    dist.fill(-1);
    std::queue<int> q;
    dist[kCenter] = 0;
    q.push(kCenter);
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v = 0; v < kJoints; ++v)
        if (adjacency_.at(u, v) > 0 && dist[static_cast<size_t>(v)] < 0) {
          dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
          q.push(v);
        }
    }
    for (int d : dist)
      if (d < 0) throw ConfigError("skeleton graph is not connected");
    return dist;
  }

 private:
  Tensor adjacency_;
  std::array<Tensor, kPartitions> partitions_;
};

// Convolution along the time axis of data laid out as (B*T*V) x C rows,
// applied per joint.
class TemporalConv {
 public:
  TemporalConv() = default;
  TemporalConv(nn::ParamSet& ps, const std::string& name, int c_in, int c_out, int kernel,
               int stride, nn::Rng& rng)
      : c_in_(c_in), c_out_(c_out), kernel_(kernel), stride_(stride), pad_(kernel / 2) {
    w_ = ps.add(name + ".w", nn::glorot_uniform(c_in * kernel, c_out, {c_in * kernel, c_out}, rng));
    b_ = ps.add(name + ".b", Tensor::zeros({1, c_out}));
  }

  int out_frames(int t_in) const { return (t_in + 2 * pad_ - kernel_) / stride_ + 1; }

  ag::NodePtr operator()(const ag::NodePtr& x, int batch, int t_in) const {
    if (x->rows() != batch * t_in * kJoints || x->cols() != c_in_)
      throw ShapeError("temporal conv: bad input shape " + shape_str(x->shape()));
    int t_out = out_frames(t_in);
    auto map = build_map(batch, t_in, t_out);
    auto cols = ag::gather_map(x, map, {batch * t_out * kJoints, c_in_ * kernel_});
    return ag::add_rowvec(ag::matmul(cols, w_), b_);
  }

 private:
  ag::IndexMap build_map(int batch, int t_in, int t_out) const {
    {
      std::lock_guard<std::mutex> lock(cache_->mutex);
      if (cache_->map && cache_->key == std::pair<int, int>{batch, t_in}) return cache_->map;
    }
    auto map = std::make_shared<std::vector<int64_t>>();
    map->reserve(static_cast<size_t>(batch) * t_out * kJoints * c_in_ * kernel_);
    for (int b = 0; b < batch; ++b)
      for (int to = 0; to < t_out; ++to)
        for (int v = 0; v < kJoints; ++v)
          for (int c = 0; c < c_in_; ++c)
            for (int k = 0; k < kernel_; ++k) {
              int ti = to * stride_ - pad_ + k;
              map->push_back(ti < 0 || ti >= t_in
                                 ? -1
                                 : ((static_cast<int64_t>(b) * t_in + ti) * kJoints + v) * c_in_ + c);
            }
    std::lock_guard<std::mutex> lock(cache_->mutex);
    cache_->key = {batch, t_in};
    cache_->map = map;
    return map;
  }

  struct MapCache {
    std::mutex mutex;
    std::pair<int, int> key{-1, -1};
    ag::IndexMap map;
  };

  int c_in_ = 0, c_out_ = 0, kernel_ = 9, stride_ = 1, pad_ = 4;
  ag::NodePtr w_, b_;
  std::shared_ptr<MapCache> cache_ = std::make_shared<MapCache>();
};

struct StGcnConfig {
  int in_channels = 2;
  std::vector<int> channels{64, 64, 64, 128, 128, 128, 256, 256, 256};
  std::vector<int> strides{1, 1, 1, 2, 1, 1, 2, 1, 1};
  int temporal_kernel = 9;

  int tap_count() const { return static_cast<int>(channels.size()); }
};

// The pretrained graph-convolutional pose network used by the perceptual
// loss: 9 blocks of spatial graph convolution followed by temporal
// convolution, with residual connections. Each block is a tap point.
class StGcn {
 public:
  explicit StGcn(nn::Rng& rng, StGcnConfig cfg = {}) : cfg_(std::move(cfg)) {
    if (cfg_.channels.size() != cfg_.strides.size())
      throw ConfigError("stgcn: channels and strides must align");
    int c_prev = cfg_.in_channels;
    for (size_t i = 0; i < cfg_.channels.size(); ++i) {
      Block blk;
      int c_out = cfg_.channels[i];
      std::string base = "phi.block" + std::to_string(i + 1);
      for (int p = 0; p < SkeletonGraph::kPartitions; ++p)
        blk.spatial_w.push_back(params_.add(
            base + ".spatial.w" + std::to_string(p),
            nn::glorot_uniform(c_prev, c_out, {c_prev, c_out}, rng)));
      blk.spatial_b = params_.add(base + ".spatial.b", Tensor::zeros({1, c_out}));
      blk.temporal =
          TemporalConv(params_, base + ".temporal", c_out, c_out, cfg_.temporal_kernel,
                       cfg_.strides[i], rng);
      if (c_prev != c_out || cfg_.strides[i] != 1)
        blk.residual = TemporalConv(params_, base + ".residual", c_prev, c_out, 1,
                                    cfg_.strides[i], rng);
      blk.stride = cfg_.strides[i];
      blk.c_in = c_prev;
      blk.c_out = c_out;
      blocks_.push_back(std::move(blk));
      c_prev = c_out;
    }
  }

  const StGcnConfig& config() const { return cfg_; }
  const SkeletonGraph& graph() const { return graph_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  void freeze() const { params_.set_requires_grad(false); }
  void unfreeze() const { params_.set_requires_grad(true); }

  std::vector<std::string> tap_names() const {
    std::vector<std::string> names;
    for (int i = 1; i <= cfg_.tap_count(); ++i) names.push_back("block" + std::to_string(i));
    return names;
  }

  struct Activations {
    std::vector<ag::NodePtr> taps;  // one per block, (B*T_l*V) x C_l
    std::vector<int> frames;        // T_l per tap
  };

  // x: (B*T*V) x in_channels, sample-major frames.
  Activations forward(const ag::NodePtr& x, int batch, int t_in) const {
    Activations acts;
    ag::NodePtr h = x;
    int t_cur = t_in;
    for (const auto& blk : blocks_) {
      ag::NodePtr s = nullptr;
      for (int p = 0; p < SkeletonGraph::kPartitions; ++p) {
        auto mixed = ag::frame_graph_mix(h, graph_.partition(p), batch * t_cur, kJoints);
        auto term = ag::matmul(mixed, blk.spatial_w[static_cast<size_t>(p)]);
        s = s ? ag::add(s, term) : term;
      }
      s = ag::relu(ag::add_rowvec(s, blk.spatial_b));
      auto y = blk.temporal(s, batch, t_cur);
      int t_next = blk.temporal.out_frames(t_cur);
      ag::NodePtr res = blk.residual ? (*blk.residual)(h, batch, t_cur) : h;
      h = ag::relu(ag::add(y, res));
      t_cur = t_next;
      acts.taps.push_back(h);
      acts.frames.push_back(t_cur);
    }
    return acts;
  }

  // Global mean pooling of the last tap: B x C_last.
  ag::NodePtr pooled(const Activations& acts, int batch) const {
    const auto& last = acts.taps.back();
    int rows_per = acts.frames.back() * kJoints;
    return nn::mean_pool_rows(last, batch, rows_per);
  }

  int feature_dim() const { return cfg_.channels.back(); }

 private:
  struct Block {
    std::vector<ag::NodePtr> spatial_w;
    ag::NodePtr spatial_b;
    TemporalConv temporal;
    std::optional<TemporalConv> residual;
    int stride = 1, c_in = 0, c_out = 0;
  };

  StGcnConfig cfg_;
  SkeletonGraph graph_;
  nn::ParamSet params_;
  std::vector<Block> blocks_;
};

// Reshape a (B*T) x 2V pose tensor into graph layout (B*T*V) x 2.
inline ag::NodePtr pose_to_graph_layout(const ag::NodePtr& seq) {
  if (seq->cols() != kCoordsPerFrame) throw ShapeError("pose tensor must have 2V columns");
  return ag::reshape(seq, {seq->rows() * kJoints, 2});
}

// Forward pass with frozen weights; gradients flow to the input only.
inline StGcn::Activations extract_activations(const StGcn& phi, const ag::NodePtr& seq,
                                              int batch, int frames) {
  if (seq->rows() != batch * frames) throw ShapeError("extract_activations: row count mismatch");
  if (frames < 1) throw DataError("extract_activations: empty sequence");
  phi.freeze();
  return phi.forward(pose_to_graph_layout(seq), batch, frames);
}

inline StGcn::Activations extract_activations(const StGcn& phi, const SkeletonSequence& seq) {
  return extract_activations(phi, ag::constant(sequence_tensor(seq)), 1, seq.frames());
}

// ---- pretraining harness ----

struct LabeledSequences {
  std::vector<SkeletonSequence> sequences;
  std::vector<int> labels;
};

struct PretrainLogEntry {
  int step;
  double loss;
  double train_accuracy;
};

struct PretrainResult {
  std::vector<PretrainLogEntry> log;
};

// Classification head used only during pretraining; the perceptual loss
// consumes the backbone alone.
class StGcnClassifier {
 public:
  StGcnClassifier(StGcn& backbone, int classes, nn::Rng& rng)
      : backbone_(backbone), classes_(classes),
        head_(head_params_, "phi_head.fc", backbone.feature_dim(), classes, rng) {}

  ag::NodePtr logits(const ag::NodePtr& seqs, int batch, int frames) const {
    auto acts = backbone_.forward(pose_to_graph_layout(seqs), batch, frames);
    return head_(backbone_.pooled(acts, batch));
  }

  int predict(const SkeletonSequence& seq) const {
    auto lg = logits(ag::constant(sequence_tensor(seq)), 1, seq.frames());
    int best = 0;
    for (int j = 1; j < classes_; ++j)
      if (lg->value[j] > lg->value[best]) best = j;
    return best;
  }

  double accuracy(const LabeledSequences& data) const {
    int hit = 0;
    for (size_t i = 0; i < data.sequences.size(); ++i)
      if (predict(data.sequences[i]) == data.labels[i]) ++hit;
    return data.sequences.empty() ? 0.0 : static_cast<double>(hit) / data.sequences.size();
  }

  nn::ParamSet& head_params() { return head_params_; }
  StGcn& backbone() { return backbone_; }

 private:
  StGcn& backbone_;
  int classes_;
  nn::ParamSet head_params_;
  nn::Linear head_;
};

// Cross-entropy pretraining on labeled motion data. The returned classifier
// wraps the (now trained) backbone; callers keep the backbone and drop the
// head for perceptual use.
inline PretrainResult pretrain_stgcn(StGcnClassifier& clf, const LabeledSequences& data,
                                     int classes, int steps, int batch_size, double lr,
                                     nn::Rng& rng) {
  if (classes < 2) throw DataError("pretrain: need at least 2 classes");
  if (data.sequences.empty() || data.sequences.size() != data.labels.size())
    throw DataError("pretrain: every sequence needs a label");
  {
    std::vector<bool> present(static_cast<size_t>(classes), false);
    for (int l : data.labels) {
      if (l < 0 || l >= classes) throw DataError("pretrain: label out of range");
      present[static_cast<size_t>(l)] = true;
    }
    int distinct = 0;
    for (bool p : present) distinct += p;
    if (distinct < 2) throw DataError("pretrain: degenerate dataset with a single class");
  }
  clf.backbone().unfreeze();
  nn::Adam opt_backbone(lr), opt_head(lr);
  PretrainResult result;
  std::uniform_int_distribution<size_t> pick(0, data.sequences.size() - 1);
  for (int step = 1; step <= steps; ++step) {
    std::vector<const SkeletonSequence*> seqs;
    std::vector<int> labels;
    for (int b = 0; b < batch_size; ++b) {
      size_t i = pick(rng);
      seqs.push_back(&data.sequences[i]);
      labels.push_back(data.labels[i]);
    }
    auto x = ag::constant(sequence_batch_tensor(seqs));
    auto lg = clf.logits(x, batch_size, seqs[0]->frames());
    auto loss = nn::cross_entropy(lg, labels);
    if (!loss->value.all_finite()) throw NumericError("pretrain: non-finite loss");
    auto grads = ag::backward(loss);
    opt_backbone.step(clf.backbone().params(), grads);
    opt_head.step(clf.head_params(), grads);
    if (step % 20 == 0 || step == steps) {
      int hit = 0;
      for (int b = 0; b < batch_size; ++b) {
        int best = 0;
        for (int j = 1; j < lg->cols(); ++j)
          if (lg->value.at(b, j) > lg->value.at(b, best)) best = j;
        hit += best == labels[static_cast<size_t>(b)];
      }
      result.log.push_back({step, loss->value.item(), static_cast<double>(hit) / batch_size});
    }
  }
  return result;
}

}  // namespace choreo
