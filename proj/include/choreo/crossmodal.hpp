#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "choreo/checkpoint.hpp"
#include "choreo/discriminator.hpp"
#include "choreo/generator.hpp"
#include "choreo/seq_tensor.hpp"

namespace choreo {

// ---- k-means ----

struct KMeansResult {
  std::vector<int> labels;
  std::vector<std::vector<double>> centers;
  double inertia = 0;
};

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Lloyd iterations from explicit initial centers; deterministic, ties break
// toward the lowest cluster index.
inline KMeansResult kmeans_lloyd(const std::vector<std::vector<double>>& points,
                                 std::vector<std::vector<double>> centers,
                                 int max_iters = 100) {
  size_t n = points.size(), k = centers.size();
  KMeansResult res;
  res.labels.assign(n, 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(points[i], centers[0]);
      for (size_t c = 1; c < k; ++c) {
        double d = sq_dist(points[i], centers[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (res.labels[i] != best) {
        res.labels[i] = best;
        changed = true;
      }
    }
    std::vector<std::vector<double>> sums(k, std::vector<double>(points[0].size(), 0.0));
    std::vector<int> counts(k, 0);
    for (size_t i = 0; i < n; ++i) {
      ++counts[static_cast<size_t>(res.labels[i])];
      for (size_t d = 0; d < points[i].size(); ++d)
        sums[static_cast<size_t>(res.labels[i])][d] += points[i][d];
    }
    for (size_t c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (auto& v : sums[c]) v /= counts[c];
      else
        sums[c] = centers[c];  // empty cluster keeps its center
    centers = std::move(sums);
    if (!changed && iter > 0) break;
  }
  res.centers = std::move(centers);
  res.inertia = 0;
  for (size_t i = 0; i < n; ++i)
    res.inertia += sq_dist(points[i], res.centers[static_cast<size_t>(res.labels[i])]);
  return res;
}

// k-means++ seeding: first center uniform, then proportional to squared
// distance from the nearest chosen center.
inline std::vector<std::vector<double>> kmeans_pp_centers(
    const std::vector<std::vector<double>>& points, int k, nn::Rng& rng) {
  std::vector<std::vector<double>> centers;
  std::uniform_int_distribution<size_t> uni(0, points.size() - 1);
  centers.push_back(points[uni(rng)]);
  std::vector<double> d2(points.size());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0;
    for (size_t i = 0; i < points.size(); ++i) {
      double best = sq_dist(points[i], centers[0]);
      for (size_t c = 1; c < centers.size(); ++c)
        best = std::min(best, sq_dist(points[i], centers[c]));
      d2[i] = best;
      total += best;
    }
    if (total <= 0) {
      centers.push_back(points[uni(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> pick(0.0, total);
    double r = pick(rng);
    size_t chosen = points.size() - 1;
    double acc = 0;
    for (size_t i = 0; i < points.size(); ++i) {
      acc += d2[i];
      if (acc >= r) {
        chosen = i;
        break;
      }
    }
    centers.push_back(points[chosen]);
  }
  return centers;
}

// Best-of-restarts Lloyd's algorithm with k-means++ seeding.
inline KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k,
                           int restarts, nn::Rng& rng) {
  if (k < 1) throw ConfigError("kmeans: k must be positive");
  if (points.size() < static_cast<size_t>(k))
    throw ConfigError("kmeans: fewer points than clusters");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    auto res = kmeans_lloyd(points, kmeans_pp_centers(points, k, rng));
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

// ---- music embedder (convolutional-recurrent genre model) ----

struct MusicEmbedderConfig {
  int conv_dim = 64;       // final conv width; blocks are dim/4, dim/2, dim
  int rnn_hidden = 64;
  int embedding_dim = 32;  // d_m
};

// Genre-style embedder: per-piece convolutions, a recurrent pass over the
// piece sequence, mean pooling and a projection. Pretrained with a
// classification head that is dropped afterwards.
class MusicEmbedder {
 public:
  explicit MusicEmbedder(nn::Rng& rng, MusicEmbedderConfig cfg = {}) : cfg_(cfg) {
    int w0 = cfg.conv_dim / 4, w1 = cfg.conv_dim / 2, w2 = cfg.conv_dim;
    conv_[0] = nn::Conv1d(params_, "em.conv1",
                          {.c_in = 1, .c_out = w0, .k = 15, .stride = 4, .pad = 0}, rng);
    conv_[1] = nn::Conv1d(params_, "em.conv2",
                          {.c_in = w0, .c_out = w1, .k = 15, .stride = 4, .pad = 0}, rng);
    conv_[2] = nn::Conv1d(params_, "em.conv3",
                          {.c_in = w1, .c_out = w2, .k = 15, .stride = 4, .pad = 0}, rng);
    gru_ = nn::GruCell(params_, "em.gru", w2, cfg.rnn_hidden, rng);
    proj_ = nn::Linear(params_, "em.proj", cfg.rnn_hidden, cfg.embedding_dim, rng);
  }

  const MusicEmbedderConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  int dim() const { return cfg_.embedding_dim; }

  // pieces: (B*T) x 1600 sample-major. Returns B x d_m.
  ag::NodePtr forward(const ag::NodePtr& pieces, int batch, int t_len) const {
    int n = batch * t_len;
    auto h = ag::reshape(pieces, {n * kPieceSamples, 1});
    int l = kPieceSamples;
    for (const auto& conv : conv_) {
      h = ag::leaky_relu(conv(h, n, l), 0.2);
      l = conv.geom().out_len(l);
    }
    auto feats = nn::mean_pool_rows(h, n, l);                    // (B*T) x w2
    auto tm = nn::to_time_major(feats, batch, t_len);
    auto o = gru_.run(tm, t_len, batch, false);                  // (T*B) x hidden
    auto pooled = nn::mean_pool_rows(nn::to_sample_major(o, batch, t_len), batch, t_len);
    return proj_(pooled);
  }

  std::vector<double> embed(const MusicPieceBatch& music) const {
    auto e = forward(ag::constant(pieces_tensor(music)), 1, music.pieces);
    return e->value.vec();
  }

 private:
  MusicEmbedderConfig cfg_;
  nn::ParamSet params_;
  nn::Conv1d conv_[3];
  nn::GruCell gru_;
  nn::Linear proj_;
};

struct GenreExample {
  MusicPieceBatch music;
  int label = 0;
};

// Cross-entropy genre pretraining; returns logged training accuracy.
inline std::vector<double> pretrain_music_embedder(MusicEmbedder& em,
                                                   const std::vector<GenreExample>& data,
                                                   int classes, int steps, int batch_size,
                                                   double lr, nn::Rng& rng) {
  if (classes < 2) throw DataError("embedder pretraining needs at least 2 classes");
  if (data.empty()) throw DataError("embedder pretraining: empty dataset");
  nn::ParamSet head_ps;
  nn::Linear head(head_ps, "em.head", em.dim(), classes, rng);
  nn::Adam opt(lr), opt_head(lr);
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  std::vector<double> acc_log;
  for (int step = 1; step <= steps; ++step) {
    std::vector<const MusicPieceBatch*> musics;
    std::vector<int> labels;
    for (int b = 0; b < batch_size; ++b) {
      size_t i = pick(rng);
      musics.push_back(&data[i].music);
      labels.push_back(data[i].label);
    }
    auto x = ag::constant(pieces_batch_tensor(musics));
    auto logits = head(em.forward(x, batch_size, musics[0]->pieces));
    auto loss = nn::cross_entropy(logits, labels);
    if (!loss->value.all_finite()) throw NumericError("embedder pretraining diverged");
    auto grads = ag::backward(loss);
    opt.step(em.params(), grads);
    opt_head.step(head_ps, grads);
    if (step % 20 == 0 || step == steps) {
      int hit = 0;
      for (int b2 = 0; b2 < batch_size; ++b2) {
        int bestj = 0;
        for (int j = 1; j < classes; ++j)
          if (logits->value.at(b2, j) > logits->value.at(b2, bestj)) bestj = j;
        hit += bestj == labels[static_cast<size_t>(b2)];
      }
      acc_log.push_back(static_cast<double>(hit) / batch_size);
    }
  }
  return acc_log;
}

// ---- embedding dictionary ----

struct DictionaryEntry {
  std::vector<double> embedding;
  int cluster = 0;
  std::string skeleton_path;  // persisted location; may be empty in memory
  SkeletonSequence skeleton;
};

struct EmbeddingDictionary {
  int embedding_dim = 0;
  int clusters = 0;
  std::vector<DictionaryEntry> entries;

  // Exact nearest neighbor by Euclidean distance (brute-force scan).
  int nearest(const std::vector<double>& query) const {
    if (entries.empty()) throw StateError("embedding dictionary is empty");
    int best = 0;
    double best_d = sq_dist(query, entries[0].embedding);
    for (size_t i = 1; i < entries.size(); ++i) {
      double d = sq_dist(query, entries[i].embedding);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json doc;
    doc["entry_count"] = entries.size();
    doc["embedding_dim"] = embedding_dim;
    doc["clusters"] = clusters;
    auto arr = nlohmann::json::array();
    for (size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      std::string rel = "entry_" + std::to_string(i) + ".sksq";
      save_sequence(e.skeleton, dir / rel);
      arr.push_back({{"embedding", e.embedding}, {"cluster", e.cluster}, {"skeleton", rel}});
    }
    doc["entries"] = std::move(arr);
    std::ofstream os(dir / "dictionary.json");
    if (!os) throw DataError("cannot write dictionary manifest");
    os << doc.dump(2) << "\n";
  }

  static EmbeddingDictionary load(const std::filesystem::path& dir) {
    std::ifstream is(dir / "dictionary.json");
    if (!is) throw StateError("cannot open dictionary manifest in " + dir.string());
    nlohmann::json doc;
    is >> doc;
    EmbeddingDictionary dict;
    dict.embedding_dim = doc.at("embedding_dim").get<int>();
    dict.clusters = doc.at("clusters").get<int>();
    for (const auto& j : doc.at("entries")) {
      DictionaryEntry e;
      e.embedding = j.at("embedding").get<std::vector<double>>();
      e.cluster = j.at("cluster").get<int>();
      e.skeleton_path = (dir / j.at("skeleton").get<std::string>()).string();
      e.skeleton = load_sequence(e.skeleton_path);
      dict.entries.push_back(std::move(e));
    }
    if (dict.entries.size() != doc.at("entry_count").get<size_t>())
      throw DataError("dictionary manifest entry count mismatch");
    return dict;
  }
};

struct CrossModalPair {
  MusicPieceBatch music;
  SkeletonSequence dance;
};

// Embeds all training music and attaches K-means cluster labels
// (k-means++ seeding, best of `restarts` by inertia).
inline EmbeddingDictionary build_dictionary(const std::vector<CrossModalPair>& pairs,
                                            const MusicEmbedder& embedder, int k,
                                            nn::Rng& rng, int restarts = 10) {
  if (static_cast<int>(pairs.size()) < k)
    throw ConfigError("build_dictionary: fewer pairs (" + std::to_string(pairs.size()) +
                      ") than clusters (" + std::to_string(k) + ")");
  EmbeddingDictionary dict;
  dict.embedding_dim = embedder.dim();
  dict.clusters = k;
  std::vector<std::vector<double>> points;
  for (const auto& p : pairs) {
    DictionaryEntry e;
    e.embedding = embedder.embed(p.music);
    e.skeleton = p.dance;
    points.push_back(e.embedding);
    dict.entries.push_back(std::move(e));
  }
  auto km = kmeans(points, k, restarts, rng);
  for (size_t i = 0; i < dict.entries.size(); ++i) dict.entries[i].cluster = km.labels[i];
  return dict;
}

// ---- pose metric network (triplet + MMD) ----

struct PoseMetricConfig {
  PoseBackboneConfig backbone{.base_width = 32, .out_dim = 128};
  double margin = 0.2;
  double mmd_weight = 1.0;
  int steps = 300;
  int triplets_per_step = 8;
  double lr = 0.002;
};

class PoseMetricNet {
 public:
  explicit PoseMetricNet(nn::Rng& rng, PoseMetricConfig cfg = {})
      : cfg_(cfg), backbone_(params_, "metric", rng, cfg.backbone) {}

  const PoseMetricConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  ag::NodePtr forward(const ag::NodePtr& seqs, int batch, int t_len) const {
    return backbone_.forward(seqs, batch, t_len).features;
  }

  std::vector<double> embed(const SkeletonSequence& seq) const {
    auto e = forward(ag::constant(sequence_tensor(seq)), 1, seq.frames());
    return e->value.vec();
  }

  // Similarity of two skeleton sequences: ||S - S'||^2.
  double distance(const SkeletonSequence& a, const SkeletonSequence& b) const {
    return sq_dist(embed(a), embed(b));
  }

 private:
  PoseMetricConfig cfg_;
  nn::ParamSet params_;
  PoseBackbone backbone_;
};

// Gaussian-kernel MMD^2 between two embedding batches (biased estimator);
// the bandwidth is the median pairwise distance, held constant.
inline ag::NodePtr mmd_sq(const ag::NodePtr& a, const ag::NodePtr& b) {
  int na = a->rows(), nb = b->rows();
  std::vector<double> dists;
  auto gather_dists = [&](const Tensor& x, const Tensor& y) {
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < y.rows(); ++j) {
        double s = 0;
        for (int d = 0; d < x.cols(); ++d) {
          double diff = x.at(i, d) - y.at(j, d);
          s += diff * diff;
        }
        dists.push_back(std::sqrt(s));
      }
  };
  gather_dists(a->value, b->value);
  std::sort(dists.begin(), dists.end());
  double median = dists.empty() ? 1.0 : dists[dists.size() / 2];
  double bw = std::max(median, 1e-3);
  double gamma = 1.0 / (2.0 * bw * bw);

  auto kernel_mean = [&](const ag::NodePtr& x, const ag::NodePtr& y, int nx, int ny) {
    // mean_{ij} exp(-gamma ||x_i - y_j||^2) via row replication
    std::vector<int> rep_x, rep_y;
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) {
        rep_x.push_back(i);
        rep_y.push_back(j);
      }
    auto diff = ag::sub(ag::gather_rows(x, rep_x), ag::gather_rows(y, rep_y));
    auto d2 = ag::rowsum(ag::square(diff));
    return ag::mean_all(ag::exp_(ag::scale(d2, -gamma)));
  };
  auto kaa = kernel_mean(a, a, na, na);
  auto kbb = kernel_mean(b, b, nb, nb);
  auto kab = kernel_mean(a, b, na, nb);
  return ag::add(ag::add(kaa, kbb), ag::scale(kab, -2.0));
}

// Metric learning over the clustered dictionary: squared-distance triplet
// loss (anchor/positive same cluster, negative another cluster) plus an MMD
// term pulling two same-cluster sub-batches toward one distribution.
inline void train_pose_metric(PoseMetricNet& net, const EmbeddingDictionary& dict,
                              nn::Rng& rng) {
  const auto& cfg = net.config();
  std::vector<std::vector<size_t>> members(static_cast<size_t>(dict.clusters));
  for (size_t i = 0; i < dict.entries.size(); ++i)
    members[static_cast<size_t>(dict.entries[i].cluster)].push_back(i);
  std::vector<int> usable;
  for (int c = 0; c < dict.clusters; ++c)
    if (members[static_cast<size_t>(c)].size() >= 2) usable.push_back(c);
  if (usable.size() < 2)
    throw DataError("train_pose_metric: degenerate clustering (need >= 2 clusters with >= 2 members)");

  nn::Adam opt(cfg.lr);
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<const SkeletonSequence*> seqs;
    int n_trip = cfg.triplets_per_step;
    std::uniform_int_distribution<size_t> upick(0, usable.size() - 1);
    std::vector<std::array<int, 3>> idx(static_cast<size_t>(n_trip));
    for (int t = 0; t < n_trip; ++t) {
      int ca = usable[upick(rng)];
      int cn = ca;
      while (cn == ca) cn = usable[upick(rng)];
      const auto& ma = members[static_cast<size_t>(ca)];
      const auto& mn = members[static_cast<size_t>(cn)];
      std::uniform_int_distribution<size_t> pa(0, ma.size() - 1), pn(0, mn.size() - 1);
      size_t ia = ma[pa(rng)];
      size_t ip = ia;
      while (ip == ia) ip = ma[pa(rng)];
      size_t in = mn[pn(rng)];
      idx[static_cast<size_t>(t)] = {static_cast<int>(seqs.size()),
                                     static_cast<int>(seqs.size() + 1),
                                     static_cast<int>(seqs.size() + 2)};
      seqs.push_back(&dict.entries[ia].skeleton);
      seqs.push_back(&dict.entries[ip].skeleton);
      seqs.push_back(&dict.entries[in].skeleton);
    }
    int t_len = seqs[0]->frames();
    auto emb = net.forward(ag::constant(sequence_batch_tensor(seqs)),
                           static_cast<int>(seqs.size()), t_len);
    ag::NodePtr loss = nullptr;
    std::vector<int> anchors, positives;
    for (const auto& tri : idx) {
      auto ea = ag::gather_rows(emb, {tri[0]});
      auto ep = ag::gather_rows(emb, {tri[1]});
      auto en = ag::gather_rows(emb, {tri[2]});
      auto dp = ag::sum_all(ag::square(ag::sub(ea, ep)));
      auto dn = ag::sum_all(ag::square(ag::sub(ea, en)));
      auto term = ag::relu(ag::add_const(ag::sub(dp, dn), cfg.margin));
      loss = loss ? ag::add(loss, term) : term;
      anchors.push_back(tri[0]);
      positives.push_back(tri[1]);
    }
    loss = ag::scale(loss, 1.0 / n_trip);
    // MMD between the anchor half and the positive half (same clusters).
    auto mmd = mmd_sq(ag::gather_rows(emb, anchors), ag::gather_rows(emb, positives));
    loss = ag::add(loss, ag::scale(mmd, cfg.mmd_weight));
    if (!loss->value.all_finite()) throw NumericError("pose metric training diverged");
    opt.step(net.params(), ag::backward(loss));
  }
}

// ---- two-step cross-modal scoring ----

// Step 1: embed the query music and find its nearest dictionary neighbor,
// whose paired dance represents the music. Step 2: squared distance between
// the metric embeddings of the generated and representative dances.
inline double cross_modal_score(const MusicPieceBatch& music_u, const Generator& generator,
                                const EmbeddingDictionary& dict, const MusicEmbedder& embedder,
                                const PoseMetricNet& metric) {
  if (dict.entries.empty()) throw StateError("cross_modal_score: empty dictionary");
  auto f_u = embedder.embed(music_u);
  const auto& p_v = dict.entries[static_cast<size_t>(dict.nearest(f_u))].skeleton;
  auto p_u = generator.generate(music_u);
  return metric.distance(p_u, p_v);
}

inline uint64_t trial_seed(uint64_t base, int trial) {
  return base + 0x9e3779b97f4a7c15ull * static_cast<uint64_t>(trial + 1);
}

// Rand Frame baseline: per trial, replace each generated dance with T frames
// sampled independently from the training skeletons, score each dictionary
// entry against its nearest-neighbor representative, and average the trials.
inline double rand_frame_baseline(const EmbeddingDictionary& dict, const PoseMetricNet& metric,
                                  int t_len, int trials, uint64_t seed) {
  if (dict.entries.empty()) throw StateError("rand_frame_baseline: empty dictionary");
  double total = 0;
  for (int trial = 0; trial < trials; ++trial) {
    nn::Rng rng(trial_seed(seed, trial));
    std::uniform_int_distribution<size_t> pick_entry(0, dict.entries.size() - 1);
    double trial_sum = 0;
    for (const auto& query : dict.entries) {
      const auto& p_v = dict.entries[static_cast<size_t>(dict.nearest(query.embedding))].skeleton;
      SkeletonSequence assembled(t_len);
      for (int t = 0; t < t_len; ++t) {
        const auto& src = dict.entries[pick_entry(rng)].skeleton;
        std::uniform_int_distribution<int> pick_frame(0, src.frames() - 1);
        int f = pick_frame(rng);
        for (int c = 0; c < kCoordsPerFrame; ++c) assembled.at(t, c) = src.at(f, c);
      }
      trial_sum += metric.distance(assembled, p_v);
    }
    total += trial_sum / static_cast<double>(dict.entries.size());
  }
  return total / trials;
}

// Rand Seq baseline: as above but sampling one whole training sequence.
inline double rand_seq_baseline(const EmbeddingDictionary& dict, const PoseMetricNet& metric,
                                int trials, uint64_t seed) {
  if (dict.entries.empty()) throw StateError("rand_seq_baseline: empty dictionary");
  double total = 0;
  for (int trial = 0; trial < trials; ++trial) {
    nn::Rng rng(trial_seed(seed, trial));
    std::uniform_int_distribution<size_t> pick_entry(0, dict.entries.size() - 1);
    double trial_sum = 0;
    for (const auto& query : dict.entries) {
      const auto& p_v = dict.entries[static_cast<size_t>(dict.nearest(query.embedding))].skeleton;
      const auto& sampled = dict.entries[pick_entry(rng)].skeleton;
      trial_sum += metric.distance(sampled, p_v);
    }
    total += trial_sum / static_cast<double>(dict.entries.size());
  }
  return total / trials;
}

}  // namespace choreo
