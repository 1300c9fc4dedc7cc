#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "choreo/checkpoint.hpp"
#include "choreo/discriminator.hpp"
#include "choreo/generator.hpp"
#include "choreo/losses.hpp"
#include "choreo/stgcn.hpp"

namespace choreo {

// Cumulative training conditions, in the ablation-ladder order:
// L1 only, + global content discriminator, + local temporal discriminator,
// + pose perceptual loss.
enum class Condition { kL1Only, kGlobalD, kLocalD, kFull };

inline std::string to_string(Condition c) {
  switch (c) {
    case Condition::kL1Only: return "l1";
    case Condition::kGlobalD: return "global_d";
    case Condition::kLocalD: return "local_d";
    case Condition::kFull: return "full";
  }
  return "?";
}

inline Condition parse_condition(const std::string& s) {
  if (s == "l1") return Condition::kL1Only;
  if (s == "global_d") return Condition::kGlobalD;
  if (s == "local_d") return Condition::kLocalD;
  if (s == "full") return Condition::kFull;
  throw ConfigError("unknown condition '" + s + "' (expected l1|global_d|local_d|full)");
}

struct TrainConfig {
  int epochs = 400;
  double lr_generator = 0.003;
  double lr_local_d = 0.003;
  double lr_global_d = 0.005;
  int batch_size = 16;
  uint64_t seed = 0;
  Condition condition = Condition::kFull;
  int window_len = 5;
  int window_count = 16;
  int gp_samples = 2;  // interpolants per penalty estimate
  LossWeights weights;
  GeneratorConfig generator;
  GlobalDiscriminatorConfig global_d;
  PoseBackboneConfig local_backbone;
  StGcnConfig phi;

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (lr_generator <= 0 || lr_local_d <= 0 || lr_global_d <= 0)
      throw ConfigError("learning rates must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (window_len < 2 || window_count < 1) throw ConfigError("invalid windowing parameters");
    weights.validate();
    generator.validate();
  }

  // key = value mirror of the scalar fields; also the hashing input.
  std::string canonical_text() const {
    std::ostringstream os;
    os << "epochs = " << epochs << "\n";
    os << "lr_generator = " << lr_generator << "\n";
    os << "lr_local_d = " << lr_local_d << "\n";
    os << "lr_global_d = " << lr_global_d << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "seed = " << seed << "\n";
    os << "condition = " << choreo::to_string(condition) << "\n";
    os << "window_len = " << window_len << "\n";
    os << "window_count = " << window_count << "\n";
    os << "gp_samples = " << gp_samples << "\n";
    os << "w_gp = " << weights.w_gp << "\n";
    os << "w_p = " << weights.w_p << "\n";
    os << "w_fm = " << weights.w_fm << "\n";
    os << "w_l1 = " << weights.w_l1 << "\n";
    os << "lambda_l = ";
    for (size_t i = 0; i < weights.lambda_l.size(); ++i)
      os << (i ? "," : "") << weights.lambda_l[i];
    os << "\n";
    os << "audio_feature_dim = " << generator.audio_feature_dim << "\n";
    os << "rnn_hidden = " << generator.rnn_hidden << "\n";
    return os.str();
  }

  std::string hash() const {  // FNV-1a
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : canonical_text()) {
      h ^= c;
      h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
  }

  void apply_entry(const std::string& key, const std::string& value) {
    auto to_d = [&](const std::string& v) { return std::stod(v); };
    auto to_i = [&](const std::string& v) { return std::stoi(v); };
    if (key == "epochs") epochs = to_i(value);
    else if (key == "lr_generator") lr_generator = to_d(value);
    else if (key == "lr_local_d") lr_local_d = to_d(value);
    else if (key == "lr_global_d") lr_global_d = to_d(value);
    else if (key == "batch_size") batch_size = to_i(value);
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "condition") condition = parse_condition(value);
    else if (key == "window_len") window_len = to_i(value);
    else if (key == "window_count") window_count = to_i(value);
    else if (key == "gp_samples") gp_samples = to_i(value);
    else if (key == "w_gp") weights.w_gp = to_d(value);
    else if (key == "w_p") weights.w_p = to_d(value);
    else if (key == "w_fm") weights.w_fm = to_d(value);
    else if (key == "w_l1") weights.w_l1 = to_d(value);
    else if (key == "audio_feature_dim") generator.audio_feature_dim = to_i(value);
    else if (key == "rnn_hidden") {
      generator.rnn_hidden = to_i(value);
      global_d.rnn_hidden = to_i(value);
    } else if (key == "lambda_l") {
      weights.lambda_l.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) weights.lambda_l.push_back(std::stod(item));
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  static TrainConfig from_text(std::istream& is) {
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      auto hashpos = line.find('#');
      if (hashpos != std::string::npos) line.erase(hashpos);
      auto eq = line.find('=');
      if (eq == std::string::npos) {
        bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
        if (!blank)
          throw ConfigError("config line " + std::to_string(lineno) + " is not key = value");
        continue;
      }
      auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      cfg.apply_entry(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static TrainConfig from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    return from_text(is);
  }
};

struct TrainPair {
  MusicPieceBatch music;
  SkeletonSequence dance;
};

// Alternating-update trainer: one discriminator step then one generator step
// per batch, with separate Adam optimizers per network.
class Trainer {
 public:
  using LogSink = std::function<void(const LossReport&)>;

  explicit Trainer(TrainConfig cfg)
      : cfg_(std::move(cfg)),
        rng_(cfg_.seed),
        generator_(rng_, cfg_.generator),
        local_d_(rng_, cfg_.local_backbone),
        global_d_(rng_, cfg_.global_d),
        phi_(rng_, cfg_.phi),
        opt_g_(cfg_.lr_generator),
        opt_dl_(cfg_.lr_local_d),
        opt_dg_(cfg_.lr_global_d) {
    cfg_.validate();
    if (static_cast<int>(cfg_.weights.lambda_l.size()) != cfg_.phi.tap_count())
      throw ConfigError("lambda_l length must equal the perceptual tap count");
    phi_.freeze();
  }

  const TrainConfig& config() const { return cfg_; }
  Generator& generator() { return generator_; }
  LocalTemporalDiscriminator& local_d() { return local_d_; }
  GlobalContentDiscriminator& global_d() { return global_d_; }
  StGcn& phi() { return phi_; }
  int epoch() const { return epoch_; }
  int64_t step_count() const { return step_; }

  void train(const std::vector<TrainPair>& data, const LogSink& sink = {}) {
    train_epochs(data, cfg_.epochs - epoch_, sink);
  }

  void train_epochs(const std::vector<TrainPair>& data, int n_epochs, const LogSink& sink = {}) {
    if (data.empty()) throw ConfigError("train: empty dataset");
    for (const auto& pair : data)
      if (pair.music.pieces != pair.dance.frames())
        throw ShapeError("train: music piece count must equal dance frame count");
    for (int e = 0; e < n_epochs; ++e) {
      auto batches = make_batches(data);
      for (const auto& batch : batches) {
        auto report = train_step(data, batch);
        if (sink) sink(report);
      }
      ++epoch_;
    }
  }

  // ---- checkpointing ----

  Checkpoint checkpoint() const {
    Checkpoint ck;
    ck.put_params(generator_.params());
    ck.put_params(local_d_.params());
    ck.put_params(global_d_.params());
    ck.put_params(phi_.params());
    ck.put_adam(opt_g_, "opt_g");
    ck.put_adam(opt_dl_, "opt_dl");
    ck.put_adam(opt_dg_, "opt_dg");
    std::ostringstream rs;
    rs << rng_;
    ck.strings["rng"] = rs.str();
    ck.strings["epoch"] = std::to_string(epoch_);
    ck.strings["step"] = std::to_string(step_);
    ck.strings["config"] = cfg_.canonical_text();
    ck.strings["config_hash"] = cfg_.hash();
    std::string taps;
    for (const auto& n : phi_.tap_names()) taps += (taps.empty() ? "" : ",") + n;
    ck.strings["phi.taps"] = taps;
    return ck;
  }

  void restore(const Checkpoint& ck) {
    auto it = ck.strings.find("config_hash");
    if (it == ck.strings.end()) throw StateError("checkpoint has no config hash");
    if (it->second != cfg_.hash())
      throw StateError("checkpoint was produced by a different configuration");
    ck.load_params(generator_.params());
    ck.load_params(local_d_.params());
    ck.load_params(global_d_.params());
    ck.load_params(phi_.params());
    ck.load_adam(opt_g_, "opt_g");
    ck.load_adam(opt_dl_, "opt_dl");
    ck.load_adam(opt_dg_, "opt_dg");
    std::istringstream rs(ck.strings.at("rng"));
    rs >> rng_;
    epoch_ = std::stoi(ck.strings.at("epoch"));
    step_ = std::stoll(ck.strings.at("step"));
    phi_cache_.clear();
  }

  // Full pipeline from a stored generator: slice whole 0.1 s pieces from the
  // clip and decode one skeleton frame per piece.
  static SkeletonSequence generate_from_checkpoint(const Checkpoint& ck, const AudioClip& clip) {
    int t_len = clip.whole_pieces();
    if (t_len < 1) throw DataError("clip is shorter than one 0.1 s piece");
    TrainConfig cfg;
    auto it = ck.strings.find("config");
    if (it != ck.strings.end()) {
      std::istringstream is(it->second);
      cfg = TrainConfig::from_text(is);
    }
    nn::Rng init_rng(0);
    Generator g(init_rng, cfg.generator);
    ck.load_params(g.params());
    return g.generate(slice_pieces(clip, t_len));
  }

 private:
  std::vector<std::vector<size_t>> make_batches(const std::vector<TrainPair>& data) {
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng_);
    // bucket by clip length, preserving shuffled order inside buckets
    std::map<int, std::vector<size_t>> buckets;
    for (size_t i : order) buckets[data[i].dance.frames()].push_back(i);
    std::vector<std::vector<size_t>> batches;
    for (auto& [t_len, idxs] : buckets)
      for (size_t at = 0; at < idxs.size(); at += static_cast<size_t>(cfg_.batch_size)) {
        size_t end = std::min(idxs.size(), at + static_cast<size_t>(cfg_.batch_size));
        batches.emplace_back(idxs.begin() + static_cast<std::ptrdiff_t>(at),
                             idxs.begin() + static_cast<std::ptrdiff_t>(end));
      }
    return batches;
  }

  LossReport train_step(const std::vector<TrainPair>& data, const std::vector<size_t>& batch) {
    int b = static_cast<int>(batch.size());
    int t_len = data[batch[0]].dance.frames();
    std::vector<const SkeletonSequence*> seqs;
    std::vector<const MusicPieceBatch*> musics;
    for (size_t i : batch) {
      seqs.push_back(&data[i].dance);
      musics.push_back(&data[i].music);
    }
    auto real = ag::constant(sequence_batch_tensor(seqs));
    auto music = ag::constant(pieces_batch_tensor(musics));

    bool use_global = cfg_.condition != Condition::kL1Only;
    bool use_local =
        cfg_.condition == Condition::kLocalD || cfg_.condition == Condition::kFull;
    bool use_perceptual = cfg_.condition == Condition::kFull;

    auto fake = generator_.forward(music, b, t_len);

    LossParts parts;
    AdvOptions opt;
    opt.window_len = cfg_.window_len;
    opt.window_count = cfg_.window_count;
    opt.use_local = use_local;
    opt.use_global = use_global;
    opt.w_gp = cfg_.weights.w_gp;
    opt.gp_samples = cfg_.gp_samples;

    auto local_fn = [&](const ag::NodePtr& w, int n, int len) {
      return local_d_.scores(w, n, len);
    };
    auto global_fn = [&](const ag::NodePtr& s, const ag::NodePtr& m) {
      return global_d_.forward(s, m, s->rows() / t_len, t_len).score;
    };

    // Discriminator update on detached generator output.
    if (use_global || use_local) {
      nn::FreezeGuard freeze_g(generator_.params());
      opt.with_gp = use_global;
      auto adv = adversarial_losses(real, ag::detach(fake), music, b, t_len, local_fn,
                                    global_fn, opt, &rng_);
      auto grads = ag::backward(adv.d_objective);
      if (use_local) opt_dl_.step(local_d_.params(), grads);
      opt_dg_.step(global_d_.params(), grads);
      parts.adv_d_logs = adv.d_logs->value.item();
      parts.gp = adv.gp ? adv.gp->value.item() : 0.0;
    }

    // Generator update against the refreshed discriminators.
    ag::NodePtr g_obj;
    {
      nn::FreezeGuard freeze_dl(local_d_.params());
      nn::FreezeGuard freeze_dg(global_d_.params());
      auto l1 = l1_reconstruction(real, fake);
      parts.l_l1 = l1->value.item();
      g_obj = ag::scale(l1, cfg_.weights.w_l1);
      if (use_local) {
        auto win_fake = window_node(fake, b, t_len, cfg_.window_len, cfg_.window_count);
        auto s_fake = local_d_.scores(win_fake, b * cfg_.window_count, cfg_.window_len);
        auto term = ag::neg(mean_log(s_fake));
        parts.adv_g += term->value.item();
        g_obj = ag::add(g_obj, term);
      }
      if (use_global) {
        auto out_fake = global_d_.forward(fake, music, b, t_len);
        auto term = ag::neg(mean_log(out_fake.score));
        parts.adv_g += term->value.item();
        g_obj = ag::add(g_obj, term);
        auto out_real = global_d_.forward(real, music, b, t_len);
        auto fm = feature_matching(out_real.taps, out_fake.taps);
        parts.l_fm = fm->value.item();
        g_obj = ag::add(g_obj, ag::scale(fm, cfg_.weights.w_fm));
      }
      if (use_perceptual) {
        const auto& cached = phi_real_taps(data, batch, t_len);
        auto lp = pose_perceptual_cached(phi_, cached, fake, cfg_.weights.lambda_l, b, t_len);
        parts.l_p = lp->value.item();
        g_obj = ag::add(g_obj, ag::scale(lp, cfg_.weights.w_p));
      }
      auto grads = ag::backward(g_obj);
      opt_g_.step(generator_.params(), grads);
    }

    auto report = full_objective(parts, cfg_.weights);
    report.step = step_++;
    report.epoch = epoch_;
    // Internal consistency: the combined report must match the trained node.
    double combined = report.g_objective;
    if (std::abs(combined - g_obj->value.item()) >
        1e-6 * std::max(1.0, std::abs(combined)))
      throw NumericError("generator objective disagrees with its report");
    return report;
  }

  // Frozen-backbone activations of the ground-truth batch, cached per batch
  // composition (the references never change during a run).
  const std::vector<Tensor>& phi_real_taps(const std::vector<TrainPair>& data,
                                           const std::vector<size_t>& batch, int t_len) {
    auto it = phi_cache_.find(batch);
    if (it != phi_cache_.end()) return it->second;
    if (phi_cache_.size() > 64) phi_cache_.clear();  // bound growth under reshuffling
    std::vector<const SkeletonSequence*> seqs;
    for (size_t i : batch) seqs.push_back(&data[i].dance);
    auto real = ag::constant(sequence_batch_tensor(seqs));
    auto acts = extract_activations(phi_, real, static_cast<int>(batch.size()), t_len);
    std::vector<Tensor> taps;
    for (const auto& t : acts.taps) taps.push_back(t->value);
    return phi_cache_.emplace(batch, std::move(taps)).first->second;
  }

  TrainConfig cfg_;
  nn::Rng rng_;
  Generator generator_;
  LocalTemporalDiscriminator local_d_;
  GlobalContentDiscriminator global_d_;
  StGcn phi_;
  nn::Adam opt_g_, opt_dl_, opt_dg_;
  int epoch_ = 0;
  int64_t step_ = 0;
  std::map<std::vector<size_t>, std::vector<Tensor>> phi_cache_;
};

}  // namespace choreo
