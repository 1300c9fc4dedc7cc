#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "choreo/nn.hpp"
#include "choreo/seq_tensor.hpp"
#include "choreo/stgcn.hpp"

namespace choreo {

inline constexpr double kScoreEps = 1e-7;   // clamp applied before logarithms
inline constexpr double kNormEps = 1e-12;   // inside the gradient-norm square root

struct LossWeights {
  std::vector<double> lambda_l{20, 5, 1, 1, 1, 1, 1, 1, 1};
  double w_gp = 1.0;
  double w_p = 1.0;
  double w_fm = 1.0;
  double w_l1 = 200.0;

  void validate() const {
    for (double l : lambda_l)
      if (l < 0) throw ConfigError("lambda weights must be non-negative");
    if (w_gp < 0 || w_p < 0 || w_fm < 0 || w_l1 < 0)
      throw ConfigError("loss weights must be non-negative");
  }
};

// ---- pose perceptual loss ----

// sum_l lambda_l * ||phi_l(a) - phi_l(b)||_1 with elementwise-sum L1 over
// each activation tensor. Phi stays frozen; gradients reach the inputs only.
inline ag::NodePtr pose_perceptual(const StGcn& phi, const ag::NodePtr& a, const ag::NodePtr& b,
                                   const std::vector<double>& lambda, int batch, int t_len) {
  if (!a->value.same_shape(b->value))
    throw ShapeError("pose_perceptual: sequence shapes differ");
  if (static_cast<int>(lambda.size()) != phi.config().tap_count())
    throw ConfigError("pose_perceptual: " + std::to_string(lambda.size()) +
                      " layer weights for " + std::to_string(phi.config().tap_count()) +
                      " tap points");
  auto acts_a = extract_activations(phi, a, batch, t_len);
  auto acts_b = extract_activations(phi, b, batch, t_len);
  ag::NodePtr total = nullptr;
  for (size_t l = 0; l < lambda.size(); ++l) {
    if (lambda[l] == 0) continue;
    auto term = ag::scale(ag::sum_all(ag::abs_(ag::sub(acts_a.taps[l], acts_b.taps[l]))),
                          lambda[l]);
    total = total ? ag::add(total, term) : term;
  }
  return total ? total : ag::scalar_const(0.0);
}

// Variant with precomputed reference activations (frozen ground truth).
inline ag::NodePtr pose_perceptual_cached(const StGcn& phi,
                                          const std::vector<Tensor>& real_taps,
                                          const ag::NodePtr& b,
                                          const std::vector<double>& lambda, int batch,
                                          int t_len) {
  if (static_cast<int>(lambda.size()) != phi.config().tap_count())
    throw ConfigError("pose_perceptual: layer weight count mismatch");
  if (real_taps.size() != lambda.size())
    throw ConfigError("pose_perceptual: cached activation count mismatch");
  auto acts_b = extract_activations(phi, b, batch, t_len);
  ag::NodePtr total = nullptr;
  for (size_t l = 0; l < lambda.size(); ++l) {
    if (lambda[l] == 0) continue;
    auto term = ag::scale(
        ag::sum_all(ag::abs_(ag::sub(ag::constant(real_taps[l]), acts_b.taps[l]))), lambda[l]);
    total = total ? ag::add(total, term) : term;
  }
  return total ? total : ag::scalar_const(0.0);
}

inline double pose_perceptual(const StGcn& phi, const SkeletonSequence& p,
                              const SkeletonSequence& x, const std::vector<double>& lambda) {
  if (p.frames() != x.frames()) throw ShapeError("pose_perceptual: frame counts differ");
  return pose_perceptual(phi, ag::constant(sequence_tensor(p)),
                         ag::constant(sequence_tensor(x)), lambda, 1, p.frames())
      ->value.item();
}

// ---- joint-level L1 reconstruction ----

// Summed (not averaged) absolute coordinate differences, as the objective
// treats the whole sequence as one joint-location vector.
inline ag::NodePtr l1_reconstruction(const ag::NodePtr& y, const ag::NodePtr& x) {
  if (!y->value.same_shape(x->value)) throw ShapeError("l1_reconstruction: shape mismatch");
  return ag::sum_all(ag::abs_(ag::sub(y, x)));
}

inline double l1_reconstruction(const SkeletonSequence& y, const SkeletonSequence& x) {
  if (y.frames() != x.frames()) throw ShapeError("l1_reconstruction: frame counts differ");
  return l1_reconstruction(ag::constant(sequence_tensor(y)), ag::constant(sequence_tensor(x)))
      ->value.item();
}

// ---- feature matching ----

// sum_i ||D^i(real) - D^i(fake)||_1 over discriminator layers, without
// per-layer normalization. Real-side activations are detached so gradients
// reach the generator only.
inline ag::NodePtr feature_matching(const std::vector<ag::NodePtr>& real_taps,
                                    const std::vector<ag::NodePtr>& fake_taps) {
  if (real_taps.size() != fake_taps.size())
    throw ConfigError("feature_matching: discriminator layer counts differ (" +
                      std::to_string(real_taps.size()) + " vs " +
                      std::to_string(fake_taps.size()) + ")");
  ag::NodePtr total = nullptr;
  for (size_t i = 0; i < real_taps.size(); ++i) {
    if (!real_taps[i]->value.same_shape(fake_taps[i]->value))
      throw ShapeError("feature_matching: layer " + std::to_string(i) + " shapes differ");
    auto term = ag::sum_all(ag::abs_(ag::sub(ag::detach(real_taps[i]), fake_taps[i])));
    total = total ? ag::add(total, term) : term;
  }
  return total ? total : ag::scalar_const(0.0);
}

// ---- gradient penalty ----

// Mean over the batch of (||grad_{x,m} D(x_hat, m)||_2 - 1)^2. The critic must
// score samples independently (one row per sample) so that the gradient of
// the score sum separates per sample.
template <class CriticFn>
ag::NodePtr gradient_penalty(CriticFn&& critic, const Tensor& x_hat, const Tensor& music,
                             int batch) {
  auto x = ag::leaf(x_hat, "gp.x_hat");
  auto m = ag::leaf(music, "gp.music");
  auto score = critic(x, m);
  if (score->rows() != batch)
    throw ShapeError("gradient_penalty: critic must emit one score per sample");
  auto grads = ag::backward(ag::sum_all(score));
  auto per_sample_sq = [&](const ag::NodePtr& g, const ag::NodePtr& leaf_node) -> ag::NodePtr {
    if (!g) return ag::constant(Tensor::zeros({batch, 1}));
    int rows_per = leaf_node->rows() / batch;
    return ag::rowsum(nn::sum_pool_rows(ag::square(g), batch, rows_per));
  };
  auto sq = ag::add(per_sample_sq(ag::grad_of(grads, x), x),
                    per_sample_sq(ag::grad_of(grads, m), m));
  auto norm = ag::sqrt_(ag::add_const(sq, kNormEps));
  return ag::mean_all(ag::square(ag::add_const(norm, -1.0)));
}

// Pose interpolation x_hat = eps * real + (1 - eps) * fake with per-sample
// uniform eps; the conditioning music is kept real.
inline Tensor interpolate_poses(const Tensor& real, const Tensor& fake, int batch,
                                nn::Rng& rng) {
  if (!real.same_shape(fake)) throw ShapeError("interpolate_poses: shape mismatch");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Tensor out = real;
  int rows_per = real.rows() / batch;
  for (int b = 0; b < batch; ++b) {
    double eps = uni(rng);
    for (int r = b * rows_per; r < (b + 1) * rows_per; ++r)
      for (int c = 0; c < real.cols(); ++c)
        out.at(r, c) = eps * real.at(r, c) + (1.0 - eps) * fake.at(r, c);
  }
  return out;
}

// ---- adversarial loss ----

struct AdvOptions {
  int window_len = 5;
  int window_count = 16;
  bool use_local = true;
  bool use_global = true;
  bool with_gp = true;
  double w_gp = 1.0;
  int gp_samples = 0;  // 0 = whole batch
};

struct AdvTerms {
  ag::NodePtr g_term;       // non-saturating generator loss (to minimize)
  ag::NodePtr d_logs;       // the four log terms as printed (maximized by D)
  ag::NodePtr d_report;     // d_logs + w_gp * gp
  ag::NodePtr d_objective;  // -d_logs + w_gp * gp (to minimize)
  ag::NodePtr gp;           // may be null when disabled
};

inline ag::NodePtr mean_log(const ag::NodePtr& scores) {
  return ag::mean_all(ag::log_(ag::clamp(scores, kScoreEps, 1.0 - kScoreEps)));
}

inline ag::NodePtr mean_log_one_minus(const ag::NodePtr& scores) {
  return ag::mean_all(
      ag::log_(ag::clamp(ag::add_const(ag::neg(scores), 1.0), kScoreEps, 1.0 - kScoreEps)));
}

// Extracts K overlapping windows (the S(.) operator) from each clip of a
// sample-major (B*T) x C tensor, stacked as (B*K*len) x C.
inline ag::NodePtr window_node(const ag::NodePtr& seq, int batch, int t_len, int window_len,
                               int count) {
  int stride = max_window_stride(t_len, window_len, count);
  if (window_len > t_len || (count > 1 && stride < 1))
    throw ConfigError("window_node: infeasible windowing configuration");
  std::vector<int> rows;
  rows.reserve(static_cast<size_t>(batch) * count * window_len);
  for (int b = 0; b < batch; ++b)
    for (int k = 0; k < count; ++k)
      for (int t = 0; t < window_len; ++t) rows.push_back(b * t_len + k * stride + t);
  return ag::gather_rows(seq, rows);
}

// The adversarial objective: log-likelihood terms for the local critic over
// pose windows and the global critic over (pose, music), plus the gradient
// penalty on pose interpolants. LocalFn(windows, n, len) -> (n x 1) scores;
// GlobalFn(seq, music) -> (B x 1) scores.
template <class LocalFn, class GlobalFn>
AdvTerms adversarial_losses(const ag::NodePtr& real, const ag::NodePtr& fake,
                            const ag::NodePtr& music, int batch, int t_len,
                            LocalFn&& local_scores, GlobalFn&& global_score,
                            const AdvOptions& opt, nn::Rng* rng = nullptr) {
  if (!real->value.same_shape(fake->value))
    throw ShapeError("adversarial_losses: real/fake shapes differ");
  AdvTerms out;
  ag::NodePtr d_logs = nullptr;
  ag::NodePtr g_term = nullptr;
  auto accumulate = [](ag::NodePtr& acc, const ag::NodePtr& term) {
    acc = acc ? ag::add(acc, term) : term;
  };
  if (opt.use_local) {
    int n = batch * opt.window_count;
    auto win_real = window_node(real, batch, t_len, opt.window_len, opt.window_count);
    auto win_fake = window_node(fake, batch, t_len, opt.window_len, opt.window_count);
    auto s_real = local_scores(win_real, n, opt.window_len);
    auto s_fake = local_scores(win_fake, n, opt.window_len);
    accumulate(d_logs, mean_log(s_real));
    accumulate(d_logs, mean_log_one_minus(s_fake));
    accumulate(g_term, ag::neg(mean_log(s_fake)));
  }
  if (opt.use_global) {
    auto s_real = global_score(real, music);
    auto s_fake = global_score(fake, music);
    accumulate(d_logs, mean_log(s_real));
    accumulate(d_logs, mean_log_one_minus(s_fake));
    accumulate(g_term, ag::neg(mean_log(s_fake)));
    if (opt.with_gp) {
      if (!rng) throw ConfigError("adversarial_losses: gradient penalty needs an RNG");
      int gp_n = opt.gp_samples > 0 ? std::min(opt.gp_samples, batch) : batch;
      int rows_per = t_len;
      Tensor real_sub({gp_n * rows_per, real->cols()});
      Tensor fake_sub({gp_n * rows_per, real->cols()});
      Tensor music_sub({gp_n * rows_per, music->cols()});
      for (int64_t i = 0; i < real_sub.numel(); ++i) {
        real_sub[i] = real->value[i];
        fake_sub[i] = fake->value[i];
      }
      for (int64_t i = 0; i < music_sub.numel(); ++i) music_sub[i] = music->value[i];
      auto x_hat = interpolate_poses(real_sub, fake_sub, gp_n, *rng);
      out.gp = gradient_penalty(global_score, x_hat, music_sub, gp_n);
    }
  }
  if (!d_logs) throw ConfigError("adversarial_losses: no discriminator enabled");
  out.d_logs = d_logs;
  out.g_term = g_term;
  out.d_report = out.gp ? ag::add(d_logs, ag::scale(out.gp, opt.w_gp)) : d_logs;
  out.d_objective = out.gp ? ag::add(ag::neg(d_logs), ag::scale(out.gp, opt.w_gp))
                           : ag::neg(d_logs);
  return out;
}

// ---- full objective ----

struct LossParts {
  double adv_g = 0;       // generator-side adversarial term
  double adv_d_logs = 0;  // discriminator log terms as printed
  double gp = 0;
  double l_p = 0;
  double l_fm = 0;
  double l_l1 = 0;
};

struct LossReport {
  int64_t step = 0;
  int epoch = 0;
  double adv_g = 0, adv_d = 0, gp = 0, l_p = 0, l_fm = 0, l_l1 = 0;
  double g_objective = 0, d_objective = 0;

  static std::string tsv_header() {
    return "step\tepoch\tadv_g\tadv_d\tgp\tl_p\tl_fm\tl_l1\tg_objective\td_objective";
  }

  std::string tsv_row() const {
    std::ostringstream os;
    os << step << '\t' << epoch << '\t' << adv_g << '\t' << adv_d << '\t' << gp << '\t' << l_p
       << '\t' << l_fm << '\t' << l_l1 << '\t' << g_objective << '\t' << d_objective;
    return os.str();
  }
};

// Combines per-term values into the trained objectives:
//   generator: adv_g + w_p * L_P + w_fm * L_FM + w_l1 * L_L1
//   discriminator: -(log terms) + w_gp * GP, reported alongside the printed
//   maximized form adv_d = log terms + w_gp * GP.
inline LossReport full_objective(const LossParts& parts, const LossWeights& w) {
  w.validate();
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v))
      throw NumericError(std::string("full_objective: non-finite term ") + name);
  };
  check(parts.adv_g, "adv_g");
  check(parts.adv_d_logs, "adv_d");
  check(parts.gp, "gp");
  check(parts.l_p, "l_p");
  check(parts.l_fm, "l_fm");
  check(parts.l_l1, "l_l1");
  LossReport r;
  r.adv_g = parts.adv_g;
  r.gp = parts.gp;
  r.l_p = parts.l_p;
  r.l_fm = parts.l_fm;
  r.l_l1 = parts.l_l1;
  r.adv_d = parts.adv_d_logs + w.w_gp * parts.gp;
  r.g_objective = parts.adv_g + w.w_p * parts.l_p + w.w_fm * parts.l_fm + w.w_l1 * parts.l_l1;
  r.d_objective = -parts.adv_d_logs + w.w_gp * parts.gp;
  return r;
}

}  // namespace choreo
