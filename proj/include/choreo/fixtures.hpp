#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "choreo/audio.hpp"
#include "choreo/crossmodal.hpp"
#include "choreo/skeleton.hpp"
#include "choreo/stgcn.hpp"
#include "choreo/train.hpp"

// Synthetic desk-scale fixtures: five "dance genres", each pairing a tone-
// and-tempo audio signature with a parametric limb-oscillation program
// phase-locked to the same tempo. Everything is seed-driven; no downloads.
namespace choreo::fixtures {

inline constexpr int kClasses = 5;

inline double class_tempo_hz(int cls) {
  static const double tempos[kClasses] = {1.0, 1.5, 2.0, 2.5, 3.0};
  return tempos[cls % kClasses];
}

inline double class_tone_hz(int cls) {
  static const double tones[kClasses] = {220.0, 277.2, 349.2, 440.0, 554.4};
  return tones[cls % kClasses];
}

// Tone bursts at the class tempo over a sustained base tone.
inline AudioClip make_audio(int cls, double seconds, uint64_t seed) {
  AudioClip clip;
  clip.sample_rate = kSampleRate;
  auto n = static_cast<size_t>(std::llround(seconds * kSampleRate));
  clip.samples.resize(n);
  nn::Rng rng(seed * 977 + static_cast<uint64_t>(cls));
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  double detune = 1.0 + jitter(rng);
  double tone = class_tone_hz(cls) * detune;
  double tempo = class_tempo_hz(cls);
  for (size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / kSampleRate;
    double beat = std::sin(M_PI * tempo * t);
    double env = 0.35 + 0.65 * beat * beat;  // pulses at the tempo
    double s = 0.55 * std::sin(2 * M_PI * tone * t) + 0.2 * std::sin(2 * M_PI * 2 * tone * t);
    clip.samples[i] = 0.8 * env * s;
  }
  return clip;
}

// Neutral standing pose in normalized coordinates (y grows downward, as in
// image space).
inline std::array<double, kCoordsPerFrame> base_pose() {
  std::array<double, kCoordsPerFrame> p{};
  auto set = [&](int j, double x, double y) {
    p[static_cast<size_t>(2 * j)] = x;
    p[static_cast<size_t>(2 * j + 1)] = y;
  };
  set(0, 0.00, -0.55);  // nose
  set(1, 0.00, -0.35);  // neck
  set(2, -0.18, -0.35); // r shoulder
  set(3, -0.28, -0.10); // r elbow
  set(4, -0.32, 0.12);  // r wrist
  set(5, 0.18, -0.35);  // l shoulder
  set(6, 0.28, -0.10);  // l elbow
  set(7, 0.32, 0.12);   // l wrist
  set(8, -0.12, 0.05);  // r hip
  set(9, -0.14, 0.40);  // r knee
  set(10, -0.15, 0.75); // r ankle
  set(11, 0.12, 0.05);  // l hip
  set(12, 0.14, 0.40);  // l knee
  set(13, 0.15, 0.75);  // l ankle
  set(14, -0.05, -0.60); // r eye
  set(15, 0.05, -0.60);  // l eye
  set(16, -0.10, -0.57); // r ear
  set(17, 0.10, -0.57);  // l ear
  return p;
}

// Class-specific motion programs, amplitude large enough that a constant
// predictor cannot sit under reconstruction thresholds.
inline SkeletonSequence make_dance(int cls, int frames, uint64_t seed) {
  SkeletonSequence seq(frames);
  nn::Rng rng(seed * 1315423911ull + static_cast<uint64_t>(cls) * 2654435761ull);
  std::uniform_real_distribution<double> uj(-1.0, 1.0);
  double amp_scale = 1.0 + 0.12 * uj(rng);
  double phase0 = 0.25 * uj(rng);
  auto base = base_pose();
  double tempo = class_tempo_hz(cls);
  for (int t = 0; t < frames; ++t) {
    auto pose = base;
    double ph = 2 * M_PI * tempo * (static_cast<double>(t) / kFps) + phase0;
    double s = std::sin(ph), c = std::cos(ph), a = amp_scale;
    auto move = [&](int j, double dx, double dy) {
      pose[static_cast<size_t>(2 * j)] += dx;
      pose[static_cast<size_t>(2 * j + 1)] += dy;
    };
    switch (cls % kClasses) {
      case 0:  // arm wave
        move(3, 0.20 * a * s, -0.05 * a * c);
        move(4, 0.38 * a * s, -0.22 * a * c);
        move(6, -0.20 * a * s, -0.05 * a * c);
        move(7, -0.38 * a * s, -0.22 * a * c);
        break;
      case 1:  // bounce
        for (int j = 0; j < kJoints; ++j) move(j, 0.0, 0.16 * a * std::abs(s));
        move(9, 0.10 * a * std::abs(s), -0.10 * a * std::abs(s));
        move(12, -0.10 * a * std::abs(s), -0.10 * a * std::abs(s));
        break;
      case 2:  // side sway
        for (int j = 0; j < kJoints; ++j) move(j, 0.30 * a * s, 0.0);
        move(0, 0.10 * a * s, 0.0);
        break;
      case 3:  // alternating kicks
        move(10, 0.40 * a * std::max(0.0, s), -0.30 * a * std::max(0.0, s));
        move(9, 0.20 * a * std::max(0.0, s), -0.15 * a * std::max(0.0, s));
        move(13, -0.40 * a * std::max(0.0, -s), -0.30 * a * std::max(0.0, -s));
        move(12, -0.20 * a * std::max(0.0, -s), -0.15 * a * std::max(0.0, -s));
        break;
      default:  // jumping jack
        move(4, 0.10 * a * std::abs(s), -0.55 * a * std::abs(s));
        move(7, -0.10 * a * std::abs(s), -0.55 * a * std::abs(s));
        move(3, 0.05 * a * std::abs(s), -0.28 * a * std::abs(s));
        move(6, -0.05 * a * std::abs(s), -0.28 * a * std::abs(s));
        move(10, -0.18 * a * std::abs(s), 0.0);
        move(13, 0.18 * a * std::abs(s), 0.0);
        break;
    }
    for (int cc = 0; cc < kCoordsPerFrame; ++cc)
      seq.at(t, cc) = static_cast<float>(std::clamp(pose[static_cast<size_t>(cc)], -1.0, 1.0));
  }
  return seq;
}

inline TrainPair make_pair(int cls, double seconds, uint64_t seed) {
  auto clip = make_audio(cls, seconds, seed);
  int frames = clip.whole_pieces();
  TrainPair pair;
  pair.music = slice_pieces(clip, frames);
  pair.dance = make_dance(cls, frames, seed);
  return pair;
}

inline std::vector<TrainPair> make_dataset(int per_class, double seconds, uint64_t seed,
                                           int classes = kClasses) {
  std::vector<TrainPair> data;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i)
      data.push_back(make_pair(c, seconds, seed + static_cast<uint64_t>(i) * 131 + 7));
  return data;
}

// Binary motion dataset for perceptual-backbone pretraining: class 0 holds a
// still pose with slight jitter, class 1 oscillates.
inline LabeledSequences make_motion_classes(int per_class, int frames, uint64_t seed) {
  LabeledSequences data;
  nn::Rng rng(seed);
  std::uniform_real_distribution<double> uj(-0.03, 0.03);
  std::uniform_real_distribution<double> uf(0.8, 3.0);
  for (int i = 0; i < per_class; ++i) {
    SkeletonSequence still(frames);
    auto base = base_pose();
    double ox = 0.3 * uj(rng) * 10, oy = 0.3 * uj(rng) * 10;
    for (int t = 0; t < frames; ++t)
      for (int j = 0; j < kJoints; ++j) {
        still.at(t, 2 * j) = static_cast<float>(base[static_cast<size_t>(2 * j)] + ox + uj(rng) * 0.1);
        still.at(t, 2 * j + 1) =
            static_cast<float>(base[static_cast<size_t>(2 * j + 1)] + oy + uj(rng) * 0.1);
      }
    data.sequences.push_back(std::move(still));
    data.labels.push_back(0);

    double freq = uf(rng);
    auto moving = make_dance(i % kClasses, frames, seed + 7919 * static_cast<uint64_t>(i));
    for (int t = 0; t < frames; ++t) {
      double extra = 0.08 * std::sin(2 * M_PI * freq * t / kFps);
      for (int j = 0; j < kJoints; ++j)
        moving.at(t, 2 * j) = static_cast<float>(moving.at(t, 2 * j) + extra);
    }
    data.sequences.push_back(std::move(moving));
    data.labels.push_back(1);
  }
  return data;
}

inline std::vector<GenreExample> make_genre_dataset(int per_class, double seconds,
                                                    uint64_t seed, int classes = kClasses) {
  std::vector<GenreExample> data;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      auto clip = make_audio(c, seconds, seed + static_cast<uint64_t>(i) * 37 + 1);
      GenreExample ex;
      ex.music = slice_pieces(clip, clip.whole_pieces());
      ex.label = c;
      data.push_back(std::move(ex));
    }
  return data;
}

// OpenPose-style per-frame keypoint documents for a sequence, exercising the
// ingest path. drop_rate > 0 zeroes random joint confidences.
inline void write_openpose_frames(const SkeletonSequence& seq, const std::filesystem::path& dir,
                                  int width, int height, double drop_rate = 0.0,
                                  uint64_t seed = 0) {
  std::filesystem::create_directories(dir);
  nn::Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < seq.frames(); ++t) {
    nlohmann::json kp = nlohmann::json::array();
    bool dropped_any = false;
    for (int j = 0; j < kJoints; ++j) {
      double px = (seq.at(t, 2 * j) + 1.0) * width / 2.0;
      double py = (seq.at(t, 2 * j + 1) + 1.0) * height / 2.0;
      bool drop = drop_rate > 0 && u(rng) < drop_rate && !(t == 0 && !dropped_any && j == 0);
      // never drop a joint in frame 0 entirely across the clip; cleaning
      // needs one observation per joint, which frame 0 guarantees
      if (t == 0) drop = false;
      if (drop) dropped_any = true;
      kp.push_back(drop ? 0.0 : px);
      kp.push_back(drop ? 0.0 : py);
      kp.push_back(drop ? 0.0 : 0.9);
    }
    nlohmann::json doc;
    doc["version"] = 1.3;
    doc["people"] = nlohmann::json::array({{{"pose_keypoints_2d", kp}}});
    std::ostringstream name;
    name << "frame_" << std::setw(6) << std::setfill('0') << t << "_keypoints.json";
    std::ofstream os(dir / name.str());
    os << doc.dump() << "\n";
  }
}

}  // namespace choreo::fixtures
