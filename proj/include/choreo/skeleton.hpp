#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "choreo/binio.hpp"
#include "choreo/error.hpp"

namespace choreo {

// COCO-18 joint layout: 0 nose, 1 neck, 2-4 right arm, 5-7 left arm,
// 8-10 right leg, 11-13 left leg, 14/15 eyes, 16/17 ears.
inline constexpr int kJoints = 18;
inline constexpr int kCoordsPerFrame = 2 * kJoints;
inline constexpr double kFps = 10.0;

// Skeleton bone list; hips attach to same-side shoulders, ears to eyes.
inline const std::vector<std::pair<int, int>>& coco_bones() {
  static const std::vector<std::pair<int, int>> bones = {
      {0, 1},  {1, 2},  {2, 3},   {3, 4},   {1, 5},   {5, 6},  {6, 7},  {2, 8}, {8, 9},
      {9, 10}, {5, 11}, {11, 12}, {12, 13}, {0, 14},  {14, 16}, {0, 15}, {15, 17}};
  return bones;
}

// One detected pose. Coordinates are normalized to [-1, 1]; confidence is
// kept only until cleaning (a joint with confidence <= 0 is "missing").
struct Skeleton {
  std::array<double, kCoordsPerFrame> coords{};  // x0,y0,...,x17,y17
  std::array<double, kJoints> confidence{};

  bool missing(int joint) const { return confidence[static_cast<size_t>(joint)] <= 0.0; }
};

// T frames of 2V coordinates, row-major, stored at file precision (f32).
class SkeletonSequence {
 public:
  SkeletonSequence() = default;
  SkeletonSequence(int frames, double fps = kFps)
      : t_(frames), fps_(fps), data_(static_cast<size_t>(frames) * kCoordsPerFrame, 0.0f) {}

  int frames() const { return t_; }
  double fps() const { return fps_; }
  int coords_per_frame() const { return kCoordsPerFrame; }

  float& at(int frame, int coord) {
    return data_[static_cast<size_t>(frame) * kCoordsPerFrame + coord];
  }
  float at(int frame, int coord) const {
    return data_[static_cast<size_t>(frame) * kCoordsPerFrame + coord];
  }
  float x(int frame, int joint) const { return at(frame, 2 * joint); }
  float y(int frame, int joint) const { return at(frame, 2 * joint + 1); }

  std::vector<float>& raw() { return data_; }
  const std::vector<float>& raw() const { return data_; }

 private:
  int t_ = 0;
  double fps_ = kFps;
  std::vector<float> data_;
};

struct WindowBatch {
  int window_len = 0;
  int stride = 0;
  std::vector<int> starts;
  std::vector<SkeletonSequence> windows;
};

// ---- ingestion ----

// Parses an OpenPose-style keypoint document: {"people":[{"pose_keypoints_2d":
// [x,y,c] * 18}]}. Pixel coordinates map to [-1,1] via x' = 2x/w - 1.
inline Skeleton ingest_openpose(const std::string& json_text, int width, int height) {
  if (width <= 0 || height <= 0) throw ConfigError("ingest_openpose: invalid image size");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("keypoint document parse error: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("people") || !doc["people"].is_array())
    throw DataError("keypoint document has no people array");
  const auto& people = doc["people"];
  if (people.empty()) throw DataError("no person detected in keypoint document");
  const auto& person = people[0];
  if (!person.contains("pose_keypoints_2d") || !person["pose_keypoints_2d"].is_array())
    throw DataError("person entry has no pose_keypoints_2d");
  const auto& kp = person["pose_keypoints_2d"];
  if (kp.size() < 3 * kJoints)
    throw DataError("pose_keypoints_2d holds " + std::to_string(kp.size()) +
                    " values, expected " + std::to_string(3 * kJoints));
  Skeleton sk;
  for (int j = 0; j < kJoints; ++j) {
    double px = kp[3 * j].get<double>();
    double py = kp[3 * j + 1].get<double>();
    double c = kp[3 * j + 2].get<double>();
    sk.coords[static_cast<size_t>(2 * j)] = 2.0 * px / width - 1.0;
    sk.coords[static_cast<size_t>(2 * j + 1)] = 2.0 * py / height - 1.0;
    sk.confidence[static_cast<size_t>(j)] = c;
  }
  return sk;
}

inline Skeleton ingest_openpose_file(const std::filesystem::path& path, int width, int height) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open keypoint file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ingest_openpose(text, width, height);
}

// ---- cleaning ----

// Repairs undetected joints by linear interpolation along time; boundary gaps
// take the nearest valid value. Wrong-but-confident detections are left alone.
inline SkeletonSequence clean_sequence(const std::vector<Skeleton>& raw, double fps = kFps) {
  if (raw.empty()) throw DataError("clean_sequence: empty input");
  int t_len = static_cast<int>(raw.size());
  SkeletonSequence out(t_len, fps);
  for (int j = 0; j < kJoints; ++j) {
    std::vector<int> valid;
    for (int t = 0; t < t_len; ++t)
      if (!raw[static_cast<size_t>(t)].missing(j)) valid.push_back(t);
    if (valid.empty())
      throw DataError("clean_sequence: joint " + std::to_string(j) + " missing in every frame");
    for (int axis = 0; axis < 2; ++axis) {
      int coord = 2 * j + axis;
      size_t vi = 0;
      for (int t = 0; t < t_len; ++t) {
        double v;
        if (!raw[static_cast<size_t>(t)].missing(j)) {
          v = raw[static_cast<size_t>(t)].coords[static_cast<size_t>(coord)];
          if (vi + 1 < valid.size() && valid[vi + 1] <= t) ++vi;
        } else if (t < valid.front()) {
          v = raw[static_cast<size_t>(valid.front())].coords[static_cast<size_t>(coord)];
        } else if (t > valid.back()) {
          v = raw[static_cast<size_t>(valid.back())].coords[static_cast<size_t>(coord)];
        } else {
          while (vi + 1 < valid.size() && valid[vi + 1] < t) ++vi;
          int p = valid[vi], n = valid[vi + 1];
          double w = static_cast<double>(t - p) / (n - p);
          double vp = raw[static_cast<size_t>(p)].coords[static_cast<size_t>(coord)];
          double vn = raw[static_cast<size_t>(n)].coords[static_cast<size_t>(coord)];
          v = vp + w * (vn - vp);
        }
        out.at(t, coord) = static_cast<float>(v);
      }
    }
  }
  return out;
}

// ---- windowing ----

// Largest stride satisfying t + (K-1)*s <= T; 0 when a single window.
inline int max_window_stride(int total_frames, int window_len, int count) {
  if (count <= 1) return 0;
  return (total_frames - window_len) / (count - 1);
}

inline WindowBatch window(const SkeletonSequence& seq, int window_len, int count,
                          int stride = -1) {
  int t_total = seq.frames();
  if (window_len < 1 || count < 1)
    throw ConfigError("window: window length and count must be positive");
  if (window_len > t_total)
    throw ConfigError("window: window length " + std::to_string(window_len) +
                      " exceeds sequence length " + std::to_string(t_total));
  if (stride < 0) stride = max_window_stride(t_total, window_len, count);
  if (count > 1 && stride < 1)
    throw ConfigError("window: no feasible stride for t=" + std::to_string(window_len) +
                      ", K=" + std::to_string(count) + ", T=" + std::to_string(t_total));
  if (window_len + (count - 1) * stride > t_total)
    throw ConfigError("window: t + (K-1)*s exceeds T");
  WindowBatch batch;
  batch.window_len = window_len;
  batch.stride = stride;
  for (int k = 0; k < count; ++k) {
    int start = k * stride;
    batch.starts.push_back(start);
    SkeletonSequence w(window_len, seq.fps());
    for (int t = 0; t < window_len; ++t)
      for (int c = 0; c < kCoordsPerFrame; ++c) w.at(t, c) = seq.at(start + t, c);
    batch.windows.push_back(std::move(w));
  }
  return batch;
}

// ---- temporal difference ----

struct ResampleCoeff {
  int lo, hi;
  double w;  // value = (1-w)*src[lo] + w*src[hi]
};

// Linear resampling positions from a length-`from` grid to length `to`.
inline std::vector<ResampleCoeff> resample_coeffs(int from, int to) {
  std::vector<ResampleCoeff> cs(static_cast<size_t>(to));
  for (int i = 0; i < to; ++i) {
    if (from == 1 || to == 1) {
      cs[static_cast<size_t>(i)] = {0, 0, 0.0};
      continue;
    }
    double pos = static_cast<double>(i) * (from - 1) / (to - 1);
    int lo = static_cast<int>(pos);
    if (lo >= from - 1) lo = from - 2;
    cs[static_cast<size_t>(i)] = {lo, lo + 1, pos - lo};
  }
  return cs;
}

// Frame-wise difference X_{t+1} - X_t, linearly resampled back to T frames so
// the result has the same shape as the input.
inline SkeletonSequence temporal_difference(const SkeletonSequence& seq) {
  int t_total = seq.frames();
  if (t_total < 2) throw DataError("temporal_difference: at least 2 frames required");
  std::vector<double> diff(static_cast<size_t>(t_total - 1) * kCoordsPerFrame);
  for (int t = 0; t + 1 < t_total; ++t)
    for (int c = 0; c < kCoordsPerFrame; ++c)
      diff[static_cast<size_t>(t) * kCoordsPerFrame + c] =
          static_cast<double>(seq.at(t + 1, c)) - seq.at(t, c);
  auto cs = resample_coeffs(t_total - 1, t_total);
  SkeletonSequence out(t_total, seq.fps());
  for (int i = 0; i < t_total; ++i) {
    const auto& rc = cs[static_cast<size_t>(i)];
    for (int c = 0; c < kCoordsPerFrame; ++c) {
      double lo = diff[static_cast<size_t>(rc.lo) * kCoordsPerFrame + c];
      double hi = diff[static_cast<size_t>(rc.hi) * kCoordsPerFrame + c];
      out.at(i, c) = static_cast<float>((1.0 - rc.w) * lo + rc.w * hi);
    }
  }
  return out;
}

// ---- persistence ----
// Binary layout: "SKSQ" | u32 version | u32 T | u32 V | f32 fps |
// T*2V f32 coordinates, frame-major. A JSON twin with the same field names
// exists for hand-written fixtures.

inline void save_sequence(const SkeletonSequence& seq, std::ostream& os) {
  binio::write_magic(os, "SKSQ");
  binio::write_le<uint32_t>(os, 1);
  binio::write_le<uint32_t>(os, static_cast<uint32_t>(seq.frames()));
  binio::write_le<uint32_t>(os, kJoints);
  binio::write_le<float>(os, static_cast<float>(seq.fps()));
  for (float v : seq.raw()) binio::write_le<float>(os, v);
}

inline void save_sequence(const SkeletonSequence& seq, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write sequence file " + path.string());
  save_sequence(seq, os);
}

inline void save_sequence_json(const SkeletonSequence& seq, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["magic"] = "SKSQ";
  doc["version"] = 1;
  doc["T"] = seq.frames();
  doc["V"] = kJoints;
  doc["fps"] = seq.fps();
  auto frames = nlohmann::json::array();
  for (int t = 0; t < seq.frames(); ++t) {
    auto row = nlohmann::json::array();
    for (int c = 0; c < kCoordsPerFrame; ++c) row.push_back(seq.at(t, c));
    frames.push_back(std::move(row));
  }
  doc["frames"] = std::move(frames);
  std::ofstream os(path);
  if (!os) throw DataError("cannot write sequence file " + path.string());
  os << doc.dump(2) << "\n";
}

inline SkeletonSequence load_sequence(std::istream& is) {
  auto magic = binio::read_magic(is);
  if (magic != "SKSQ") throw DataError("bad sequence magic '" + magic + "'");
  uint32_t version = binio::read_le<uint32_t>(is);
  if (version != 1) throw DataError("unsupported sequence version " + std::to_string(version));
  uint32_t t_total = binio::read_le<uint32_t>(is);
  uint32_t v = binio::read_le<uint32_t>(is);
  float fps = binio::read_le<float>(is);
  if (v != kJoints) throw DataError("sequence has V=" + std::to_string(v) + ", expected 18");
  SkeletonSequence seq(static_cast<int>(t_total), fps);
  for (auto& x : seq.raw()) x = binio::read_le<float>(is);
  return seq;
}

inline SkeletonSequence load_sequence_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("magic", "") != "SKSQ")
    throw DataError("bad JSON sequence document");
  if (doc.value("version", 0) != 1) throw DataError("unsupported sequence version");
  int v = doc.value("V", 0);
  if (v != kJoints) throw DataError("sequence has V=" + std::to_string(v) + ", expected 18");
  int t_total = doc.value("T", 0);
  double fps = doc.value("fps", kFps);
  const auto& frames = doc.at("frames");
  if (!frames.is_array() || static_cast<int>(frames.size()) != t_total)
    throw DataError("frame count does not match T");
  SkeletonSequence seq(t_total, fps);
  for (int t = 0; t < t_total; ++t) {
    const auto& row = frames[static_cast<size_t>(t)];
    if (static_cast<int>(row.size()) != kCoordsPerFrame)
      throw DataError("frame " + std::to_string(t) + " has wrong coordinate count");
    for (int c = 0; c < kCoordsPerFrame; ++c)
      seq.at(t, c) = row[static_cast<size_t>(c)].get<float>();
  }
  return seq;
}

inline SkeletonSequence load_sequence(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open sequence file " + path.string());
  int first = is.peek();
  if (first == '{') {
    nlohmann::json doc;
    try {
      is >> doc;
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(std::string("sequence JSON parse error: ") + e.what());
    }
    return load_sequence_json(doc);
  }
  return load_sequence(is);
}

}  // namespace choreo
