#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>
#include <sstream>

#include "choreo/skeleton.hpp"

using namespace choreo;

namespace {

std::string keypoint_doc(const std::vector<std::array<double, 3>>& triples) {
  nlohmann::json kp = nlohmann::json::array();
  for (const auto& t : triples) {
    kp.push_back(t[0]);
    kp.push_back(t[1]);
    kp.push_back(t[2]);
  }
  nlohmann::json doc;
  doc["people"] = nlohmann::json::array({{{"pose_keypoints_2d", kp}}});
  return doc.dump();
}

// Brute-force search for the largest stride with t + (K-1)*s <= T.
int oracle_max_stride(int t_total, int window_len, int count) {
  int best = -1;
  for (int s = 1; s <= t_total; ++s)
    if (window_len + (count - 1) * s <= t_total) best = s;
  return best;
}

SkeletonSequence random_sequence(int frames, std::mt19937_64& rng) {
  SkeletonSequence seq(frames);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  for (auto& v : seq.raw()) v = d(rng);
  return seq;
}

}  // namespace

TEST_CASE("ingest maps the image center to the origin") {
  std::vector<std::array<double, 3>> triples(18, {640.0, 360.0, 0.9});
  auto sk = ingest_openpose(keypoint_doc(triples), 1280, 720);
  for (int j = 0; j < kJoints; ++j) {
    CHECK_THAT(sk.coords[2 * j], Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(sk.coords[2 * j + 1], Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_FALSE(sk.missing(j));
  }
}

TEST_CASE("zero-confidence triples are marked missing") {
  std::vector<std::array<double, 3>> triples(18, {100.0, 100.0, 0.8});
  triples[4] = {0.0, 0.0, 0.0};
  auto sk = ingest_openpose(keypoint_doc(triples), 640, 480);
  CHECK(sk.missing(4));
  CHECK_FALSE(sk.missing(3));
}

TEST_CASE("corner pixels map exactly to +/-1") {
  // Hand-computed affine map: x' = 2x/w - 1, so x=0 -> -1 and x=w -> +1.
  int w = 1280, h = 720;
  std::vector<std::array<double, 3>> triples;
  for (int j = 0; j < 18; ++j)
    triples.push_back({j % 2 ? static_cast<double>(w) : 0.0,
                       j / 2 % 2 ? static_cast<double>(h) : 0.0, 1.0});
  auto sk = ingest_openpose(keypoint_doc(triples), w, h);
  for (int j = 0; j < 18; ++j) {
    CHECK(sk.coords[2 * j] == (j % 2 ? 1.0 : -1.0));
    CHECK(sk.coords[2 * j + 1] == (j / 2 % 2 ? 1.0 : -1.0));
  }
}

TEST_CASE("ingest rejects empty detections and malformed documents") {
  CHECK_THROWS_AS(ingest_openpose(R"({"people":[]})", 640, 480), DataError);
  CHECK_THROWS_AS(ingest_openpose("not json", 640, 480), DataError);
  CHECK_THROWS_AS(ingest_openpose(R"({"nope":1})", 640, 480), DataError);
}

TEST_CASE("cleaning interpolates a single missing frame at the midpoint") {
  std::vector<Skeleton> raw(3);
  for (auto& sk : raw) sk.confidence.fill(1.0);
  raw[0].coords[0] = 0.0;
  raw[1].confidence[0] = 0.0;
  raw[2].coords[0] = 0.4f;
  auto seq = clean_sequence(raw);
  CHECK_THAT(seq.at(1, 0), Catch::Matchers::WithinAbs(0.2, 1e-6));
}

TEST_CASE("cleaning a complete sequence is the identity") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<Skeleton> raw(4);
  for (auto& sk : raw) {
    sk.confidence.fill(0.7);
    for (auto& c : sk.coords) c = d(rng);
  }
  auto seq = clean_sequence(raw);
  for (int t = 0; t < 4; ++t)
    for (int c = 0; c < kCoordsPerFrame; ++c)
      CHECK(seq.at(t, c) == static_cast<float>(raw[t].coords[c]));
}

TEST_CASE("cleaning fills a three-frame gap linearly") {
  // Hand evaluation: x goes 0.0 ... 0.8 across 4 steps -> 0.2, 0.4, 0.6.
  std::vector<Skeleton> raw(5);
  for (auto& sk : raw) sk.confidence.fill(1.0);
  raw[0].coords[0] = 0.0;
  raw[4].coords[0] = 0.8;
  for (int t = 1; t <= 3; ++t) raw[t].confidence[0] = 0.0;
  auto seq = clean_sequence(raw);
  CHECK_THAT(seq.at(1, 0), Catch::Matchers::WithinAbs(0.2, 1e-6));
  CHECK_THAT(seq.at(2, 0), Catch::Matchers::WithinAbs(0.4, 1e-6));
  CHECK_THAT(seq.at(3, 0), Catch::Matchers::WithinAbs(0.6, 1e-6));
}

TEST_CASE("boundary gaps take the nearest valid value") {
  std::vector<Skeleton> raw(4);
  for (auto& sk : raw) sk.confidence.fill(1.0);
  raw[0].confidence[2] = 0.0;
  raw[3].confidence[2] = 0.0;
  raw[1].coords[4] = 0.5;
  raw[2].coords[4] = -0.5;
  auto seq = clean_sequence(raw);
  CHECK(seq.at(0, 4) == 0.5f);
  CHECK(seq.at(3, 4) == -0.5f);
}

TEST_CASE("a joint missing everywhere is unreconstructable") {
  std::vector<Skeleton> raw(3);
  for (auto& sk : raw) sk.confidence.fill(1.0);
  for (auto& sk : raw) sk.confidence[7] = 0.0;
  CHECK_THROWS_AS(clean_sequence(raw), DataError);
}

TEST_CASE("cleaning is idempotent") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> d(-1, 1);
  std::bernoulli_distribution drop(0.3);
  std::vector<Skeleton> raw(12);
  for (auto& sk : raw) {
    sk.confidence.fill(1.0);
    for (auto& c : sk.coords) c = d(rng);
  }
  for (int j = 0; j < kJoints; ++j) {
    for (int t = 0; t < 12; ++t)
      if (drop(rng)) raw[t].confidence[j] = 0.0;
    raw[3].confidence[j] = 1.0;  // keep at least one observation
  }
  auto once = clean_sequence(raw);
  std::vector<Skeleton> again(12);
  for (int t = 0; t < 12; ++t) {
    again[t].confidence.fill(1.0);
    for (int c = 0; c < kCoordsPerFrame; ++c) again[t].coords[c] = once.at(t, c);
  }
  auto twice = clean_sequence(again);
  for (int t = 0; t < 12; ++t)
    for (int c = 0; c < kCoordsPerFrame; ++c) CHECK(twice.at(t, c) == once.at(t, c));
}

TEST_CASE("default windowing matches the brute-force stride oracle") {
  std::mt19937_64 rng(23);
  auto seq = random_sequence(50, rng);
  auto batch = window(seq, 5, 16);
  CHECK(batch.stride == 3);
  CHECK(batch.stride == oracle_max_stride(50, 5, 16));
  REQUIRE(batch.windows.size() == 16);
  for (int k = 0; k < 16; ++k) CHECK(batch.starts[k] == 3 * k);
  CHECK(batch.starts.back() + batch.window_len == 50);  // last window covers 45..49
}

TEST_CASE("single window equals the whole sequence") {
  std::mt19937_64 rng(29);
  auto seq = random_sequence(5, rng);
  auto batch = window(seq, 5, 1);
  REQUIRE(batch.windows.size() == 1);
  for (int t = 0; t < 5; ++t)
    for (int c = 0; c < kCoordsPerFrame; ++c) CHECK(batch.windows[0].at(t, c) == seq.at(t, c));
}

TEST_CASE("T=50 t=5 K=20 is feasible with stride 2") {
  // The feasibility oracle gives s=2 (5 + 19*2 = 43 <= 50; s=3 gives 62).
  std::mt19937_64 rng(31);
  auto seq = random_sequence(50, rng);
  REQUIRE(oracle_max_stride(50, 5, 20) == 2);
  auto batch = window(seq, 5, 20);
  CHECK(batch.stride == 2);
  CHECK(batch.windows.size() == 20);
}

TEST_CASE("infeasible window configurations are rejected") {
  std::mt19937_64 rng(37);
  auto seq = random_sequence(50, rng);
  CHECK(oracle_max_stride(50, 5, 50) == -1);
  CHECK_THROWS_AS(window(seq, 5, 50), ConfigError);
  CHECK_THROWS_AS(window(seq, 60, 1), ConfigError);
  CHECK_THROWS_AS(window(seq, 5, 16, 4), ConfigError);  // explicit stride too large
}

TEST_CASE("windows reconstruct the frames they cover") {
  std::mt19937_64 rng(41);
  auto seq = random_sequence(50, rng);
  auto batch = window(seq, 5, 16);
  std::vector<std::optional<float>> seen(50 * kCoordsPerFrame);
  for (size_t k = 0; k < batch.windows.size(); ++k)
    for (int t = 0; t < batch.window_len; ++t)
      for (int c = 0; c < kCoordsPerFrame; ++c) {
        int frame = batch.starts[k] + t;
        float v = batch.windows[k].at(t, c);
        auto& slot = seen[static_cast<size_t>(frame) * kCoordsPerFrame + c];
        if (slot) CHECK(*slot == v);  // overlaps agree
        slot = v;
        CHECK(v == seq.at(frame, c));
      }
  for (int frame = 0; frame < 50; ++frame)
    CHECK(seen[static_cast<size_t>(frame) * kCoordsPerFrame].has_value());
}

TEST_CASE("temporal difference of a constant sequence is zero") {
  SkeletonSequence seq(6);
  for (auto& v : seq.raw()) v = 0.37f;
  auto d = temporal_difference(seq);
  CHECK(d.frames() == 6);
  for (auto v : d.raw()) CHECK(v == 0.0f);
}

TEST_CASE("temporal difference keeps the input shape") {
  std::mt19937_64 rng(43);
  auto seq = random_sequence(50, rng);
  auto d = temporal_difference(seq);
  CHECK(d.frames() == seq.frames());
  CHECK(d.coords_per_frame() == kCoordsPerFrame);
}

TEST_CASE("temporal difference of a linear ramp is the slope everywhere") {
  SkeletonSequence seq(10);
  for (int t = 0; t < 10; ++t)
    for (int c = 0; c < kCoordsPerFrame; ++c) seq.at(t, c) = 0.05f * t;
  auto d = temporal_difference(seq);
  for (int t = 0; t < 10; ++t)
    for (int c = 0; c < kCoordsPerFrame; ++c)
      CHECK_THAT(d.at(t, c), Catch::Matchers::WithinAbs(0.05, 1e-6));
}

TEST_CASE("temporal difference rejects degenerate input") {
  SkeletonSequence seq(1);
  CHECK_THROWS_AS(temporal_difference(seq), DataError);
}

TEST_CASE("time reversal negates the reversed difference on interior frames") {
  std::mt19937_64 rng(47);
  auto seq = random_sequence(12, rng);
  SkeletonSequence rev(12);
  for (int t = 0; t < 12; ++t)
    for (int c = 0; c < kCoordsPerFrame; ++c) rev.at(t, c) = seq.at(11 - t, c);
  auto d = temporal_difference(seq);
  auto dr = temporal_difference(rev);
  for (int t = 1; t < 11; ++t)
    for (int c = 0; c < kCoordsPerFrame; ++c)
      CHECK_THAT(dr.at(t, c), Catch::Matchers::WithinAbs(-d.at(11 - t, c), 1e-5));
}

TEST_CASE("binary round trip is bit exact") {
  std::mt19937_64 rng(53);
  auto seq = random_sequence(23, rng);
  std::stringstream buf;
  save_sequence(seq, buf);
  auto back = load_sequence(buf);
  REQUIRE(back.frames() == seq.frames());
  CHECK(back.fps() == seq.fps());
  for (size_t i = 0; i < seq.raw().size(); ++i) CHECK(back.raw()[i] == seq.raw()[i]);
}

TEST_CASE("JSON round trip is bit exact") {
  std::mt19937_64 rng(59);
  auto seq = random_sequence(7, rng);
  auto path = std::filesystem::temp_directory_path() / "choreo_seq_test.json";
  save_sequence_json(seq, path);
  auto back = load_sequence(path);
  REQUIRE(back.frames() == seq.frames());
  for (size_t i = 0; i < seq.raw().size(); ++i) CHECK(back.raw()[i] == seq.raw()[i]);
  std::filesystem::remove(path);
}

TEST_CASE("binary loader rejects corrupted headers") {
  std::stringstream buf;
  buf << "NOPE";
  CHECK_THROWS_AS(load_sequence(buf), DataError);
}
