#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>

#include "choreo/audio.hpp"
#include "choreo/binio.hpp"

using namespace choreo;

namespace {

// Test-side WAV writer; independent of save_wav so the reader is checked
// against a second implementation.
void write_wav(std::ostream& os, const std::vector<std::vector<double>>& channels, int rate,
               bool float32) {
  auto nch = static_cast<uint16_t>(channels.size());
  auto n = static_cast<uint32_t>(channels[0].size());
  uint16_t bytes_per = float32 ? 4 : 2;
  uint32_t data_size = n * nch * bytes_per;
  binio::write_magic(os, "RIFF");
  binio::write_le<uint32_t>(os, 36 + data_size);
  binio::write_magic(os, "WAVE");
  binio::write_magic(os, "fmt ");
  binio::write_le<uint32_t>(os, 16);
  binio::write_le<uint16_t>(os, float32 ? 3 : 1);
  binio::write_le<uint16_t>(os, nch);
  binio::write_le<uint32_t>(os, static_cast<uint32_t>(rate));
  binio::write_le<uint32_t>(os, static_cast<uint32_t>(rate) * nch * bytes_per);
  binio::write_le<uint16_t>(os, static_cast<uint16_t>(nch * bytes_per));
  binio::write_le<uint16_t>(os, static_cast<uint16_t>(8 * bytes_per));
  binio::write_magic(os, "data");
  binio::write_le<uint32_t>(os, data_size);
  for (uint32_t i = 0; i < n; ++i)
    for (const auto& ch : channels) {
      if (float32)
        binio::write_le<float>(os, static_cast<float>(ch[i]));
      else
        binio::write_le<int16_t>(os, static_cast<int16_t>(std::lround(ch[i] * 32767)));
    }
}

}  // namespace

TEST_CASE("stereo 44.1 kHz five-second file becomes 80000 mono samples") {
  // 220500 * 16000 / 44100 = 80000 by the resampler length rule.
  int rate = 44100;
  size_t n = 5 * static_cast<size_t>(rate);
  std::vector<double> left(n), right(n);
  for (size_t i = 0; i < n; ++i) {
    left[i] = 0.4 * std::sin(2 * M_PI * 440.0 * i / rate);
    right[i] = 0.4 * std::sin(2 * M_PI * 554.0 * i / rate);
  }
  std::stringstream buf;
  write_wav(buf, {left, right}, rate, false);
  auto clip = load_audio(buf);
  CHECK(clip.sample_rate == 16000);
  CHECK(clip.samples.size() == 80000);
}

TEST_CASE("16 kHz mono input passes through unchanged") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  std::vector<double> samples(32000);
  for (auto& s : samples) s = d(rng);
  std::stringstream buf;
  write_wav(buf, {samples}, 16000, true);
  auto clip = load_audio(buf);
  REQUIRE(clip.samples.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i)
    CHECK_THAT(clip.samples[i], Catch::Matchers::WithinAbs(samples[i], 1e-6));
}

TEST_CASE("silence stays silent") {
  std::vector<double> samples(16000, 0.0);
  std::stringstream buf;
  write_wav(buf, {samples}, 16000, false);
  auto clip = load_audio(buf);
  for (double s : clip.samples) CHECK(s == 0.0);
}

TEST_CASE("hot float input is rescaled so the peak is at most one") {
  std::vector<double> samples(8000);
  for (size_t i = 0; i < samples.size(); ++i)
    samples[i] = 1.8 * std::sin(2 * M_PI * 220.0 * i / 16000.0);
  std::stringstream buf;
  write_wav(buf, {samples}, 16000, true);
  auto clip = load_audio(buf);
  double peak = 0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  CHECK(peak <= 1.0);
  CHECK(peak > 0.9);
}

TEST_CASE("non-wav input is rejected") {
  std::stringstream buf;
  buf << "MP3 junk bytes";
  CHECK_THROWS_AS(load_audio(buf), DataError);
}

TEST_CASE("80000 samples slice into a 50-piece batch") {
  AudioClip clip;
  clip.samples.assign(80000, 0.25);
  auto batch = slice_pieces(clip, 50);
  CHECK(batch.pieces == 50);
  CHECK(batch.samples.size() == 50u * 1600u);
}

TEST_CASE("a single piece equals the clip") {
  std::mt19937_64 rng(7);
  AudioClip clip;
  clip.samples.resize(1600);
  std::uniform_real_distribution<double> d(-1, 1);
  for (auto& s : clip.samples) s = d(rng);
  auto batch = slice_pieces(clip, 1);
  for (int i = 0; i < 1600; ++i) CHECK(batch.samples[i] == clip.samples[i]);
}

TEST_CASE("1599 samples cannot make one piece") {
  AudioClip clip;
  clip.samples.assign(1599, 0.0);
  CHECK_THROWS_AS(slice_pieces(clip, 1), DataError);
}

TEST_CASE("slicing then flattening reproduces the clip prefix bit-exactly") {
  std::mt19937_64 rng(11);
  AudioClip clip;
  clip.samples.resize(7 * 1600 + 123);
  std::uniform_real_distribution<double> d(-1, 1);
  for (auto& s : clip.samples) s = d(rng);
  auto batch = slice_pieces(clip, 7);
  REQUIRE(batch.samples.size() == 7u * 1600u);
  for (size_t i = 0; i < batch.samples.size(); ++i) CHECK(batch.samples[i] == clip.samples[i]);
}

TEST_CASE("own wav writer round-trips through the loader") {
  std::mt19937_64 rng(13);
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.resize(4800);
  std::uniform_real_distribution<double> d(-0.9, 0.9);
  for (auto& s : clip.samples) s = d(rng);
  auto path = std::filesystem::temp_directory_path() / "choreo_audio_test.wav";
  save_wav(clip, path);
  auto back = load_audio(path);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (size_t i = 0; i < clip.samples.size(); ++i)
    CHECK_THAT(back.samples[i], Catch::Matchers::WithinAbs(clip.samples[i], 1.0 / 32000));
  std::filesystem::remove(path);
}
