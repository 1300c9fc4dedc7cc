#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "choreo/binio.hpp"
#include "choreo/error.hpp"

namespace choreo {

inline constexpr int kSampleRate = 16000;
inline constexpr double kPieceSeconds = 0.1;
inline constexpr int kPieceSamples = 1600;  // 0.1 s at 16 kHz

struct AudioClip {
  std::vector<double> samples;  // mono, [-1, 1]
  int sample_rate = kSampleRate;

  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
  int whole_pieces() const { return static_cast<int>(samples.size()) / kPieceSamples; }
};

// T non-overlapping 0.1-second pieces; concatenated they reproduce the
// first T*1600 samples of the clip exactly.
struct MusicPieceBatch {
  int pieces = 0;
  std::vector<double> samples;  // pieces * 1600, piece-major

  const double* piece(int i) const { return samples.data() + static_cast<size_t>(i) * kPieceSamples; }
};

// ---- waveform files ----

namespace detail {

struct WavData {
  int channels = 0;
  int sample_rate = 0;
  std::vector<double> interleaved;
};

inline WavData read_wav(std::istream& is) {
  if (binio::read_magic(is) != "RIFF") throw DataError("not a RIFF file");
  binio::read_le<uint32_t>(is);  // riff size
  if (binio::read_magic(is) != "WAVE") throw DataError("not a WAVE file");
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  WavData out;
  while (is && is.peek() != EOF) {
    std::string chunk = binio::read_magic(is);
    uint32_t size = binio::read_le<uint32_t>(is);
    if (chunk == "fmt ") {
      format = binio::read_le<uint16_t>(is);
      channels = binio::read_le<uint16_t>(is);
      rate = binio::read_le<uint32_t>(is);
      binio::read_le<uint32_t>(is);  // byte rate
      binio::read_le<uint16_t>(is);  // block align
      bits = binio::read_le<uint16_t>(is);
      if (size > 16) is.ignore(size - 16);
      have_fmt = true;
    } else if (chunk == "data") {
      if (!have_fmt) throw DataError("wav data chunk before fmt chunk");
      if (channels < 1 || channels > 2)
        throw DataError("unsupported channel count " + std::to_string(channels));
      uint32_t n;
      if (format == 1 && bits == 16) {
        n = size / 2;
        out.interleaved.resize(n);
        for (uint32_t i = 0; i < n; ++i)
          out.interleaved[i] = binio::read_le<int16_t>(is) / 32768.0;
      } else if (format == 3 && bits == 32) {
        n = size / 4;
        out.interleaved.resize(n);
        for (uint32_t i = 0; i < n; ++i) out.interleaved[i] = binio::read_le<float>(is);
      } else {
        throw DataError("unsupported wav encoding (format " + std::to_string(format) + ", " +
                        std::to_string(bits) + " bit); convert to 16-bit PCM or float32");
      }
      out.channels = channels;
      out.sample_rate = static_cast<int>(rate);
      return out;
    } else {
      is.ignore(size + (size & 1));  // chunks are word-aligned
    }
  }
  throw DataError("wav file has no data chunk");
}

}  // namespace detail

// Linear-interpolation resampler; output sample i is taken at source time
// i * src_rate / dst_rate.
inline std::vector<double> resample_linear(const std::vector<double>& in, int src_rate,
                                           int dst_rate) {
  if (src_rate == dst_rate || in.empty()) return in;
  auto n_out = static_cast<size_t>(
      std::llround(static_cast<double>(in.size()) * dst_rate / src_rate));
  std::vector<double> out(n_out);
  double step = static_cast<double>(src_rate) / dst_rate;
  for (size_t i = 0; i < n_out; ++i) {
    double pos = i * step;
    auto lo = static_cast<size_t>(pos);
    if (lo >= in.size() - 1) {
      out[i] = in.back();
      continue;
    }
    double w = pos - lo;
    out[i] = (1.0 - w) * in[lo] + w * in[lo + 1];
  }
  return out;
}

// Loads a PCM waveform file: downmix to mono by channel mean, resample to
// 16 kHz, rescale so the peak does not exceed 1.
inline AudioClip load_audio(std::istream& is) {
  auto wav = detail::read_wav(is);
  std::vector<double> mono;
  if (wav.channels == 1) {
    mono = std::move(wav.interleaved);
  } else {
    mono.resize(wav.interleaved.size() / 2);
    for (size_t i = 0; i < mono.size(); ++i)
      mono[i] = 0.5 * (wav.interleaved[2 * i] + wav.interleaved[2 * i + 1]);
  }
  AudioClip clip;
  clip.sample_rate = kSampleRate;
  clip.samples = resample_linear(mono, wav.sample_rate, kSampleRate);
  double peak = 0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0)
    for (double& s : clip.samples) s /= peak;
  return clip;
}

inline AudioClip load_audio(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open audio file " + path.string());
  return load_audio(is);
}

inline void save_wav(const AudioClip& clip, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write audio file " + path.string());
  auto n = static_cast<uint32_t>(clip.samples.size());
  binio::write_magic(os, "RIFF");
  binio::write_le<uint32_t>(os, 36 + 2 * n);
  binio::write_magic(os, "WAVE");
  binio::write_magic(os, "fmt ");
  binio::write_le<uint32_t>(os, 16);
  binio::write_le<uint16_t>(os, 1);  // PCM
  binio::write_le<uint16_t>(os, 1);  // mono
  binio::write_le<uint32_t>(os, static_cast<uint32_t>(clip.sample_rate));
  binio::write_le<uint32_t>(os, static_cast<uint32_t>(clip.sample_rate) * 2);
  binio::write_le<uint16_t>(os, 2);
  binio::write_le<uint16_t>(os, 16);
  binio::write_magic(os, "data");
  binio::write_le<uint32_t>(os, 2 * n);
  for (double s : clip.samples) {
    long q = std::lround(std::clamp(s, -1.0, 1.0) * 32768.0);
    binio::write_le<int16_t>(os, static_cast<int16_t>(std::clamp(q, -32768L, 32767L)));
  }
}

// ---- piece slicing ----

// First `pieces` contiguous 0.1 s pieces; excess audio is trimmed from the end.
inline MusicPieceBatch slice_pieces(const AudioClip& clip, int pieces) {
  if (pieces < 1) throw ConfigError("slice_pieces: piece count must be positive");
  if (clip.sample_rate != kSampleRate)
    throw ConfigError("slice_pieces: clip must be at 16 kHz");
  auto needed = static_cast<size_t>(pieces) * kPieceSamples;
  if (clip.samples.size() < needed)
    throw DataError("insufficient audio: " + std::to_string(clip.samples.size()) +
                    " samples, need " + std::to_string(needed));
  MusicPieceBatch batch;
  batch.pieces = pieces;
  batch.samples.assign(clip.samples.begin(),
                       clip.samples.begin() + static_cast<std::ptrdiff_t>(needed));
  return batch;
}

}  // namespace choreo
