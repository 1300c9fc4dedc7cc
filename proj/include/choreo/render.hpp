#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "choreo/error.hpp"
#include "choreo/skeleton.hpp"

namespace choreo {

struct RenderSpec {
  int canvas = 512;                                 // square canvas, pixels
  std::vector<std::pair<int, int>> bones = coco_bones();
  int stroke = 3;                                   // bone width / joint radius px
  double fps = kFps;

  void validate() const {
    if (canvas < 16) throw ConfigError("render: canvas too small");
    if (stroke < 1) throw ConfigError("render: stroke must be positive");
    for (auto [a, b] : bones)
      if (a < 0 || a >= kJoints || b < 0 || b >= kJoints)
        throw ConfigError("render: bone references joint outside 0..17");
  }
};

struct Image {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || x >= width || y < 0 || y >= height) return;
    auto i = 3 * (static_cast<size_t>(y) * width + x);
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
};

inline void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write image " + path.string());
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()),
           static_cast<std::streamsize>(img.rgb.size()));
}

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P6") throw DataError("not a P6 ppm file");
  int w, h, maxv;
  is >> w >> h >> maxv;
  is.get();
  Image img{w, h, std::vector<uint8_t>(static_cast<size_t>(w) * h * 3)};
  is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!is) throw DataError("truncated ppm file");
  return img;
}

// Normalized [-1,1] coordinate to pixel, the inverse of the ingest map.
inline int denormalize(double v, int extent) {
  return static_cast<int>(std::lround((v + 1.0) * extent / 2.0));
}

namespace detail {

inline void fill_disc(Image& img, int cx, int cy, int radius, uint8_t r, uint8_t g, uint8_t b) {
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) img.set(cx + dx, cy + dy, r, g, b);
}

inline void draw_segment(Image& img, int x0, int y0, int x1, int y1, int width) {
  int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
  for (int i = 0; i <= steps; ++i) {
    double t = static_cast<double>(i) / steps;
    int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    fill_disc(img, x, y, width / 2, 230, 230, 230);
  }
}

}  // namespace detail

// Joint palette: distinct hues so overlapping limbs stay readable.
inline std::array<std::array<uint8_t, 3>, kJoints> joint_palette() {
  std::array<std::array<uint8_t, 3>, kJoints> p{};
  for (int j = 0; j < kJoints; ++j) {
    double h = 2 * M_PI * j / kJoints;
    p[static_cast<size_t>(j)] = {static_cast<uint8_t>(128 + 127 * std::sin(h)),
                                 static_cast<uint8_t>(128 + 127 * std::sin(h + 2.094)),
                                 static_cast<uint8_t>(128 + 127 * std::sin(h + 4.189))};
  }
  return p;
}

inline Image render_frame(const SkeletonSequence& seq, int frame, const RenderSpec& spec) {
  spec.validate();
  Image img{spec.canvas, spec.canvas,
            std::vector<uint8_t>(static_cast<size_t>(spec.canvas) * spec.canvas * 3, 0)};
  auto px = [&](int joint) {
    return std::pair<int, int>{denormalize(seq.x(frame, joint), spec.canvas),
                               denormalize(seq.y(frame, joint), spec.canvas)};
  };
  for (auto [a, b] : spec.bones) {
    auto [x0, y0] = px(a);
    auto [x1, y1] = px(b);
    detail::draw_segment(img, x0, y0, x1, y1, spec.stroke);
  }
  auto palette = joint_palette();
  for (int j = 0; j < kJoints; ++j) {
    auto [x, y] = px(j);
    auto [r, g, b] = palette[static_cast<size_t>(j)];
    detail::fill_disc(img, x, y, spec.stroke, r, g, b);
  }
  return img;
}

// One raster image per frame: frame_000000.ppm, frame_000001.ppm, ...
inline std::vector<std::filesystem::path> render_frames(const SkeletonSequence& seq,
                                                        const std::filesystem::path& out_dir,
                                                        const RenderSpec& spec) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir))
    throw DataError("cannot create output directory " + out_dir.string());
  std::vector<std::filesystem::path> files;
  for (int t = 0; t < seq.frames(); ++t) {
    std::ostringstream name;
    name << "frame_" << std::setw(6) << std::setfill('0') << t << ".ppm";
    auto path = out_dir / name.str();
    write_ppm(render_frame(seq, t, spec), path);
    files.push_back(path);
  }
  return files;
}

}  // namespace choreo
