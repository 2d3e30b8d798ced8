#pragma once

// Image and depth-map containers with their on-disk formats, plus the
// Laplacian-variance sharpness score used for keyframe selection.
//
// Images are RGB, values in [0,1], row-major interleaved. On disk they are
// ASCII PPM (P3) at 8 bits per channel. Depth maps are meters, row-major,
// stored as "RNDM" + u32 width + u32 height + float32 LE samples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "roomnerf/core.hpp"

namespace roomnerf {

struct Image {
  int64_t width = 0, height = 0;
  std::vector<double> data;  // height * width * 3

  Image() = default;
  Image(int64_t w, int64_t h, double fill = 0.0)
      : width(w), height(h), data(static_cast<size_t>(w * h * 3), fill) {
    require(w > 0 && h > 0, "Image: dimensions must be positive, got ", w, "x", h);
  }

  double& at(int64_t x, int64_t y, int c) {
    return data[static_cast<size_t>((y * width + x) * 3 + c)];
  }
  double at(int64_t x, int64_t y, int c) const {
    return data[static_cast<size_t>((y * width + x) * 3 + c)];
  }
};

struct DepthMap {
  int64_t width = 0, height = 0;
  std::vector<double> data;  // height * width, 0 marks invalid where applicable

  DepthMap() = default;
  DepthMap(int64_t w, int64_t h, double fill = 0.0)
      : width(w), height(h), data(static_cast<size_t>(w * h), fill) {
    require(w > 0 && h > 0, "DepthMap: dimensions must be positive, got ", w, "x", h);
  }

  double& at(int64_t x, int64_t y) { return data[static_cast<size_t>(y * width + x)]; }
  double at(int64_t x, int64_t y) const { return data[static_cast<size_t>(y * width + x)]; }

  int64_t valid_count() const {
    int64_t n = 0;
    for (double v : data) n += v > 0.0 ? 1 : 0;
    return n;
  }
};

inline uint8_t quantize8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

// Round-trips every channel through 8 bits, matching what save+load would do.
inline Image quantize_image(const Image& img) {
  Image out = img;
  for (double& v : out.data) v = quantize8(v) / 255.0;
  return out;
}

inline void save_ppm(const Image& img, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "save_ppm: cannot open '", path, "'");
  os << "P3\n" << img.width << " " << img.height << "\n255\n";
  for (int64_t y = 0; y < img.height; ++y) {
    for (int64_t x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        os << static_cast<int>(quantize8(img.at(x, y, c)));
        os << (c == 2 && x == img.width - 1 ? '\n' : ' ');
      }
    }
  }
  require(static_cast<bool>(os), "save_ppm: write failed for '", path, "'");
}

inline Image load_ppm(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "load_ppm: cannot open '", path, "'");
  std::string magic;
  is >> magic;
  require(magic == "P3", "load_ppm: '", path, "' is not ASCII PPM (magic '", magic, "')");
  int64_t w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  require(is && w > 0 && h > 0, "load_ppm: bad dimensions in '", path, "'");
  require(maxval == 255, "load_ppm: only 8-bit images supported, got maxval ", maxval);
  Image img(w, h);
  for (size_t i = 0; i < img.data.size(); ++i) {
    int v;
    is >> v;
    require(static_cast<bool>(is), "load_ppm: truncated pixel data in '", path, "'");
    require(v >= 0 && v <= 255, "load_ppm: sample ", v, " out of range in '", path, "'");
    img.data[i] = v / 255.0;
  }
  return img;
}

inline constexpr char kDepthMagic[4] = {'R', 'N', 'D', 'M'};

inline void save_depth(const DepthMap& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "save_depth: cannot open '", path, "'");
  os.write(kDepthMagic, 4);
  const uint32_t w = static_cast<uint32_t>(d.width), h = static_cast<uint32_t>(d.height);
  os.write(reinterpret_cast<const char*>(&w), 4);
  os.write(reinterpret_cast<const char*>(&h), 4);
  std::vector<float> buf(d.data.begin(), d.data.end());
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  require(static_cast<bool>(os), "save_depth: write failed for '", path, "'");
}

inline DepthMap load_depth(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "load_depth: cannot open '", path, "'");
  char magic[4];
  is.read(magic, 4);
  require(static_cast<bool>(is) && std::equal(magic, magic + 4, kDepthMagic),
          "load_depth: '", path, "' is not a depth map (bad magic)");
  uint32_t w = 0, h = 0;
  is.read(reinterpret_cast<char*>(&w), 4);
  is.read(reinterpret_cast<char*>(&h), 4);
  require(static_cast<bool>(is) && w > 0 && h > 0, "load_depth: bad dimensions in '", path,
          "'");
  DepthMap d(w, h);
  std::vector<float> buf(static_cast<size_t>(w) * h);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  require(static_cast<bool>(is), "load_depth: truncated data in '", path, "'");
  std::copy(buf.begin(), buf.end(), d.data.begin());
  return d;
}

inline double luminance(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

inline std::vector<double> to_gray(const Image& img) {
  std::vector<double> g(static_cast<size_t>(img.width * img.height));
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      g[static_cast<size_t>(y * img.width + x)] =
          luminance(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
  return g;
}

// Variance of the 3x3 discrete Laplacian response over the valid interior.
// Higher means sharper; a constant image scores exactly zero.
inline double sharpness_score(const Image& img) {
  require(img.width >= 3 && img.height >= 3, "sharpness_score: image ", img.width, "x",
          img.height, " smaller than the 3x3 kernel");
  const std::vector<double> g = to_gray(img);
  const int64_t w = img.width, h = img.height;
  std::vector<double> resp;
  resp.reserve(static_cast<size_t>((w - 2) * (h - 2)));
  for (int64_t y = 1; y + 1 < h; ++y)
    for (int64_t x = 1; x + 1 < w; ++x) {
      const double v = g[static_cast<size_t>(y * w + x)];
      const double lap = g[static_cast<size_t>((y - 1) * w + x)] +
                         g[static_cast<size_t>((y + 1) * w + x)] +
                         g[static_cast<size_t>(y * w + x - 1)] +
                         g[static_cast<size_t>(y * w + x + 1)] - 4.0 * v;
      resp.push_back(lap);
    }
  double mean = 0.0;
  for (double v : resp) mean += v;
  mean /= static_cast<double>(resp.size());
  double var = 0.0;
  for (double v : resp) var += (v - mean) * (v - mean);
  return var / static_cast<double>(resp.size());
}

// One index per full window of n consecutive frames: the sharpest frame,
// earliest index winning ties. A trailing partial window contributes nothing.
inline std::vector<size_t> select_sharpest(const std::vector<Image>& frames, int n) {
  require(n >= 1, "select_sharpest: window must be >= 1, got ", n);
  std::vector<size_t> picked;
  const size_t windows = frames.size() / static_cast<size_t>(n);
  for (size_t w = 0; w < windows; ++w) {
    size_t best = w * static_cast<size_t>(n);
    double best_score = sharpness_score(frames[best]);
    for (size_t i = 1; i < static_cast<size_t>(n); ++i) {
      const size_t idx = w * static_cast<size_t>(n) + i;
      const double s = sharpness_score(frames[idx]);
      if (s > best_score) {
        best = idx;
        best_score = s;
      }
    }
    picked.push_back(best);
  }
  return picked;
}

// Blue -> yellow -> red ramp for error visualizations; input in [0,1].
inline void error_color(double t, double& r, double& g, double& b) {
  t = std::clamp(t, 0.0, 1.0);
  if (t < 0.5) {
    const double u = t * 2.0;
    r = u;
    g = u;
    b = 1.0 - u;
  } else {
    const double u = (t - 0.5) * 2.0;
    r = 1.0;
    g = 1.0 - u;
    b = 0.0;
  }
}

inline Image error_heatmap(const DepthMap& err, double scale) {
  require(scale > 0.0, "error_heatmap: scale must be positive");
  Image img(err.width, err.height);
  for (int64_t y = 0; y < err.height; ++y)
    for (int64_t x = 0; x < err.width; ++x) {
      double r, g, b;
      error_color(std::abs(err.at(x, y)) / scale, r, g, b);
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  return img;
}

}  // namespace roomnerf
