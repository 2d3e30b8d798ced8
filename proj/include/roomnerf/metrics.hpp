#pragma once

// Image-quality and depth metrics: PSNR for unit-peak RGB, SSIM on the
// grayscale channel with the standard 11x11 Gaussian window (sigma 1.5,
// k1=0.01, k2=0.03), and metric depth RMSE against ground truth.

#include <cmath>
#include <limits>
#include <vector>

#include "roomnerf/image.hpp"

namespace roomnerf {

// -10 log10(MSE) over all RGB samples; identical images report +infinity.
inline double psnr(const Image& rendered, const Image& reference) {
  require(rendered.width == reference.width && rendered.height == reference.height,
          "psnr: size mismatch ", rendered.width, "x", rendered.height, " vs ", reference.width,
          "x", reference.height);
  double sse = 0.0;
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    const double d = rendered.data[i] - reference.data[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(rendered.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<size_t>(size) * static_cast<size_t>(size));
  const int half = size / 2;
  double total = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dy = y - half, dx = x - half;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[static_cast<size_t>(y * size + x)] = v;
      total += v;
    }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace detail

// Mean local SSIM over every position where the full window fits. Inputs are
// converted to grayscale; unit dynamic range is assumed.
inline double ssim(const Image& rendered, const Image& reference) {
  require(rendered.width == reference.width && rendered.height == reference.height,
          "ssim: size mismatch ", rendered.width, "x", rendered.height, " vs ", reference.width,
          "x", reference.height);
  const int win = 11, half = win / 2;
  require(rendered.width >= win && rendered.height >= win, "ssim: image ", rendered.width, "x",
          rendered.height, " smaller than the ", win, "x", win, " window");
  const std::vector<double> w = detail::gaussian_window(win, 1.5);
  const std::vector<double> ga = to_gray(rendered);
  const std::vector<double> gb = to_gray(reference);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int64_t width = rendered.width, height = rendered.height;
  double total = 0.0;
  int64_t count = 0;
  for (int64_t cy = half; cy < height - half; ++cy)
    for (int64_t cx = half; cx < width - half; ++cx) {
      double mua = 0.0, mub = 0.0;
      for (int ky = 0; ky < win; ++ky)
        for (int kx = 0; kx < win; ++kx) {
          const double wk = w[static_cast<size_t>(ky * win + kx)];
          const size_t idx =
              static_cast<size_t>((cy + ky - half) * width + (cx + kx - half));
          mua += wk * ga[idx];
          mub += wk * gb[idx];
        }
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (int ky = 0; ky < win; ++ky)
        for (int kx = 0; kx < win; ++kx) {
          const double wk = w[static_cast<size_t>(ky * win + kx)];
          const size_t idx =
              static_cast<size_t>((cy + ky - half) * width + (cx + kx - half));
          const double da = ga[idx] - mua, db = gb[idx] - mub;
          va += wk * da * da;
          vb += wk * db * db;
          cov += wk * da * db;
        }
      total += ((2.0 * mua * mub + c1) * (2.0 * cov + c2)) /
               ((mua * mua + mub * mub + c1) * (va + vb + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

// Root mean squared depth error over pixels with valid (positive) ground
// truth.
inline double depth_rmse(const DepthMap& rendered, const DepthMap& gt) {
  require(rendered.width == gt.width && rendered.height == gt.height, "depth_rmse: size mismatch ",
          rendered.width, "x", rendered.height, " vs ", gt.width, "x", gt.height);
  double sse = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < gt.data.size(); ++i) {
    if (gt.data[i] <= 0.0) continue;
    const double d = rendered.data[i] - gt.data[i];
    sse += d * d;
    ++n;
  }
  require(n > 0, "depth_rmse: no valid ground-truth pixels");
  return std::sqrt(sse / static_cast<double>(n));
}

}  // namespace roomnerf
