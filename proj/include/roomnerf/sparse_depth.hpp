#pragma once

// Simulation of SfM-like sparse depth. Feature-plausible pixels are picked at
// gradient-magnitude local maxima, their sensor depths are perturbed once with
// depth-dependent Gaussian noise (or replaced by a uniform outlier), the
// resulting 3D points are projected into every view that sees them, and the
// per-view hit lists are thinned to a target density.
//
// Depths follow the project-wide convention: Euclidean distance from the
// camera center (see camera.hpp). A world point therefore reprojects with
// exactly consistent depth in every view.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "roomnerf/camera.hpp"
#include "roomnerf/image.hpp"
#include "roomnerf/rng.hpp"

namespace roomnerf {

// ---------------------------------------------------------------------------
// keypoints

struct Pixel {
  int64_t x = 0, y = 0;
};

// Local maxima of forward-difference gradient magnitude, strongest first,
// capped at `budget`. Forward differences (not central) so an isolated bright
// pixel is itself a maximum. Deterministic: ties break toward smaller scan
// index.
inline std::vector<Pixel> detect_keypoints(const Image& img, int64_t budget) {
  require(budget >= 0, "detect_keypoints: negative budget");
  if (budget == 0) return {};
  const int64_t w = img.width, h = img.height;
  const std::vector<double> g = to_gray(img);
  std::vector<double> mag(static_cast<size_t>(w * h), 0.0);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double gx = x + 1 < w ? g[static_cast<size_t>(y * w + x + 1)] - g[static_cast<size_t>(y * w + x)] : 0.0;
      const double gy = y + 1 < h ? g[static_cast<size_t>((y + 1) * w + x)] - g[static_cast<size_t>(y * w + x)] : 0.0;
      mag[static_cast<size_t>(y * w + x)] = std::sqrt(gx * gx + gy * gy);
    }
  struct Cand {
    double m;
    int64_t x, y;
  };
  std::vector<Cand> cands;
  constexpr double kMinMag = 1e-9;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double m = mag[static_cast<size_t>(y * w + x)];
      if (m <= kMinMag) continue;
      bool is_max = true;
      for (int64_t dy = -1; dy <= 1 && is_max; ++dy)
        for (int64_t dx = -1; dx <= 1 && is_max; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int64_t nx = x + dx, ny = y + dy;
          if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
          if (mag[static_cast<size_t>(ny * w + nx)] > m) is_max = false;
          // equal neighbors: the earlier pixel in scan order wins
          if (mag[static_cast<size_t>(ny * w + nx)] == m && (ny * w + nx) < (y * w + x))
            is_max = false;
        }
      if (is_max) cands.push_back({m, x, y});
    }
  std::sort(cands.begin(), cands.end(), [w](const Cand& a, const Cand& b) {
    if (a.m != b.m) return a.m > b.m;
    return a.y * w + a.x < b.y * w + b.x;
  });
  if (static_cast<int64_t>(cands.size()) > budget) cands.resize(static_cast<size_t>(budget));
  std::vector<Pixel> out;
  out.reserve(cands.size());
  for (const Cand& c : cands) out.push_back({c.x, c.y});
  return out;
}

// ---------------------------------------------------------------------------
// noise model

// Standard deviation of simulated SfM depth error as a polynomial in depth:
// s(z) = a0 + a1 z + a2 z^2.
struct NoiseModel {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0;

  double stddev(double z) const { return a0 + a1 * z + a2 * z * z; }
};

// Depth-increasing default used by the simulator; roughly 1 cm at contact
// plus 2 cm per meter of range.
inline constexpr NoiseModel kDefaultNoise{0.01, 0.02, 0.0};

// Bins (z_true, z_observed) pairs by true depth, takes the per-bin standard
// deviation of the error, and least-squares fits the polynomial through the
// bin centers weighted by bin population.
inline NoiseModel fit_noise_model(const std::vector<std::pair<double, double>>& pairs,
                                  int bins = 12) {
  require(bins >= 3, "fit_noise_model: need at least 3 bins");
  require(!pairs.empty(), "fit_noise_model: no samples");
  double zmin = pairs[0].first, zmax = pairs[0].first;
  for (const auto& [zt, zo] : pairs) {
    zmin = std::min(zmin, zt);
    zmax = std::max(zmax, zt);
  }
  require(zmax > zmin, "fit_noise_model: all samples at the same depth; cannot fit a "
                       "depth-dependent model");
  const double span = zmax - zmin;
  std::vector<double> sum(static_cast<size_t>(bins), 0.0), sum2(static_cast<size_t>(bins), 0.0);
  std::vector<int64_t> count(static_cast<size_t>(bins), 0);
  for (const auto& [zt, zo] : pairs) {
    int b = static_cast<int>((zt - zmin) / span * bins);
    b = std::clamp(b, 0, bins - 1);
    const double e = zo - zt;
    sum[static_cast<size_t>(b)] += e;
    sum2[static_cast<size_t>(b)] += e * e;
    count[static_cast<size_t>(b)]++;
  }
  // weighted normal equations for s(z) = a0 + a1 z + a2 z^2; each bin's
  // std estimate has variance ~ s^2 / (2n), so weight by its inverse —
  // without this the noisy far-depth bins dominate and the collinear
  // coefficients trade off badly
  double m[3][3] = {};
  double rhs[3] = {};
  int populated = 0;
  for (int b = 0; b < bins; ++b) {
    const int64_t n = count[static_cast<size_t>(b)];
    if (n < 2) continue;
    ++populated;
    const double mean = sum[static_cast<size_t>(b)] / static_cast<double>(n);
    const double var =
        std::max(0.0, sum2[static_cast<size_t>(b)] / static_cast<double>(n) - mean * mean);
    const double s = std::sqrt(var);
    const double z = zmin + (b + 0.5) * span / bins;
    const double wgt = 2.0 * static_cast<double>(n) / std::max(s * s, 1e-8);
    const double basis[3] = {1.0, z, z * z};
    for (int i = 0; i < 3; ++i) {
      rhs[i] += wgt * basis[i] * s;
      for (int j = 0; j < 3; ++j) m[i][j] += wgt * basis[i] * basis[j];
    }
  }
  require(populated >= 3, "fit_noise_model: only ", populated,
          " depth bins populated; need at least 3");
  // 3x3 Gaussian elimination with partial pivoting
  double a[3][4];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) a[i][j] = m[i][j];
    a[i][3] = rhs[i];
  }
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    for (int j = 0; j < 4; ++j) std::swap(a[col][j], a[piv][j]);
    require(std::abs(a[col][col]) > 1e-12,
            "fit_noise_model: degenerate design matrix (depths too clustered)");
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int j = col; j < 4; ++j) a[r][j] -= f * a[col][j];
    }
  }
  return {a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]};
}

// ---------------------------------------------------------------------------
// perturb-and-project

struct SparsePoint {
  int view = 0;  // view the keypoint was detected in
  int64_t px = 0, py = 0;
  double z_true = 0.0;
  double z = 0.0;  // perturbed (or outlier) depth actually used
  Vec3 world;      // backprojected with the perturbed depth
  bool outlier = false;
};

// One deposit of a world point into a view, with continuous pixel
// coordinates; the grid map rounds these to the nearest pixel.
struct SparseObservation {
  int point_id = 0;
  int view = 0;
  double px = 0.0, py = 0.0;
  double depth = 0.0;
};

struct SparseConfig {
  double density = 0.0004;     // target fraction of valid pixels, averaged over views
  double outlier_rate = 0.02;  // fraction of points replaced by uniform depth
  double t_near = 0.05;
  double t_far = 10.0;
  double occlusion_tol = 0.01;   // fractional depth slack for the visibility z-test
  int64_t keypoint_budget = 0;   // per view; 0 picks one from the density target
};

struct SparseResult {
  std::vector<DepthMap> maps;
  std::vector<SparsePoint> points;
  std::vector<std::vector<SparseObservation>> observations;  // per view, post-thinning
  double achieved_density = 0.0;
  bool density_reached = true;
};

inline SparseResult perturb_and_project(const std::vector<CameraRecord>& views,
                                        const std::vector<DepthMap>& gt_depth,
                                        const std::vector<std::vector<Pixel>>& keypoints,
                                        const NoiseModel& model, uint64_t seed,
                                        const SparseConfig& cfg) {
  const size_t n_views = views.size();
  require(n_views > 0, "perturb_and_project: no views");
  require(gt_depth.size() == n_views && keypoints.size() == n_views,
          "perturb_and_project: views/depths/keypoints size mismatch (", n_views, "/",
          gt_depth.size(), "/", keypoints.size(), ")");
  require(cfg.density > 0.0 && cfg.density < 1.0, "perturb_and_project: density ",
          cfg.density, " outside (0,1)");
  require(cfg.outlier_rate >= 0.0 && cfg.outlier_rate <= 1.0,
          "perturb_and_project: outlier rate ", cfg.outlier_rate, " outside [0,1]");

  Rng rng(derive_seed(seed, 0x5FA45E));
  SparseResult res;

  // Perturb every keypoint once and lift it to a world point.
  for (size_t vi = 0; vi < n_views; ++vi) {
    const auto& cam = views[vi];
    for (const Pixel& kp : keypoints[vi]) {
      require(kp.x >= 0 && kp.x < cam.intrinsics.width && kp.y >= 0 &&
                  kp.y < cam.intrinsics.height,
              "perturb_and_project: keypoint (", kp.x, ",", kp.y, ") outside view ", vi);
      SparsePoint pt;
      pt.view = static_cast<int>(vi);
      pt.px = kp.x;
      pt.py = kp.y;
      pt.z_true = gt_depth[vi].at(kp.x, kp.y);
      if (pt.z_true <= 0.0) continue;  // no sensor depth here
      if (rng.uniform() < cfg.outlier_rate) {
        pt.outlier = true;
        pt.z = rng.uniform(cfg.t_near, cfg.t_far);
      } else {
        const double s = model.stddev(pt.z_true);
        require(s >= 0.0, "perturb_and_project: noise model negative (", s, ") at depth ",
                pt.z_true);
        pt.z = s > 0.0 ? pt.z_true + rng.normal(0.0, s) : pt.z_true;
        if (pt.z < cfg.t_near) pt.z = cfg.t_near;
      }
      const Ray ray = pixel_ray(cam.intrinsics, cam.pose, static_cast<double>(kp.x),
                                static_cast<double>(kp.y), cfg.t_near, cfg.t_far);
      pt.world = ray.origin + ray.direction * pt.z;
      res.points.push_back(pt);
    }
  }

  // Project every world point into every view. The detection view skips the
  // occlusion z-test: the perturbed depth disagrees with the surface there by
  // construction, and dropping those would censor the noise distribution.
  std::vector<std::vector<SparseObservation>> raw(n_views);
  for (size_t pid = 0; pid < res.points.size(); ++pid) {
    const SparsePoint& pt = res.points[pid];
    for (size_t vi = 0; vi < n_views; ++vi) {
      const auto& cam = views[vi];
      const auto proj = project_point(cam.intrinsics, cam.pose, pt.world);
      if (!proj || !proj->in_image) continue;
      if (proj->depth < cfg.t_near || proj->depth > cfg.t_far) continue;
      const auto rx = static_cast<int64_t>(std::lround(proj->px));
      const auto ry = static_cast<int64_t>(std::lround(proj->py));
      if (rx < 0 || rx >= cam.intrinsics.width || ry < 0 || ry >= cam.intrinsics.height)
        continue;
      if (static_cast<int>(vi) != pt.view) {
        const double gt = gt_depth[vi].at(rx, ry);
        if (gt <= 0.0) continue;
        if (proj->depth > gt * (1.0 + cfg.occlusion_tol)) continue;  // occluded
      }
      raw[vi].push_back({static_cast<int>(pid), static_cast<int>(vi), proj->px, proj->py,
                         proj->depth});
    }
  }

  // Split the total target count across views (handles sub-pixel per-view
  // targets at very low densities).
  const int64_t w = views[0].intrinsics.width, h = views[0].intrinsics.height;
  const int64_t total_target = std::max<int64_t>(
      1, std::llround(cfg.density * static_cast<double>(w * h) * static_cast<double>(n_views)));
  std::vector<int64_t> target(n_views, total_target / static_cast<int64_t>(n_views));
  {
    int64_t rem = total_target % static_cast<int64_t>(n_views);
    std::vector<size_t> order(n_views);
    for (size_t i = 0; i < n_views; ++i) order[i] = i;
    for (size_t i = n_views; i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (int64_t i = 0; i < rem; ++i) target[order[static_cast<size_t>(i)]]++;
  }

  res.maps.reserve(n_views);
  res.observations.resize(n_views);
  int64_t total_valid = 0;
  for (size_t vi = 0; vi < n_views; ++vi) {
    // z-buffer per rounded pixel: the nearest deposit wins
    std::vector<int> slot(static_cast<size_t>(w * h), -1);
    for (size_t oi = 0; oi < raw[vi].size(); ++oi) {
      const auto& ob = raw[vi][oi];
      const auto rx = static_cast<int64_t>(std::lround(ob.px));
      const auto ry = static_cast<int64_t>(std::lround(ob.py));
      int& s = slot[static_cast<size_t>(ry * w + rx)];
      if (s < 0 || ob.depth < raw[vi][static_cast<size_t>(s)].depth)
        s = static_cast<int>(oi);
    }
    std::vector<int> kept;
    for (int64_t i = 0; i < w * h; ++i)
      if (slot[static_cast<size_t>(i)] >= 0) kept.push_back(slot[static_cast<size_t>(i)]);
    // thin to the per-view target with a seeded shuffle
    if (static_cast<int64_t>(kept.size()) > target[vi]) {
      for (size_t i = kept.size(); i > 1; --i)
        std::swap(kept[i - 1], kept[rng.uniform_index(i)]);
      kept.resize(static_cast<size_t>(target[vi]));
      std::sort(kept.begin(), kept.end());
    }
    DepthMap map(w, h);
    for (int oi : kept) {
      const auto& ob = raw[vi][static_cast<size_t>(oi)];
      map.at(static_cast<int64_t>(std::lround(ob.px)), static_cast<int64_t>(std::lround(ob.py))) =
          ob.depth;
      res.observations[vi].push_back(ob);
    }
    total_valid += map.valid_count();
    res.maps.push_back(std::move(map));
  }
  res.achieved_density =
      static_cast<double>(total_valid) / (static_cast<double>(w * h) * static_cast<double>(n_views));
  res.density_reached = total_valid >= (total_target * 8) / 10;
  return res;
}

// RMSE over valid (nonzero) sparse pixels against dense ground truth.
inline double sparse_depth_rmse(const DepthMap& sparse, const DepthMap& gt) {
  require(sparse.width == gt.width && sparse.height == gt.height,
          "sparse_depth_rmse: size mismatch ", sparse.width, "x", sparse.height, " vs ",
          gt.width, "x", gt.height);
  double se = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < sparse.data.size(); ++i) {
    if (sparse.data[i] <= 0.0) continue;
    const double e = sparse.data[i] - gt.data[i];
    se += e * e;
    ++n;
  }
  require(n > 0, "sparse_depth_rmse: no valid pixels");
  return std::sqrt(se / static_cast<double>(n));
}

}  // namespace roomnerf
