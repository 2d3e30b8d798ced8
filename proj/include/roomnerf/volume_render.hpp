#pragma once

// Volume rendering quadrature and ray samplers.
//
// Conventions fixed here:
//   - delta_k = t_{k+1} - t_k for k < K, and delta_K = t_f - t_K
//   - transmittance T_k covers intervals strictly before sample k, so T_1 = 1
//   - expected depth and its variance use raw weights (no renormalization by
//     opacity), so semi-transparent rays bias depth low by design
//
// The identity sum(w) = 1 - exp(-sum(sigma delta)) holds exactly by
// telescoping and is pinned by tests to 1e-12.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "roomnerf/autodiff.hpp"
#include "roomnerf/camera.hpp"
#include "roomnerf/rng.hpp"

namespace roomnerf {

// ---------------------------------------------------------------------------
// samplers

// One uniform draw per equal-width bin of [t_n, t_f]; strictly ascending by
// construction.
inline std::vector<double> stratified_sample(double t_near, double t_far, int k, Rng& rng) {
  require(k >= 1, "stratified_sample: need at least one sample");
  require(t_near < t_far, "stratified_sample: empty range [", t_near, ",", t_far, "]");
  const double h = (t_far - t_near) / k;
  std::vector<double> t(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) t[static_cast<size_t>(i)] = t_near + (i + rng.uniform()) * h;
  return t;
}

// Inverse-CDF Gaussian draws from stratified uniforms (variance reduction),
// clamped into [t_near, t_far]. Ascending but possibly with ties at the
// clamp boundaries.
inline std::vector<double> gaussian_sample(double t_near, double t_far, double mean,
                                           double stddev, int k, Rng& rng) {
  require(k >= 1, "gaussian_sample: need at least one sample");
  require(stddev > 0.0, "gaussian_sample: stddev must be positive, got ", stddev);
  std::vector<double> t(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double u = std::clamp((i + rng.uniform()) / k, 1e-12, 1.0 - 1e-12);
    t[static_cast<size_t>(i)] = std::clamp(mean + stddev * normal_quantile(u), t_near, t_far);
  }
  return t;
}

namespace detail {

// Makes a sorted sample list strictly ascending inside [t_near, t_far]:
// duplicates are pushed forward by the jitter, then a backward sweep caps
// everything at t_far while preserving strict order.
inline void enforce_ascending(std::vector<double>& t, double t_near, double t_far) {
  const double jit = 1e-6 * (t_far - t_near);
  for (size_t i = 1; i < t.size(); ++i)
    if (t[i] <= t[i - 1]) t[i] = t[i - 1] + jit;
  if (!t.empty() && t.back() > t_far) {
    t.back() = t_far;
    for (size_t i = t.size() - 1; i-- > 0;)
      if (t[i] >= t[i + 1]) t[i] = t[i + 1] - jit;
  }
  if (!t.empty()) t.front() = std::max(t.front(), t_near);
}

}  // namespace detail

// Half stratified over [t_n, t_f], half from N(z, s^2) clamped to the range;
// merged, sorted, duplicates jittered by 1e-6 (t_f - t_n).
inline std::vector<double> depth_guided_sample(double t_near, double t_far, double prior_mean,
                                               double prior_std, int k_total, Rng& rng) {
  require(k_total >= 2 && k_total % 2 == 0, "depth_guided_sample: K_total must be even >= 2, got ",
          k_total);
  require(prior_mean >= t_near && prior_mean <= t_far, "depth_guided_sample: prior mean ",
          prior_mean, " outside [", t_near, ",", t_far, "]");
  std::vector<double> t = stratified_sample(t_near, t_far, k_total / 2, rng);
  const std::vector<double> g =
      gaussian_sample(t_near, t_far, prior_mean, prior_std, k_total / 2, rng);
  t.insert(t.end(), g.begin(), g.end());
  std::sort(t.begin(), t.end());
  detail::enforce_ascending(t, t_near, t_far);
  return t;
}

// ---------------------------------------------------------------------------
// composite (plain)

struct RenderResult {
  Vec3 color;
  double depth = 0.0;      // expected depth, meters
  double depth_std = 0.0;  // sqrt of the raw-weight variance
  double opacity = 0.0;    // sum of weights
  std::vector<double> weights;  // per-sample contribution, same order as t
};

inline void check_ascending(const std::vector<double>& t) {
  for (size_t i = 1; i < t.size(); ++i)
    require(t[i] > t[i - 1], "composite: sample distances not strictly ascending at index ", i,
            " (", t[i - 1], " then ", t[i], ")");
}

inline RenderResult composite(const std::vector<double>& t, const std::vector<double>& sigma,
                              const std::vector<Vec3>& color, double t_far) {
  const size_t k = t.size();
  require(k >= 1, "composite: no samples");
  require(sigma.size() == k && color.size() == k, "composite: ", k, " samples but ",
          sigma.size(), " densities and ", color.size(), " colors");
  check_ascending(t);
  RenderResult res;
  res.weights.resize(k);
  double acc_tau = 0.0;
  for (size_t i = 0; i < k; ++i) {
    require(sigma[i] >= 0.0, "composite: negative density ", sigma[i], " at sample ", i);
    const double delta = (i + 1 < k ? t[i + 1] : t_far) - t[i];
    const double transmittance = std::exp(-acc_tau);
    const double w = transmittance * (1.0 - std::exp(-sigma[i] * delta));
    res.weights[i] = w;
    res.color = res.color + color[i] * w;
    res.depth += w * t[i];
    res.opacity += w;
    acc_tau += sigma[i] * delta;
  }
  double var = 0.0;
  for (size_t i = 0; i < k; ++i)
    var += res.weights[i] * (t[i] - res.depth) * (t[i] - res.depth);
  res.depth_std = std::sqrt(std::max(0.0, var));
  return res;
}

// ---------------------------------------------------------------------------
// composite (autodiff graph, batched over rays)

struct CompositeGraph {
  NodePtr color;      // [R,3]
  NodePtr depth;      // [R,1]
  NodePtr depth_var;  // [R,1], raw (not floored)
  NodePtr opacity;    // [R,1]
};

// sigma [R*K,1] and color [R*K,3] are sample-major per ray; t is [R][K]
// strictly ascending with shared t_far.
inline CompositeGraph composite_graph(const NodePtr& sigma, const NodePtr& color,
                                      const std::vector<std::vector<double>>& t,
                                      double t_far) {
  const auto rays = static_cast<int64_t>(t.size());
  require(rays >= 1, "composite_graph: no rays");
  const auto k = static_cast<int64_t>(t[0].size());
  require(k >= 1, "composite_graph: no samples per ray");
  for (const auto& row : t) {
    require(static_cast<int64_t>(row.size()) == k,
            "composite_graph: all rays must share one sample count");
    check_ascending(row);
  }
  require(sigma->value.rank() == 2 && sigma->value.shape[0] == rays * k &&
              sigma->value.shape[1] == 1,
          "composite_graph: sigma must be [", rays * k, ",1], got ", sigma->value.shape_str());
  require(color->value.rank() == 2 && color->value.shape[0] == rays * k &&
              color->value.shape[1] == 3,
          "composite_graph: color must be [", rays * k, ",3], got ", color->value.shape_str());

  Array deltas({rays, k});
  Array ts({rays, k});
  for (int64_t r = 0; r < rays; ++r)
    for (int64_t i = 0; i < k; ++i) {
      ts.at2(r, i) = t[static_cast<size_t>(r)][static_cast<size_t>(i)];
      deltas.at2(r, i) =
          (i + 1 < k ? t[static_cast<size_t>(r)][static_cast<size_t>(i + 1)] : t_far) -
          t[static_cast<size_t>(r)][static_cast<size_t>(i)];
    }
  NodePtr tau = mul(reshape(sigma, {rays, k}), constant(deltas));
  NodePtr transmittance = roomnerf::exp(scale(cumsum_exclusive(tau), -1.0));
  NodePtr alpha = sub(constant(Array({rays, k}, 1.0)), roomnerf::exp(scale(tau, -1.0)));
  NodePtr w = mul(transmittance, alpha);  // [R,K]

  CompositeGraph out;
  std::vector<NodePtr> chans;
  for (int c = 0; c < 3; ++c)
    chans.push_back(sum_axis(mul(w, reshape(slice(color, 1, c, 1), {rays, k})), 1));
  out.color = concat(chans, 1);
  NodePtr tconst = constant(ts);
  out.depth = sum_axis(mul(w, tconst), 1);
  out.depth_var = sum_axis(mul(w, square(sub(tconst, out.depth))), 1);
  out.opacity = sum_axis(w, 1);
  return out;
}

// ---------------------------------------------------------------------------
// two-pass test-time rendering

// Batch field probe along one ray: fills sigma[i] and rgb[i] for each t[i].
using RayQueryFn = std::function<void(const std::vector<double>& t, std::vector<double>& sigma,
                                      std::vector<Vec3>& rgb)>;

struct TestTimeRender {
  RenderResult result;
  int64_t queries = 0;
  bool fallback = false;  // pass 1 found no surface; second half was stratified
  std::vector<double> ts;             // final (merged, de-tied) sample positions
  std::vector<size_t> sample_origin;  // per final sample: index in query order
                                      // (pass 1 first, then pass 2)
};

// Pass 1 spends half the budget on stratified samples to localize the
// surface; pass 2 spends the rest on N(z1, s1^2) draws (s1 floored at the
// pass-1 bin width). The final composite runs over the union of both sample
// sets, so the field is probed exactly k_total times.
inline TestTimeRender render_pixel_test_time(const RayQueryFn& query, double t_near,
                                             double t_far, int k_total, Rng& rng) {
  require(k_total >= 2 && k_total % 2 == 0, "render_pixel_test_time: K_total must be even >= 2");
  TestTimeRender out;
  const int k1 = k_total / 2;
  std::vector<double> t1 = stratified_sample(t_near, t_far, k1, rng);
  std::vector<double> sig1, sig2;
  std::vector<Vec3> rgb1, rgb2;
  query(t1, sig1, rgb1);
  out.queries += static_cast<int64_t>(t1.size());
  const RenderResult pass1 = composite(t1, sig1, rgb1, t_far);

  std::vector<double> t2;
  if (pass1.opacity < 1e-4) {
    out.fallback = true;
    t2 = stratified_sample(t_near, t_far, k_total - k1, rng);
  } else {
    const double bin = (t_far - t_near) / k1;
    const double s = std::max(pass1.depth_std, bin);
    const double z = std::clamp(pass1.depth, t_near, t_far);
    t2 = gaussian_sample(t_near, t_far, z, s, k_total - k1, rng);
  }
  query(t2, sig2, rgb2);
  out.queries += static_cast<int64_t>(t2.size());

  // merge both passes by distance, reusing the already-queried values
  struct S {
    double t, sigma;
    Vec3 rgb;
    size_t origin;
  };
  std::vector<S> merged;
  merged.reserve(t1.size() + t2.size());
  for (size_t i = 0; i < t1.size(); ++i) merged.push_back({t1[i], sig1[i], rgb1[i], i});
  for (size_t i = 0; i < t2.size(); ++i)
    merged.push_back({t2[i], sig2[i], rgb2[i], t1.size() + i});
  std::sort(merged.begin(), merged.end(), [](const S& a, const S& b) { return a.t < b.t; });
  std::vector<double> tm(merged.size()), sm(merged.size());
  std::vector<Vec3> cm(merged.size());
  out.sample_origin.resize(merged.size());
  for (size_t i = 0; i < merged.size(); ++i) {
    tm[i] = merged[i].t;
    sm[i] = merged[i].sigma;
    cm[i] = merged[i].rgb;
    out.sample_origin[i] = merged[i].origin;
  }
  detail::enforce_ascending(tm, t_near, t_far);
  out.result = composite(tm, sm, cm, t_far);
  out.ts = std::move(tm);
  return out;
}

}  // namespace roomnerf
