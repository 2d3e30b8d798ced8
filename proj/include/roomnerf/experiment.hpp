#pragma once

// End-to-end pipeline glue shared by the command-line driver and the
// system-level tests: synthesize scenes and multi-view datasets, simulate
// feature-point sparse depth over the training views, train/apply the
// completion network to get dense priors, train radiance fields under named
// ablation variants, and evaluate renders against held-out views.

#include <map>
#include <string>
#include <vector>

#include "roomnerf/dataset.hpp"
#include "roomnerf/depth_completion.hpp"
#include "roomnerf/metrics.hpp"
#include "roomnerf/sparse_depth.hpp"
#include "roomnerf/trainer.hpp"

namespace roomnerf {

// ---------------------------------------------------------------------------
// sparse simulation over a dataset's training views

struct SparseSim {
  SparseResult result;  // maps/observations indexed like ds.train
  NoiseModel fitted;    // refit from the surviving simulated matches
};

// Detects keypoints on the observed images, perturbs with the generating
// noise model, cross-projects with occlusion tests, and refits the
// depth-dependent noise curve from the inlier matches (the std estimate a real
// pipeline would derive from reprojection consistency).
inline SparseSim simulate_dataset_sparse(const SceneDataset& ds, const SparseConfig& cfg,
                                         const NoiseModel& noise, uint64_t seed) {
  require(!ds.train.empty(), "simulate_dataset_sparse: dataset has no training views");
  std::vector<CameraRecord> cams;
  std::vector<DepthMap> gt;
  std::vector<std::vector<Pixel>> kps;
  int64_t budget = cfg.keypoint_budget;
  if (budget == 0) {
    // Detect ~4x the per-view valid-pixel target; cross-view projection and
    // thinning cut it down to the requested density.
    const double per_view = cfg.density * static_cast<double>(ds.config.width * ds.config.height);
    budget = std::max<int64_t>(8, std::llround(4.0 * per_view));
  }
  for (const auto& v : ds.train) {
    cams.push_back({v.intr, v.pose});
    gt.push_back(v.gt_depth);
    kps.push_back(detect_keypoints(v.image, budget));
  }
  SparseSim sim;
  sim.result = perturb_and_project(cams, gt, kps, noise, seed, cfg);
  std::vector<std::pair<double, double>> pairs;
  for (const SparsePoint& p : sim.result.points)
    if (!p.outlier) pairs.push_back({p.z_true, p.z});
  sim.fitted = pairs.size() >= 30 ? fit_noise_model(pairs) : noise;
  return sim;
}

// ---------------------------------------------------------------------------
// priors

// Priors straight from the sparse maps: depth at observed pixels, std from
// the fitted noise curve, nothing elsewhere. The completion-free baseline.
inline std::vector<DepthPrior> sparse_only_priors(const std::vector<DepthMap>& sparse,
                                                  const NoiseModel& noise,
                                                  double s_min = 0.01) {
  std::vector<DepthPrior> priors;
  for (const DepthMap& m : sparse) {
    DepthPrior p{m, DepthMap(m.width, m.height)};
    for (size_t i = 0; i < m.data.size(); ++i)
      if (m.data[i] > 0.0) p.s.data[i] = std::max(noise.stddev(m.data[i]), s_min);
    priors.push_back(std::move(p));
  }
  return priors;
}

inline std::vector<DepthPrior> completed_priors(const CompletionNet& net,
                                                const std::vector<CameraView>& views,
                                                const std::vector<DepthMap>& sparse) {
  require(views.size() == sparse.size(), "completed_priors: ", views.size(), " views vs ",
          sparse.size(), " sparse maps");
  std::vector<DepthPrior> priors;
  for (size_t v = 0; v < views.size(); ++v)
    priors.push_back(net.complete(views[v].image, sparse[v]));
  return priors;
}

// Renders views of freshly generated rooms and simulates sparse depth on
// them: training corpus for the completion network. Scene seeds derive from
// `seed`, so corpora for different seeds are disjoint.
inline std::vector<CompletionSample> make_completion_corpus(
    int n_scenes, int views_per_scene, int64_t width, int64_t height, const SparseConfig& scfg,
    const NoiseModel& noise, uint64_t seed) {
  require(n_scenes >= 1 && views_per_scene >= 1, "make_completion_corpus: bad counts ",
          n_scenes, "/", views_per_scene);
  std::vector<CompletionSample> out;
  for (int s = 0; s < n_scenes; ++s) {
    const uint64_t scene_seed = derive_seed(seed, 0xC0B05UL + static_cast<uint64_t>(s));
    const SceneGeometry scene = generate_scene(scene_seed, SceneSpec{});
    DatasetConfig dcfg;
    dcfg.n_train = views_per_scene;
    dcfg.n_test = 0;
    dcfg.width = width;
    dcfg.height = height;
    dcfg.t_far = scfg.t_far;
    dcfg.t_near = scfg.t_near;
    const SceneDataset ds = make_scene_dataset(scene, dcfg, scene_seed);
    const SparseSim sim = simulate_dataset_sparse(ds, scfg, noise, scene_seed);
    for (size_t v = 0; v < ds.train.size(); ++v)
      out.push_back(make_completion_sample(ds.train[v].image, sim.result.maps[v],
                                           ds.train[v].gt_depth, scfg.t_far));
  }
  return out;
}

// ---------------------------------------------------------------------------
// ablation variants

enum class Variant {
  kFull,           // gated GNLL, guided sampling, per-pixel std, latent codes
  kNoCompletion,   // priors only at sparse pixels (from the noise curve)
  kNoUncertainty,  // constant std (median prior), ungated MSE
  kNoGnll,         // gated MSE instead of GNLL
  kNoLatent,       // latent codes disabled
  kPlainNerf,      // color loss only, stratified sampling
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoCompletion: return "no_completion";
    case Variant::kNoUncertainty: return "no_uncertainty";
    case Variant::kNoGnll: return "no_gnll";
    case Variant::kNoLatent: return "no_latent";
    case Variant::kPlainNerf: return "plain_nerf";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  for (Variant v : {Variant::kFull, Variant::kNoCompletion, Variant::kNoUncertainty,
                    Variant::kNoGnll, Variant::kNoLatent, Variant::kPlainNerf})
    if (s == variant_name(v)) return v;
  require(false, "unknown variant '", s, "' (expected full, no_completion, no_uncertainty, ",
          "no_gnll, no_latent, or plain_nerf)");
  return Variant::kFull;
}

// Per-variant loss weights. The depth term is a mean over the whole batch, so
// sparse-only priors (~0.04% of rays supervised) need a far larger weight for
// the same per-supervised-ray pull; MSE lacks the GNLL's 1/s^2 scale, so the
// gated-MSE ablation runs hotter than the full method.
inline double variant_lambda(Variant v) {
  switch (v) {
    case Variant::kNoCompletion: return 0.25;
    case Variant::kNoGnll: return 0.03;
    case Variant::kPlainNerf: return 0.0;
    default: return 0.007;
  }
}

// Applies a variant's switches to a base config (batch/lr/schedule/field come
// from the base).
inline TrainConfig variant_train_config(Variant v, TrainConfig base) {
  base.lambda = variant_lambda(v);
  switch (v) {
    case Variant::kFull:
    case Variant::kNoCompletion:
      break;
    case Variant::kNoUncertainty:
      base.depth_loss = DepthLossKind::kPlainMse;
      base.constant_std = true;
      break;
    case Variant::kNoGnll:
      base.depth_loss = DepthLossKind::kGatedMse;
      break;
    case Variant::kNoLatent:
      base.field.latent_dim = 0;
      break;
    case Variant::kPlainNerf:
      base.guided_sampling = false;
      break;
  }
  return base;
}

// ---------------------------------------------------------------------------
// evaluation

struct ViewEval {
  double psnr = 0.0;
  double ssim = 0.0;
  double depth_rmse = 0.0;
};

struct EvalResult {
  std::vector<ViewEval> views;
  ViewEval mean;
  std::vector<NerfRender> renders;  // zero-code renders, one per view
};

inline EvalResult evaluate_views(const FieldMLP& field, const std::vector<CameraView>& views,
                                 double t_near, double t_far, int k_total, uint64_t seed) {
  require(!views.empty(), "evaluate_views: no views");
  EvalResult res;
  for (size_t i = 0; i < views.size(); ++i) {
    const CameraView& v = views[i];
    NerfRender r = render_image(field, v.intr, v.pose, t_near, t_far, k_total,
                                derive_seed(seed, static_cast<uint64_t>(i)));
    ViewEval e{psnr(r.image, v.image), ssim(r.image, v.image), depth_rmse(r.depth, v.gt_depth)};
    res.mean.psnr += e.psnr / static_cast<double>(views.size());
    res.mean.ssim += e.ssim / static_cast<double>(views.size());
    res.mean.depth_rmse += e.depth_rmse / static_cast<double>(views.size());
    res.views.push_back(e);
    res.renders.push_back(std::move(r));
  }
  return res;
}

// Absolute depth error on a fixed black->blue->red->white ramp saturating at
// max_error meters, so heatmaps from different runs are directly comparable.
inline Image depth_error_heatmap(const DepthMap& rendered, const DepthMap& gt,
                                 double max_error = 0.5) {
  require(rendered.width == gt.width && rendered.height == gt.height,
          "depth_error_heatmap: size mismatch");
  require(max_error > 0.0, "depth_error_heatmap: scale must be positive");
  Image img(rendered.width, rendered.height);
  for (int64_t y = 0; y < gt.height; ++y)
    for (int64_t x = 0; x < gt.width; ++x) {
      if (gt.at(x, y) <= 0.0) continue;  // invalid reference stays black
      const double u =
          std::clamp(std::abs(rendered.at(x, y) - gt.at(x, y)) / max_error, 0.0, 1.0);
      double r, g, b;
      if (u < 0.5) {  // black -> blue -> red
        b = u < 0.25 ? u * 4.0 : 1.0 - (u - 0.25) * 4.0;
        r = u < 0.25 ? 0.0 : (u - 0.25) * 4.0;
        g = 0.0;
      } else {  // red -> white
        r = 1.0;
        g = (u - 0.5) * 2.0;
        b = (u - 0.5) * 2.0;
      }
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  return img;
}

// ---------------------------------------------------------------------------
// per-view brightness seams

// How unevenly the trained field reproduces per-view brightness: for each
// training view, render it (with that view's own latent code when the field
// has codes) and take the mean color residual against the observed image over
// pixels whose surface point is also seen by at least one other training
// view; report the variance of those per-view means. A field with latent
// codes absorbs per-view offsets (all residual means near zero); without
// codes the field settles on a compromise and the residual means spread out
// like the injected offsets, which is what visible seams are.
inline double seam_variance(const FieldMLP& field, const SceneDataset& ds, int k_total,
                            uint64_t seed) {
  const size_t n = ds.train.size();
  require(n >= 2, "seam_variance: need at least two training views");
  std::vector<double> means;
  for (size_t i = 0; i < n; ++i) {
    const CameraView& vi = ds.train[i];
    Array code({1, field.config().latent_dim});
    if (field.config().latent_dim > 0)
      code = field.gather_codes({static_cast<int64_t>(i)})->value;
    const NerfRender r =
        render_image(field, vi.intr, vi.pose, ds.config.t_near, ds.config.t_far, k_total,
                     derive_seed(seed, 0x5EA0UL + i),
                     field.config().latent_dim > 0 ? &code : nullptr);
    double sum = 0.0;
    int64_t count = 0;
    for (int64_t y = 0; y < vi.intr.height; ++y)
      for (int64_t x = 0; x < vi.intr.width; ++x) {
        const double z = vi.gt_depth.at(x, y);
        if (z <= 0.0) continue;
        const Ray ray = pixel_ray(vi.intr, vi.pose, static_cast<double>(x),
                                  static_cast<double>(y), ds.config.t_near, ds.config.t_far);
        const Vec3 p = ray.origin + ray.direction * z;
        bool overlapped = false;
        for (size_t j = 0; j < n && !overlapped; ++j) {
          if (j == i) continue;
          const CameraView& vj = ds.train[j];
          const auto pr = project_point(vj.intr, vj.pose, p);
          if (!pr || !pr->in_image) continue;
          const auto jx = static_cast<int64_t>(std::lround(pr->px));
          const auto jy = static_cast<int64_t>(std::lround(pr->py));
          const double zj = vj.gt_depth.at(std::clamp<int64_t>(jx, 0, vj.intr.width - 1),
                                           std::clamp<int64_t>(jy, 0, vj.intr.height - 1));
          if (pr->depth <= zj * 1.02 + 0.02) overlapped = true;  // passes the z-test
        }
        if (!overlapped) continue;
        for (int c = 0; c < 3; ++c) sum += r.image.at(x, y, c) - vi.image.at(x, y, c);
        count += 3;
      }
    require(count > 0, "seam_variance: view ", i, " shares no surface with other views");
    means.push_back(sum / static_cast<double>(count));
  }
  double mu = 0.0;
  for (double m : means) mu += m / static_cast<double>(means.size());
  double var = 0.0;
  for (double m : means) var += (m - mu) * (m - mu) / static_cast<double>(means.size());
  return var;
}

// ---------------------------------------------------------------------------
// metrics tables

// Fixed-precision delimited table so identical runs produce identical bytes.
inline std::string format_eval_table(const std::vector<std::string>& row_names,
                                     const std::vector<EvalResult>& results) {
  require(row_names.size() == results.size(), "format_eval_table: ", row_names.size(),
          " names for ", results.size(), " results");
  std::string out = "name\tpsnr\tssim\tdepth_rmse\n";
  char buf[160];
  for (size_t i = 0; i < results.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s\t%.6f\t%.6f\t%.6f\n", row_names[i].c_str(),
                  results[i].mean.psnr, results[i].mean.ssim, results[i].mean.depth_rmse);
    out += buf;
  }
  return out;
}

}  // namespace roomnerf
