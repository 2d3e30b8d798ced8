// Command-line driver for the full pipeline: scene/dataset synthesis, sparse
// depth simulation, depth-completion training and prior export, radiance-field
// training under ablation variants, rendering, evaluation, and the sparse-
// density sweep. Every stage is seeded and writes plain files, so runs are
// reproducible byte for byte.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "roomnerf/experiment.hpp"

namespace rn = roomnerf;
namespace fs = std::filesystem;

namespace {

struct SparseMeta {
  double density_target = 0.0;
  double density_achieved = 0.0;
  bool density_reached = false;
  rn::NoiseModel fitted;
  size_t n_views = 0;
};

void save_sparse_meta(const SparseMeta& m, const std::string& path) {
  nlohmann::json j = {{"density_target", m.density_target},
                      {"density_achieved", m.density_achieved},
                      {"density_reached", m.density_reached},
                      {"noise_a0", m.fitted.a0},
                      {"noise_a1", m.fitted.a1},
                      {"noise_a2", m.fitted.a2},
                      {"n_views", m.n_views}};
  std::ofstream os(path);
  rn::require(static_cast<bool>(os), "cannot write '", path, "'");
  os << j.dump(2) << "\n";
}

SparseMeta load_sparse_meta(const std::string& path) {
  std::ifstream is(path);
  rn::require(static_cast<bool>(is), "cannot open '", path, "' (run simulate-sparse first?)");
  nlohmann::json j;
  is >> j;
  SparseMeta m;
  m.density_target = j.at("density_target").get<double>();
  m.density_achieved = j.at("density_achieved").get<double>();
  m.density_reached = j.at("density_reached").get<bool>();
  m.fitted = {j.at("noise_a0").get<double>(), j.at("noise_a1").get<double>(),
              j.at("noise_a2").get<double>()};
  m.n_views = j.at("n_views").get<size_t>();
  return m;
}

rn::CompletionConfig load_completion_config(const std::string& meta_path) {
  std::ifstream is(meta_path);
  rn::require(static_cast<bool>(is), "cannot open '", meta_path, "'");
  nlohmann::json j;
  is >> j;
  rn::CompletionConfig cfg;
  cfg.stem_width = j.at("stem_width").get<int>();
  cfg.stage1 = j.at("stage1").get<int>();
  cfg.stage2 = j.at("stage2").get<int>();
  cfg.stage3 = j.at("stage3").get<int>();
  cfg.t_far = j.at("t_far").get<double>();
  cfg.s_min = j.at("s_min").get<double>();
  cfg.depth_iters = j.at("depth_iters").get<int>();
  cfg.std_iters = j.at("std_iters").get<int>();
  return cfg;
}

// Rebuilds the trained field of a train-nerf output directory.
struct LoadedField {
  rn::ParamStore store;
  std::optional<rn::FieldMLP> field;
  rn::TrainConfig cfg;
};

void load_field(LoadedField& lf, const std::string& run_dir, const rn::SceneDataset& ds) {
  std::ifstream is(run_dir + "/config.json");
  rn::require(static_cast<bool>(is), "cannot open '", run_dir,
              "/config.json' (not a train-nerf output directory?)");
  nlohmann::json j;
  is >> j;
  lf.cfg = rn::train_config_from_json(j);
  lf.cfg.field.n_images = static_cast<int>(ds.train.size());
  lf.cfg.field.bound_min = ds.scene.room_min;
  lf.cfg.field.bound_max = ds.scene.room_max;
  rn::Rng rng(0);  // initial values are overwritten by the checkpoint
  lf.field.emplace(lf.store, lf.cfg.field, rng);
  rn::load_checkpoint(lf.store, run_dir + "/params.rnck");
}

std::vector<rn::DepthPrior> load_priors(const std::string& dir, size_t n_views) {
  std::vector<rn::DepthMap> z = rn::load_depth_set(dir, "prior_z", n_views);
  std::vector<rn::DepthMap> s = rn::load_depth_set(dir, "prior_s", n_views);
  std::vector<rn::DepthPrior> priors;
  for (size_t i = 0; i < n_views; ++i) priors.push_back({std::move(z[i]), std::move(s[i])});
  return priors;
}

// Parses "train:3" / "test:0" into a view reference.
const rn::CameraView& pick_view(const rn::SceneDataset& ds, const std::string& spec) {
  const auto colon = spec.find(':');
  rn::require(colon != std::string::npos, "view must look like 'test:0' or 'train:2', got '",
              spec, "'");
  const std::string split = spec.substr(0, colon);
  const size_t idx = static_cast<size_t>(std::stoul(spec.substr(colon + 1)));
  rn::require(split == "train" || split == "test", "view split must be train or test, got '",
              split, "'");
  const std::vector<rn::CameraView>& views = split == "train" ? ds.train : ds.test;
  rn::require(idx < views.size(), split, " split has ", views.size(), " views; index ", idx,
              " out of range");
  return views[idx];
}

std::string fmt(double v) {
  char buf[64];
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

int cmd_generate_scene(const std::string& out, uint64_t seed, rn::DatasetConfig dcfg,
                       int objects) {
  rn::SceneSpec spec;
  spec.object_count = objects;
  const rn::SceneGeometry scene = rn::generate_scene(seed, spec);
  const rn::SceneDataset ds = rn::make_scene_dataset(scene, dcfg, seed);
  rn::save_dataset(ds, out);
  std::printf("wrote dataset: %d train + %d test views at %lldx%lld to %s\n", dcfg.n_train,
              dcfg.n_test, static_cast<long long>(dcfg.width),
              static_cast<long long>(dcfg.height), out.c_str());
  return 0;
}

int cmd_simulate_sparse(const std::string& dataset, const std::string& out, uint64_t seed,
                        rn::SparseConfig scfg) {
  const rn::SceneDataset ds = rn::load_dataset(dataset);
  scfg.t_near = ds.config.t_near;
  scfg.t_far = ds.config.t_far;
  const rn::SparseSim sim = rn::simulate_dataset_sparse(ds, scfg, rn::kDefaultNoise, seed);
  fs::create_directories(out);
  rn::save_depth_set(sim.result.maps, out, "sparse");
  save_sparse_meta({scfg.density, sim.result.achieved_density, sim.result.density_reached,
                    sim.fitted, sim.result.maps.size()},
                   out + "/sparse_meta.json");
  std::printf("sparse depth: target density %.5f%%, achieved %.5f%% over %zu views%s\n",
              100.0 * scfg.density, 100.0 * sim.result.achieved_density,
              sim.result.maps.size(),
              sim.result.density_reached ? "" : " (detector-limited, below target)");
  return 0;
}

int cmd_train_completion(const std::string& out, uint64_t seed, int scenes, int val_scenes,
                         int views_per_scene, int64_t width, int64_t height, double density,
                         rn::TrainCompletionConfig tcfg) {
  rn::SparseConfig scfg;
  scfg.density = density;
  const auto train = rn::make_completion_corpus(scenes, views_per_scene, width, height, scfg,
                                                rn::kDefaultNoise, seed);
  const auto val = rn::make_completion_corpus(val_scenes, views_per_scene, width, height, scfg,
                                              rn::kDefaultNoise, rn::derive_seed(seed, 0xA1DUL));
  rn::ParamStore store;
  rn::CompletionConfig ccfg;
  rn::Rng init(rn::derive_seed(seed, 0x1247UL));
  rn::CompletionNet net(store, ccfg, init);
  tcfg.seed = seed;
  const rn::TrainCompletionResult res = rn::train_completion(store, net, train, val, tcfg);
  fs::create_directories(out);
  rn::save_checkpoint(store, out + "/completion.rnck");
  nlohmann::json meta = {{"stem_width", ccfg.stem_width},
                         {"stage1", ccfg.stage1},
                         {"stage2", ccfg.stage2},
                         {"stage3", ccfg.stage3},
                         {"t_far", ccfg.t_far},
                         {"s_min", ccfg.s_min},
                         {"depth_iters", ccfg.depth_iters},
                         {"std_iters", ccfg.std_iters},
                         {"epochs", tcfg.epochs},
                         {"best_epoch", res.best_epoch},
                         {"best_val", res.best_val},
                         {"train_loss", res.train_loss},
                         {"val_loss", res.val_loss}};
  std::ofstream os(out + "/completion_meta.json");
  rn::require(static_cast<bool>(os), "cannot write '", out, "/completion_meta.json'");
  os << meta.dump(2) << "\n";
  std::printf("completion net: %d epochs on %zu samples, best val loss %.5f at epoch %d\n",
              tcfg.epochs, train.size(), res.best_val, res.best_epoch);
  return 0;
}

int cmd_export_priors(const std::string& dataset, const std::string& sparse_dir,
                      const std::string& net_dir, const std::string& out, bool sparse_only) {
  const rn::SceneDataset ds = rn::load_dataset(dataset);
  const SparseMeta smeta = load_sparse_meta(sparse_dir + "/sparse_meta.json");
  rn::require(smeta.n_views == ds.train.size(), "sparse set has ", smeta.n_views,
              " views but dataset has ", ds.train.size(), " training views");
  const auto sparse = rn::load_depth_set(sparse_dir, "sparse", ds.train.size());

  std::vector<rn::DepthPrior> priors;
  if (sparse_only) {
    priors = rn::sparse_only_priors(sparse, smeta.fitted);
  } else {
    rn::require(!net_dir.empty(), "--net is required unless --sparse-only is given");
    rn::CompletionConfig ccfg = load_completion_config(net_dir + "/completion_meta.json");
    rn::require(std::abs(ccfg.t_far - ds.config.t_far) < 1e-9, "completion net t_far ",
                ccfg.t_far, " does not match dataset t_far ", ds.config.t_far);
    rn::ParamStore store;
    rn::Rng init(0);
    rn::CompletionNet net(store, ccfg, init);
    rn::load_checkpoint(store, net_dir + "/completion.rnck");
    priors = rn::completed_priors(net, ds.train, sparse);
  }
  fs::create_directories(out);
  std::vector<rn::DepthMap> z, s;
  for (auto& p : priors) {
    z.push_back(std::move(p.z));
    s.push_back(std::move(p.s));
  }
  rn::save_depth_set(z, out, "prior_z");
  rn::save_depth_set(s, out, "prior_s");

  std::vector<rn::DepthPrior> reloaded;  // report calibration on what was written
  for (size_t i = 0; i < z.size(); ++i) reloaded.push_back({z[i], s[i]});
  std::vector<rn::DepthMap> gt;
  for (const auto& v : ds.train) gt.push_back(v.gt_depth);
  const rn::CalibrationReport rep = rn::calibration_report(reloaded, gt);
  // A sparse-only export covers almost nothing, so its headline error is the
  // error at the observed pixels, not the dense-report number.
  double rmse = rep.rmse;
  if (sparse_only) {
    double sse = 0.0;
    int64_t n = 0;
    for (size_t v = 0; v < z.size(); ++v)
      for (size_t i = 0; i < z[v].data.size(); ++i)
        if (z[v].data[i] > 0.0 && gt[v].data[i] > 0.0) {
          const double r = z[v].data[i] - gt[v].data[i];
          sse += r * r;
          ++n;
        }
    rmse = n > 0 ? std::sqrt(sse / static_cast<double>(n)) : 0.0;
  }
  nlohmann::json meta = {{"sparse_only", sparse_only},
                         {"coverage1", rep.coverage1},
                         {"coverage2", rep.coverage2},
                         {"coverage3", rep.coverage3},
                         {"rmse", rmse},
                         {"pixels", rep.pixels}};
  std::ofstream os(out + "/prior_meta.json");
  os << meta.dump(2) << "\n";
  std::printf("priors (%s): rmse %.4f m, k=1 coverage %.3f over %lld pixels\n",
              sparse_only ? "sparse-only" : "completed", rmse, rep.coverage1,
              static_cast<long long>(rep.pixels));
  return 0;
}

int cmd_train_nerf(const std::string& dataset, const std::string& priors_dir,
                   const std::string& out, const std::string& variant_s, uint64_t seed,
                   rn::TrainConfig base, double lambda_override, bool has_lambda) {
  const rn::Variant variant = rn::variant_from_name(variant_s);
  const rn::SceneDataset ds = rn::load_dataset(dataset);
  base.seed = seed;
  rn::TrainConfig cfg = rn::variant_train_config(variant, base);
  if (has_lambda) cfg.lambda = lambda_override;

  std::vector<rn::DepthMap> pz, ps;
  if (cfg.lambda > 0.0 || cfg.guided_sampling) {
    rn::require(!priors_dir.empty(), "variant '", variant_s,
                "' needs --priors (depth supervision or guided sampling)");
    auto priors = load_priors(priors_dir, ds.train.size());
    for (auto& p : priors) {
      pz.push_back(std::move(p.z));
      ps.push_back(std::move(p.s));
    }
  } else {
    for (const auto& v : ds.train) {
      pz.emplace_back(v.image.width, v.image.height);  // no supervision anywhere
      ps.emplace_back(v.image.width, v.image.height);
    }
  }
  rn::NerfTrainer trainer(ds, std::move(pz), std::move(ps), cfg);
  const rn::TrainResult res = trainer.train(out);
  std::ofstream vs(out + "/variant.txt");
  vs << variant_s << "\n";
  if (!res.log.empty())
    std::printf("trained %s: %lld iterations, final validation psnr %.3f dB, depth rmse %.4f m\n",
                variant_s.c_str(), static_cast<long long>(cfg.iterations), res.log.back().psnr,
                res.log.back().depth_rmse);
  else
    std::printf("trained %s: %lld iterations\n", variant_s.c_str(),
                static_cast<long long>(cfg.iterations));
  return 0;
}

int cmd_render(const std::string& dataset, const std::string& run_dir, const std::string& out,
               const std::string& view_s, int k, uint64_t seed, int opt_steps, double opt_lr) {
  const rn::SceneDataset ds = rn::load_dataset(dataset);
  LoadedField lf;
  load_field(lf, run_dir, ds);
  const rn::CameraView& view = pick_view(ds, view_s);
  const int k_total = k > 0 ? k : lf.cfg.k_total;

  rn::NerfRender render;
  if (opt_steps > 0) {
    const rn::CodeOptResult r = rn::optimize_test_code(
        *lf.field, view, ds.config.t_near, ds.config.t_far, k_total, opt_steps, opt_lr, seed);
    render = rn::render_image(*lf.field, view.intr, view.pose, ds.config.t_near,
                              ds.config.t_far, k_total, seed,
                              lf.cfg.field.latent_dim > 0 ? &r.code : nullptr);
    std::printf("optimized code: psnr %.3f dB (zero-code %.3f dB)\n", r.psnr_opt, r.psnr_zero);
  } else {
    render = rn::render_image(*lf.field, view.intr, view.pose, ds.config.t_near,
                              ds.config.t_far, k_total, seed);
  }
  rn::save_ppm(render.image, out);
  const std::string depth_path = out + ".depth";
  rn::save_depth(render.depth, depth_path);
  std::printf("rendered %s -> %s (+ %s), psnr %.3f dB\n", view_s.c_str(), out.c_str(),
              depth_path.c_str(), rn::psnr(render.image, view.image));
  return 0;
}

int cmd_evaluate(const std::string& dataset, const std::string& run_dir, const std::string& out,
                 int k, uint64_t seed, int opt_steps, double opt_lr, double heatmap_scale) {
  const rn::SceneDataset ds = rn::load_dataset(dataset);
  rn::require(!ds.test.empty(), "dataset has no test views to evaluate");
  LoadedField lf;
  load_field(lf, run_dir, ds);
  const int k_total = k > 0 ? k : lf.cfg.k_total;
  fs::create_directories(out);

  std::string table = "name\tpsnr\tpsnr_opt\tssim\tdepth_rmse\n";
  double m_psnr = 0, m_opt = 0, m_ssim = 0, m_rmse = 0;
  for (size_t i = 0; i < ds.test.size(); ++i) {
    const rn::CameraView& v = ds.test[i];
    const uint64_t vseed = rn::derive_seed(seed, i);
    const rn::NerfRender r = rn::render_image(*lf.field, v.intr, v.pose, ds.config.t_near,
                                              ds.config.t_far, k_total, vseed);
    double p = rn::psnr(r.image, v.image);
    double p_opt = p;
    if (opt_steps > 0)
      p_opt = rn::optimize_test_code(*lf.field, v, ds.config.t_near, ds.config.t_far, k_total,
                                     opt_steps, opt_lr, vseed)
                  .psnr_opt;
    const double s = rn::ssim(r.image, v.image);
    const double d = rn::depth_rmse(r.depth, v.gt_depth);
    char name[32];
    std::snprintf(name, sizeof name, "test_%03zu", i);
    table += std::string(name) + "\t" + fmt(p) + "\t" + fmt(p_opt) + "\t" + fmt(s) + "\t" +
             fmt(d) + "\n";
    m_psnr += p / static_cast<double>(ds.test.size());
    m_opt += p_opt / static_cast<double>(ds.test.size());
    m_ssim += s / static_cast<double>(ds.test.size());
    m_rmse += d / static_cast<double>(ds.test.size());
    rn::save_ppm(r.image, out + "/" + name + "_render.ppm");
    rn::save_ppm(rn::depth_error_heatmap(r.depth, v.gt_depth, heatmap_scale),
                 out + "/" + name + "_depth_error.ppm");
  }
  table += "mean\t" + fmt(m_psnr) + "\t" + fmt(m_opt) + "\t" + fmt(m_ssim) + "\t" +
           fmt(m_rmse) + "\n";
  std::ofstream os(out + "/metrics.tsv");
  rn::require(static_cast<bool>(os), "cannot write '", out, "/metrics.tsv'");
  os << table;
  std::fputs(table.c_str(), stdout);
  return 0;
}

int cmd_density_sweep(const std::string& dataset, const std::string& net_dir,
                      const std::string& out, uint64_t seed, std::vector<double> densities,
                      rn::TrainConfig base, std::vector<std::string> variants) {
  const rn::SceneDataset ds = rn::load_dataset(dataset);
  rn::require(!ds.test.empty(), "dataset has no test views to evaluate");
  fs::create_directories(out);
  base.seed = seed;

  rn::CompletionConfig ccfg = load_completion_config(net_dir + "/completion_meta.json");
  rn::ParamStore net_store;
  rn::Rng init(0);
  rn::CompletionNet net(net_store, ccfg, init);
  rn::load_checkpoint(net_store, net_dir + "/completion.rnck");

  std::string table = "variant\tdensity\tpsnr\tssim\tdepth_rmse\n";
  for (double density : densities) {
    rn::SparseConfig scfg;
    scfg.density = density;
    scfg.t_near = ds.config.t_near;
    scfg.t_far = ds.config.t_far;
    const rn::SparseSim sim =
        rn::simulate_dataset_sparse(ds, scfg, rn::kDefaultNoise, rn::derive_seed(seed, 0xD5UL));
    for (const std::string& vname : variants) {
      const rn::Variant variant = rn::variant_from_name(vname);
      std::vector<rn::DepthPrior> priors =
          variant == rn::Variant::kNoCompletion
              ? rn::sparse_only_priors(sim.result.maps, sim.fitted)
              : rn::completed_priors(net, ds.train, sim.result.maps);
      std::vector<rn::DepthMap> pz, ps;
      for (auto& p : priors) {
        pz.push_back(std::move(p.z));
        ps.push_back(std::move(p.s));
      }
      const rn::TrainConfig cfg = rn::variant_train_config(variant, base);
      rn::NerfTrainer trainer(ds, std::move(pz), std::move(ps), cfg);
      trainer.train();
      const rn::EvalResult ev = rn::evaluate_views(trainer.field(), ds.test, ds.config.t_near,
                                                   ds.config.t_far, cfg.k_total,
                                                   rn::derive_seed(seed, 0xE7A1UL));
      char row[160];
      std::snprintf(row, sizeof row, "%s\t%.5f\t%.6f\t%.6f\t%.6f\n", vname.c_str(), density,
                    ev.mean.psnr, ev.mean.ssim, ev.mean.depth_rmse);
      table += row;
      std::fputs(row, stdout);
    }
  }
  std::ofstream os(out + "/sweep.tsv");
  rn::require(static_cast<bool>(os), "cannot write '", out, "/sweep.tsv'");
  os << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  rn::use_single_thread_blas();
  CLI::App app{"Depth-prior-guided radiance fields on synthetic rooms"};
  app.require_subcommand(1);

  uint64_t seed = 0;
  app.add_option("--seed", seed, "master seed for all randomness")->capture_default_str();

  // generate-scene ----------------------------------------------------------
  auto* gs = app.add_subcommand("generate-scene", "synthesize a room and render a dataset");
  std::string gs_out;
  rn::DatasetConfig dcfg;
  int gs_objects = 4;
  bool gs_no_quantize = false;
  gs->add_option("--out", gs_out, "output dataset directory")->required();
  gs->add_option("--n-train", dcfg.n_train, "training views")->capture_default_str();
  gs->add_option("--n-test", dcfg.n_test, "held-out views")->capture_default_str();
  gs->add_option("--width", dcfg.width, "image width")->capture_default_str();
  gs->add_option("--height", dcfg.height, "image height")->capture_default_str();
  gs->add_option("--fov", dcfg.fov_x_deg, "horizontal field of view, degrees")
      ->capture_default_str();
  gs->add_option("--radius", dcfg.ring_radius, "camera ring radius, meters")
      ->capture_default_str();
  gs->add_option("--pitch", dcfg.pitch_deg, "downward pitch, degrees")->capture_default_str();
  gs->add_option("--t-near", dcfg.t_near, "near plane, meters")->capture_default_str();
  gs->add_option("--t-far", dcfg.t_far, "far plane, meters")->capture_default_str();
  gs->add_option("--intensity-amplitude", dcfg.intensity_amplitude,
                 "per-view brightness offset range")
      ->capture_default_str();
  gs->add_option("--objects", gs_objects, "boxes/spheres placed in the room")
      ->capture_default_str();
  gs->add_flag("--no-quantize", gs_no_quantize, "skip the 8-bit image round trip");

  // simulate-sparse ---------------------------------------------------------
  auto* sim = app.add_subcommand("simulate-sparse", "feature-point sparse depth for a dataset");
  std::string sim_dataset, sim_out;
  rn::SparseConfig scfg;
  sim->add_option("--dataset", sim_dataset, "dataset directory")->required();
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--density", scfg.density, "target valid-pixel fraction")
      ->capture_default_str();
  sim->add_option("--outlier-rate", scfg.outlier_rate, "fraction of corrupted points")
      ->capture_default_str();
  sim->add_option("--keypoint-budget", scfg.keypoint_budget,
                  "per-view detections (0 = derive from density)")
      ->capture_default_str();

  // train-completion --------------------------------------------------------
  auto* tc = app.add_subcommand("train-completion", "train the sparse-to-dense network");
  std::string tc_out;
  int tc_scenes = 6, tc_val_scenes = 1, tc_views = 4;
  int64_t tc_w = 64, tc_h = 80;
  double tc_density = 0.0004;
  rn::TrainCompletionConfig tcfg;
  tcfg.epochs = 30;
  tc->add_option("--out", tc_out, "output directory")->required();
  tc->add_option("--scenes", tc_scenes, "training scenes")->capture_default_str();
  tc->add_option("--val-scenes", tc_val_scenes, "validation scenes")->capture_default_str();
  tc->add_option("--views-per-scene", tc_views, "views rendered per scene")
      ->capture_default_str();
  tc->add_option("--width", tc_w, "sample width")->capture_default_str();
  tc->add_option("--height", tc_h, "sample height")->capture_default_str();
  tc->add_option("--density", tc_density, "sparse density for the corpus")
      ->capture_default_str();
  tc->add_option("--epochs", tcfg.epochs, "training epochs")->capture_default_str();
  tc->add_option("--batch", tcfg.batch, "batch size")->capture_default_str();
  tc->add_option("--lr", tcfg.lr, "learning rate")->capture_default_str();

  // export-priors -----------------------------------------------------------
  auto* ep = app.add_subcommand("export-priors", "complete sparse depth into dense priors");
  std::string ep_dataset, ep_sparse, ep_net, ep_out;
  bool ep_sparse_only = false;
  ep->add_option("--dataset", ep_dataset, "dataset directory")->required();
  ep->add_option("--sparse", ep_sparse, "simulate-sparse output directory")->required();
  ep->add_option("--net", ep_net, "train-completion output directory");
  ep->add_option("--out", ep_out, "output directory")->required();
  ep->add_flag("--sparse-only", ep_sparse_only,
               "skip completion; priors only at observed pixels");

  // train-nerf --------------------------------------------------------------
  auto* tn = app.add_subcommand("train-nerf", "optimize a radiance field");
  std::string tn_dataset, tn_priors, tn_out, tn_variant = "full";
  rn::TrainConfig base;
  double tn_lambda = 0.0;
  tn->add_option("--dataset", tn_dataset, "dataset directory")->required();
  tn->add_option("--priors", tn_priors, "export-priors output directory");
  tn->add_option("--out", tn_out, "output directory")->required();
  tn->add_option("--variant", tn_variant,
                 "full, no_completion, no_uncertainty, no_gnll, no_latent, plain_nerf")
      ->capture_default_str();
  tn->add_option("--iterations", base.iterations, "training iterations")
      ->capture_default_str();
  tn->add_option("--batch", base.batch, "rays per iteration")->capture_default_str();
  tn->add_option("--lr", base.lr, "learning rate")->capture_default_str();
  tn->add_option("--k", base.k_total, "samples per ray")->capture_default_str();
  tn->add_option("--log-every", base.log_every, "validation/checkpoint cadence")
      ->capture_default_str();
  auto* lam = tn->add_option("--lambda", tn_lambda, "override the variant's depth weight");
  tn->add_option("--freqs", base.field.freqs, "positional encoding frequencies")
      ->capture_default_str();
  tn->add_option("--trunk-layers", base.field.trunk_layers, "trunk depth")
      ->capture_default_str();
  tn->add_option("--trunk-width", base.field.trunk_width, "trunk width")
      ->capture_default_str();
  tn->add_option("--skip-layer", base.field.skip_layer, "encoding re-injection layer")
      ->capture_default_str();
  tn->add_option("--view-width", base.field.view_width, "view branch width")
      ->capture_default_str();
  tn->add_option("--latent-dim", base.field.latent_dim, "appearance code size")
      ->capture_default_str();

  // render ------------------------------------------------------------------
  auto* rd = app.add_subcommand("render", "render one view from a trained field");
  std::string rd_dataset, rd_run, rd_out, rd_view = "test:0";
  int rd_k = 0, rd_opt_steps = 0;
  double rd_opt_lr = 0.01;
  rd->add_option("--dataset", rd_dataset, "dataset directory")->required();
  rd->add_option("--checkpoint", rd_run, "train-nerf output directory")->required();
  rd->add_option("--out", rd_out, "output image (.ppm; depth saved alongside)")->required();
  rd->add_option("--view", rd_view, "view to render, e.g. test:0 or train:2")
      ->capture_default_str();
  rd->add_option("--k", rd_k, "samples per ray (0 = training value)")->capture_default_str();
  rd->add_option("--optimize-code", rd_opt_steps, "latent-code steps before rendering")
      ->capture_default_str();
  rd->add_option("--optimize-lr", rd_opt_lr, "latent-code learning rate")
      ->capture_default_str();

  // evaluate ----------------------------------------------------------------
  auto* ev = app.add_subcommand("evaluate", "metrics table + depth-error maps on test views");
  std::string ev_dataset, ev_run, ev_out;
  int ev_k = 0, ev_opt_steps = 0;
  double ev_opt_lr = 0.01, ev_scale = 0.5;
  ev->add_option("--dataset", ev_dataset, "dataset directory")->required();
  ev->add_option("--checkpoint", ev_run, "train-nerf output directory")->required();
  ev->add_option("--out", ev_out, "output directory")->required();
  ev->add_option("--k", ev_k, "samples per ray (0 = training value)")->capture_default_str();
  ev->add_option("--opt-code-steps", ev_opt_steps,
                 "latent-code steps for the psnr_opt column (0 = zero code)")
      ->capture_default_str();
  ev->add_option("--opt-code-lr", ev_opt_lr, "latent-code learning rate")
      ->capture_default_str();
  ev->add_option("--heatmap-scale", ev_scale, "depth-error color scale, meters")
      ->capture_default_str();

  // density-sweep -----------------------------------------------------------
  auto* dsw = app.add_subcommand("density-sweep",
                                 "retrain at several sparse densities and tabulate metrics");
  std::string dsw_dataset, dsw_net, dsw_out;
  std::vector<double> dsw_densities = {0.001, 0.0005, 0.0001};
  std::vector<std::string> dsw_variants = {"full", "no_completion"};
  rn::TrainConfig dsw_base;
  dsw->add_option("--dataset", dsw_dataset, "dataset directory")->required();
  dsw->add_option("--net", dsw_net, "train-completion output directory")->required();
  dsw->add_option("--out", dsw_out, "output directory")->required();
  dsw->add_option("--densities", dsw_densities, "sparse densities to sweep")
      ->capture_default_str();
  dsw->add_option("--variants", dsw_variants, "variants per density")->capture_default_str();
  dsw->add_option("--iterations", dsw_base.iterations, "iterations per run")
      ->capture_default_str();
  dsw->add_option("--batch", dsw_base.batch, "rays per iteration")->capture_default_str();
  dsw->add_option("--k", dsw_base.k_total, "samples per ray")->capture_default_str();
  dsw->add_option("--lr", dsw_base.lr, "learning rate")->capture_default_str();
  dsw->add_option("--freqs", dsw_base.field.freqs, "positional encoding frequencies")
      ->capture_default_str();
  dsw->add_option("--trunk-layers", dsw_base.field.trunk_layers, "trunk depth")
      ->capture_default_str();
  dsw->add_option("--trunk-width", dsw_base.field.trunk_width, "trunk width")
      ->capture_default_str();
  dsw->add_option("--skip-layer", dsw_base.field.skip_layer, "encoding re-injection layer")
      ->capture_default_str();
  dsw->add_option("--view-width", dsw_base.field.view_width, "view branch width")
      ->capture_default_str();
  dsw->add_option("--latent-dim", dsw_base.field.latent_dim, "appearance code size")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gs->parsed()) {
      dcfg.quantize = !gs_no_quantize;
      return cmd_generate_scene(gs_out, seed, dcfg, gs_objects);
    }
    if (sim->parsed()) return cmd_simulate_sparse(sim_dataset, sim_out, seed, scfg);
    if (tc->parsed())
      return cmd_train_completion(tc_out, seed, tc_scenes, tc_val_scenes, tc_views, tc_w, tc_h,
                                  tc_density, tcfg);
    if (ep->parsed())
      return cmd_export_priors(ep_dataset, ep_sparse, ep_net, ep_out, ep_sparse_only);
    if (tn->parsed())
      return cmd_train_nerf(tn_dataset, tn_priors, tn_out, tn_variant, seed, base, tn_lambda,
                            lam->count() > 0);
    if (rd->parsed())
      return cmd_render(rd_dataset, rd_run, rd_out, rd_view, rd_k, seed, rd_opt_steps,
                        rd_opt_lr);
    if (ev->parsed())
      return cmd_evaluate(ev_dataset, ev_run, ev_out, ev_k, seed, ev_opt_steps, ev_opt_lr,
                          ev_scale);
    if (dsw->parsed())
      return cmd_density_sweep(dsw_dataset, dsw_net, dsw_out, seed, dsw_densities, dsw_base,
                               dsw_variants);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
