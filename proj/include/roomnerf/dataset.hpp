#pragma once

// Rendered multi-view datasets over synthetic rooms: a training ring and an
// interleaved held-out ring, each view carrying the observed image (optionally
// 8-bit quantized and brightness-shifted per view) plus dense ground-truth
// depth. Per-view additive intensity offsets emulate exposure/white-balance
// drift between captures; they are baked into the observed images only, never
// into depth, so appearance-code machinery has something real to absorb.
//
// Disk layout (one directory per dataset):
//   meta.json                    scene geometry, config, per-view offsets
//   train_cameras.txt/test_...   camera records
//   train_000.ppm / .depth       observed image + ground-truth depth per view

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "roomnerf/image.hpp"
#include "roomnerf/scene.hpp"

namespace roomnerf {

struct CameraView {
  Image image;
  DepthMap gt_depth;
  Intrinsics intr;
  Pose pose;
  double intensity_offset = 0.0;  // additive shift already applied to image
};

struct DatasetConfig {
  int n_train = 8;
  int n_test = 4;
  int64_t width = 64, height = 64;
  double fov_x_deg = 70.0;
  double ring_radius = 1.5;
  double pitch_deg = 8.0;
  double t_near = 0.05, t_far = 10.0;
  double intensity_amplitude = 0.0;  // per-view offset drawn from [-a, a]
  bool quantize = true;              // 8-bit round trip, like captured frames
};

struct SceneDataset {
  SceneGeometry scene;
  DatasetConfig config;
  std::vector<CameraView> train;
  std::vector<CameraView> test;
};

namespace detail {

inline std::vector<CameraView> render_ring(const SceneGeometry& scene, const DatasetConfig& cfg,
                                           int n_views, double angle_offset, Rng& rng) {
  const Intrinsics intr = Intrinsics::from_fov(cfg.width, cfg.height, cfg.fov_x_deg);
  const std::vector<Pose> poses =
      make_orbit_rig(scene, n_views, cfg.ring_radius, cfg.pitch_deg, angle_offset);
  std::vector<CameraView> views;
  for (const Pose& pose : poses) {
    CameraView v;
    v.intr = intr;
    v.pose = pose;
    RenderedView r = render_view(scene, intr, pose, cfg.t_near, cfg.t_far);
    v.gt_depth = std::move(r.depth);
    v.intensity_offset =
        cfg.intensity_amplitude > 0.0
            ? rng.uniform(-cfg.intensity_amplitude, cfg.intensity_amplitude)
            : 0.0;
    for (double& c : r.image.data) c = std::clamp(c + v.intensity_offset, 0.0, 1.0);
    v.image = cfg.quantize ? quantize_image(r.image) : std::move(r.image);
    views.push_back(std::move(v));
  }
  return views;
}

inline std::string view_stem(const std::string& split, size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu", split.c_str(), i);
  return buf;
}

}  // namespace detail

// Renders the train ring and a test ring rotated half a train step, so test
// views sit between training views.
inline SceneDataset make_scene_dataset(const SceneGeometry& scene, const DatasetConfig& cfg,
                                       uint64_t seed) {
  require(cfg.n_train >= 1 && cfg.n_test >= 0, "make_scene_dataset: bad view counts ",
          cfg.n_train, "/", cfg.n_test);
  require(cfg.intensity_amplitude >= 0.0 && cfg.intensity_amplitude < 0.5,
          "make_scene_dataset: intensity amplitude ", cfg.intensity_amplitude,
          " outside [0, 0.5)");
  SceneDataset ds;
  ds.scene = scene;
  ds.config = cfg;
  Rng rng(derive_seed(seed, 0xDA7A5E7UL));
  ds.train = detail::render_ring(scene, cfg, cfg.n_train, 0.0, rng);
  if (cfg.n_test > 0)
    ds.test = detail::render_ring(scene, cfg, cfg.n_test, kPi / cfg.n_train, rng);
  return ds;
}

inline nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
  return {{"n_train", c.n_train},
          {"n_test", c.n_test},
          {"width", c.width},
          {"height", c.height},
          {"fov_x_deg", c.fov_x_deg},
          {"ring_radius", c.ring_radius},
          {"pitch_deg", c.pitch_deg},
          {"t_near", c.t_near},
          {"t_far", c.t_far},
          {"intensity_amplitude", c.intensity_amplitude},
          {"quantize", c.quantize}};
}

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.n_train = j.at("n_train").get<int>();
  c.n_test = j.at("n_test").get<int>();
  c.width = j.at("width").get<int64_t>();
  c.height = j.at("height").get<int64_t>();
  c.fov_x_deg = j.at("fov_x_deg").get<double>();
  c.ring_radius = j.at("ring_radius").get<double>();
  c.pitch_deg = j.at("pitch_deg").get<double>();
  c.t_near = j.at("t_near").get<double>();
  c.t_far = j.at("t_far").get<double>();
  c.intensity_amplitude = j.at("intensity_amplitude").get<double>();
  c.quantize = j.at("quantize").get<bool>();
  return c;
}

inline void save_dataset(const SceneDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["scene"] = scene_to_json(ds.scene);
  meta["config"] = dataset_config_to_json(ds.config);
  for (const auto& v : ds.train) meta["train_offsets"].push_back(v.intensity_offset);
  meta["test_offsets"] = nlohmann::json::array();
  for (const auto& v : ds.test) meta["test_offsets"].push_back(v.intensity_offset);
  std::ofstream os(dir + "/meta.json");
  require(static_cast<bool>(os), "save_dataset: cannot write '", dir, "/meta.json'");
  os << meta.dump(2) << "\n";

  auto save_split = [&](const std::vector<CameraView>& views, const std::string& split) {
    std::vector<CameraRecord> cams;
    for (size_t i = 0; i < views.size(); ++i) {
      cams.push_back({views[i].intr, views[i].pose});
      const std::string stem = dir + "/" + detail::view_stem(split, i);
      save_ppm(views[i].image, stem + ".ppm");
      save_depth(views[i].gt_depth, stem + ".depth");
    }
    save_cameras(cams, dir + "/" + split + "_cameras.txt");
  };
  save_split(ds.train, "train");
  save_split(ds.test, "test");
}

inline SceneDataset load_dataset(const std::string& dir) {
  std::ifstream is(dir + "/meta.json");
  require(static_cast<bool>(is), "load_dataset: cannot open '", dir, "/meta.json'");
  nlohmann::json meta;
  is >> meta;
  SceneDataset ds;
  ds.scene = scene_from_json(meta.at("scene"));
  ds.config = dataset_config_from_json(meta.at("config"));
  auto load_split = [&](const std::string& split, const nlohmann::json& offsets) {
    const std::vector<CameraRecord> cams = load_cameras(dir + "/" + split + "_cameras.txt");
    require(offsets.size() == cams.size(), "load_dataset: ", split, " has ", cams.size(),
            " cameras but ", offsets.size(), " offsets");
    std::vector<CameraView> views;
    for (size_t i = 0; i < cams.size(); ++i) {
      CameraView v;
      v.intr = cams[i].intrinsics;
      v.pose = cams[i].pose;
      const std::string stem = dir + "/" + detail::view_stem(split, i);
      v.image = load_ppm(stem + ".ppm");
      v.gt_depth = load_depth(stem + ".depth");
      v.intensity_offset = offsets[i].get<double>();
      views.push_back(std::move(v));
    }
    return views;
  };
  ds.train = load_split("train", meta.at("train_offsets"));
  ds.test = load_split("test", meta.at("test_offsets"));
  return ds;
}

// Numbered sets of depth-format maps (sparse inputs, prior means, prior stds).
inline void save_depth_set(const std::vector<DepthMap>& maps, const std::string& dir,
                           const std::string& stem) {
  std::filesystem::create_directories(dir);
  for (size_t i = 0; i < maps.size(); ++i)
    save_depth(maps[i], dir + "/" + detail::view_stem(stem, i) + ".depth");
}

inline std::vector<DepthMap> load_depth_set(const std::string& dir, const std::string& stem,
                                            size_t count) {
  std::vector<DepthMap> maps;
  for (size_t i = 0; i < count; ++i)
    maps.push_back(load_depth(dir + "/" + detail::view_stem(stem, i) + ".depth"));
  return maps;
}

}  // namespace roomnerf
