#pragma once

// Synthetic room scenes with analytic ground truth. A scene is a closed
// axis-aligned room containing floating textured primitives (boxes and
// spheres); tracing a ray yields exact depth and a shaded albedo, which
// stand in for sensor depth and captured images.
//
// Texturing is procedural and world-anchored. One wall is deliberately left
// textureless (flat albedo) to create the low-texture region that makes
// sparse depth scarce there. Shading is Lambertian with a fixed ambient and
// one directional light, so color depends only on the surface point — there
// are no view-dependent effects in the ground truth.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "roomnerf/camera.hpp"
#include "roomnerf/image.hpp"
#include "roomnerf/rng.hpp"

namespace roomnerf {

enum class Pattern : int { kFlat = 0, kChecks = 1, kStripes = 2, kRings = 3, kSmooth = 4 };

struct Material {
  Vec3 base;    // albedo, each channel in [0,1]
  Vec3 accent;  // second palette color for patterned surfaces
  Pattern pattern = Pattern::kFlat;
  double scale = 1.0;  // pattern frequency, cycles per meter
};

struct SceneBox {
  Vec3 min, max;
  int material = 0;
};

struct SceneSphere {
  Vec3 center;
  double radius = 0.0;
  int material = 0;
};

struct SceneGeometry {
  Vec3 room_min, room_max;
  std::vector<Material> materials;  // entries 0..5 are the walls, see wall order below
  std::vector<SceneBox> boxes;
  std::vector<SceneSphere> spheres;
  uint64_t seed = 0;

  Vec3 center() const { return (room_min + room_max) * 0.5; }
  Vec3 size() const { return room_max - room_min; }
  double diagonal() const { return size().norm(); }
};

// Wall material order: x-min, x-max, y-min, y-max, floor (z-min), ceiling.
inline constexpr int kWallXMin = 0, kWallXMax = 1, kWallYMin = 2, kWallYMax = 3,
                     kWallFloor = 4, kWallCeiling = 5;

struct SceneSpec {
  Vec3 room_size{6.0, 6.0, 3.0};
  int object_count = 4;
  // Horizontal keep-out radius around the room center reserved for the
  // camera rig; objects must stay outside it.
  double keepout_radius = 1.7;
};

namespace detail {

inline Vec3 random_color(Rng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

inline double pattern_weight(const Material& m, double u, double v) {
  const double s = m.scale;
  switch (m.pattern) {
    case Pattern::kFlat:
      return 0.0;
    case Pattern::kChecks: {
      const auto iu = static_cast<int64_t>(std::floor(u * s));
      const auto iv = static_cast<int64_t>(std::floor(v * s));
      return ((iu + iv) & 1) ? 1.0 : 0.0;
    }
    case Pattern::kStripes: {
      const auto iu = static_cast<int64_t>(std::floor((u + v) * s));
      return (iu & 1) ? 1.0 : 0.0;
    }
    case Pattern::kRings:
      return 0.5 + 0.5 * std::sin(2.0 * kPi * s * std::sqrt(u * u + v * v));
    case Pattern::kSmooth:
      return 0.5 + 0.5 * std::sin(2.0 * kPi * s * u) * std::sin(2.0 * kPi * s * v);
  }
  return 0.0;
}

// Pattern coordinates: the two world axes orthogonal to the dominant normal
// axis, so axis-aligned faces get stable, seam-free textures.
inline void pattern_uv(const Vec3& p, const Vec3& n, double& u, double& v) {
  const double ax = std::abs(n.x), ay = std::abs(n.y), az = std::abs(n.z);
  if (ax >= ay && ax >= az) {
    u = p.y;
    v = p.z;
  } else if (ay >= ax && ay >= az) {
    u = p.x;
    v = p.z;
  } else {
    u = p.x;
    v = p.y;
  }
}

}  // namespace detail

inline Vec3 surface_albedo(const SceneGeometry& scene, int material, const Vec3& p,
                           const Vec3& n) {
  const Material& m = scene.materials[static_cast<size_t>(material)];
  double u, v;
  detail::pattern_uv(p, n, u, v);
  const double w = detail::pattern_weight(m, u, v);
  Vec3 a = m.base * (1.0 - w) + m.accent * w;
  a.x = std::clamp(a.x, 0.0, 1.0);
  a.y = std::clamp(a.y, 0.0, 1.0);
  a.z = std::clamp(a.z, 0.0, 1.0);
  return a;
}

inline constexpr double kAmbient = 0.45;
inline constexpr double kDiffuse = 0.55;
inline const Vec3 kLightDir = Vec3{0.35, 0.25, 0.90}.normalized();

inline Vec3 shade(const Vec3& albedo, const Vec3& normal) {
  const double lambert = std::max(0.0, normal.dot(kLightDir));
  return albedo * (kAmbient + kDiffuse * lambert);
}

// ---------------------------------------------------------------------------
// scene generation

inline SceneGeometry generate_scene(uint64_t seed, const SceneSpec& spec) {
  require(spec.room_size.x > 0 && spec.room_size.y > 0 && spec.room_size.z > 0,
          "generate_scene: room dimensions must be positive");
  require(spec.object_count >= 0, "generate_scene: negative object count");
  Rng rng(derive_seed(seed, 0xA11CE));
  SceneGeometry scene;
  scene.seed = seed;
  scene.room_min = {0, 0, 0};
  scene.room_max = spec.room_size;

  // Walls: x-min stays flat/textureless, the rest get varied sharp and
  // smooth patterns at different frequencies.
  auto wall = [&](Pattern p, double scale) {
    Material m;
    m.base = detail::random_color(rng, 0.25, 0.85);
    m.accent = detail::random_color(rng, 0.15, 0.95);
    m.pattern = p;
    m.scale = scale;
    return m;
  };
  scene.materials.push_back(wall(Pattern::kFlat, 1.0));           // x-min: textureless
  scene.materials.push_back(wall(Pattern::kChecks, 1.4));         // x-max
  scene.materials.push_back(wall(Pattern::kStripes, 1.1));        // y-min
  scene.materials.push_back(wall(Pattern::kSmooth, 0.6));         // y-max
  scene.materials.push_back(wall(Pattern::kChecks, 2.0));         // floor
  scene.materials.push_back(wall(Pattern::kSmooth, 0.4));         // ceiling

  const double margin = 0.3;
  const Vec3 c = scene.center();
  const Pattern obj_patterns[4] = {Pattern::kChecks, Pattern::kRings, Pattern::kStripes,
                                   Pattern::kSmooth};
  for (int i = 0; i < spec.object_count; ++i) {
    Material m;
    m.base = detail::random_color(rng, 0.2, 0.9);
    m.accent = detail::random_color(rng, 0.1, 0.95);
    m.pattern = obj_patterns[i % 4];
    m.scale = rng.uniform(1.5, 4.0);
    scene.materials.push_back(m);
    const int mat = static_cast<int>(scene.materials.size()) - 1;

    const bool is_box = (i % 2) == 0;
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      if (is_box) {
        Vec3 half{rng.uniform(0.15, 0.45), rng.uniform(0.15, 0.45), rng.uniform(0.15, 0.45)};
        Vec3 pos{rng.uniform(scene.room_min.x + margin + half.x,
                             scene.room_max.x - margin - half.x),
                 rng.uniform(scene.room_min.y + margin + half.y,
                             scene.room_max.y - margin - half.y),
                 rng.uniform(scene.room_min.z + margin + half.z,
                             scene.room_max.z - margin - half.z)};
        const double horiz =
            std::hypot(pos.x - c.x, pos.y - c.y) - std::hypot(half.x, half.y);
        if (horiz < spec.keepout_radius) continue;
        scene.boxes.push_back({pos - half, pos + half, mat});
        placed = true;
      } else {
        const double r = rng.uniform(0.15, 0.45);
        Vec3 pos{rng.uniform(scene.room_min.x + margin + r, scene.room_max.x - margin - r),
                 rng.uniform(scene.room_min.y + margin + r, scene.room_max.y - margin - r),
                 rng.uniform(scene.room_min.z + margin + r, scene.room_max.z - margin - r)};
        if (std::hypot(pos.x - c.x, pos.y - c.y) - r < spec.keepout_radius) continue;
        scene.spheres.push_back({pos, r, mat});
        placed = true;
      }
    }
    require(placed, "generate_scene: could not place object ", i,
            " inside the room after bounded retries; room ", spec.room_size.x, "x",
            spec.room_size.y, "x", spec.room_size.z, " with keepout ", spec.keepout_radius,
            " is too constrained");
  }
  return scene;
}

// ---------------------------------------------------------------------------
// ray tracing

struct TraceResult {
  bool hit = false;
  double depth = 0.0;  // meters along the unit ray direction
  Vec3 color;          // shaded, in [0,1]^3
  Vec3 normal;
  int material = -1;
};

namespace detail {

constexpr double kTraceEps = 1e-9;

// Entry hit of a ray against an AABB from outside (or exit if inside).
inline bool hit_aabb(const Vec3& o, const Vec3& d, const Vec3& bmin, const Vec3& bmax,
                     double& t_hit, Vec3& normal) {
  double tmin = -1e300, tmax = 1e300;
  int axis_min = -1;
  for (int ax = 0; ax < 3; ++ax) {
    const double oa = ax == 0 ? o.x : (ax == 1 ? o.y : o.z);
    const double da = ax == 0 ? d.x : (ax == 1 ? d.y : d.z);
    const double lo = ax == 0 ? bmin.x : (ax == 1 ? bmin.y : bmin.z);
    const double hi = ax == 0 ? bmax.x : (ax == 1 ? bmax.y : bmax.z);
    if (std::abs(da) < 1e-15) {
      if (oa < lo || oa > hi) return false;
      continue;
    }
    double t0 = (lo - oa) / da, t1 = (hi - oa) / da;
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      axis_min = ax;
    }
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return false;
  }
  if (tmax < kTraceEps) return false;
  if (tmin > kTraceEps) {
    t_hit = tmin;
    double sign = (axis_min == 0 ? d.x : (axis_min == 1 ? d.y : d.z)) > 0 ? -1.0 : 1.0;
    normal = {axis_min == 0 ? sign : 0.0, axis_min == 1 ? sign : 0.0,
              axis_min == 2 ? sign : 0.0};
    return true;
  }
  return false;  // origin inside the box; callers never need that case
}

// Exit of a ray through the room walls, for origins inside the room.
inline bool exit_room(const Vec3& o, const Vec3& d, const Vec3& bmin, const Vec3& bmax,
                      double& t_hit, Vec3& normal, int& wall) {
  double best = 1e300;
  int best_axis = -1;
  double best_sign = 0.0;
  for (int ax = 0; ax < 3; ++ax) {
    const double oa = ax == 0 ? o.x : (ax == 1 ? o.y : o.z);
    const double da = ax == 0 ? d.x : (ax == 1 ? d.y : d.z);
    if (std::abs(da) < 1e-15) continue;
    const double lo = ax == 0 ? bmin.x : (ax == 1 ? bmin.y : bmin.z);
    const double hi = ax == 0 ? bmax.x : (ax == 1 ? bmax.y : bmax.z);
    const double t = da > 0 ? (hi - oa) / da : (lo - oa) / da;
    if (t > kTraceEps && t < best) {
      best = t;
      best_axis = ax;
      best_sign = da > 0 ? -1.0 : 1.0;  // inward-facing normal
    }
  }
  if (best_axis < 0) return false;
  t_hit = best;
  normal = {best_axis == 0 ? best_sign : 0.0, best_axis == 1 ? best_sign : 0.0,
            best_axis == 2 ? best_sign : 0.0};
  // map (axis, direction) to the wall material slot
  if (best_axis == 0) wall = best_sign > 0 ? kWallXMin : kWallXMax;
  else if (best_axis == 1) wall = best_sign > 0 ? kWallYMin : kWallYMax;
  else wall = best_sign > 0 ? kWallFloor : kWallCeiling;
  return true;
}

inline bool hit_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r, double& t_hit) {
  const Vec3 oc = o - c;
  const double b = oc.dot(d);
  const double disc = b * b - (oc.dot(oc) - r * r);
  if (disc < 0) return false;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t < kTraceEps) t = -b + sq;
  if (t < kTraceEps) return false;
  t_hit = t;
  return true;
}

}  // namespace detail

inline TraceResult trace_ground_truth(const SceneGeometry& scene, const Ray& ray) {
  TraceResult res;
  double best = 1e300;
  Vec3 best_normal;
  int best_mat = -1;

  double t;
  Vec3 n;
  int wall;
  if (detail::exit_room(ray.origin, ray.direction, scene.room_min, scene.room_max, t, n,
                        wall)) {
    best = t;
    best_normal = n;
    best_mat = wall;
  }
  for (const SceneBox& b : scene.boxes) {
    if (detail::hit_aabb(ray.origin, ray.direction, b.min, b.max, t, n) && t < best) {
      best = t;
      best_normal = n;
      best_mat = b.material;
    }
  }
  for (const SceneSphere& s : scene.spheres) {
    if (detail::hit_sphere(ray.origin, ray.direction, s.center, s.radius, t) && t < best) {
      best = t;
      best_mat = s.material;
      const Vec3 p = ray.origin + ray.direction * t;
      best_normal = (p - s.center) * (1.0 / s.radius);
    }
  }
  if (best_mat < 0) return res;  // outside a closed room, or degenerate ray
  res.hit = true;
  res.depth = best;
  res.normal = best_normal;
  res.material = best_mat;
  const Vec3 p = ray.origin + ray.direction * best;
  res.color = shade(surface_albedo(scene, best_mat, p, best_normal), best_normal);
  return res;
}

struct RenderedView {
  Image image;
  DepthMap depth;
};

inline RenderedView render_view(const SceneGeometry& scene, const Intrinsics& intr,
                                const Pose& pose, double t_near, double t_far) {
  RenderedView out{Image(intr.width, intr.height), DepthMap(intr.width, intr.height)};
  for (int64_t y = 0; y < intr.height; ++y)
    for (int64_t x = 0; x < intr.width; ++x) {
      const Ray ray = pixel_ray(intr, pose, static_cast<double>(x), static_cast<double>(y),
                                t_near, t_far);
      const TraceResult tr = trace_ground_truth(scene, ray);
      require(tr.hit, "render_view: interior ray escaped the closed room at pixel (", x, ",",
              y, ")");
      out.image.at(x, y, 0) = tr.color.x;
      out.image.at(x, y, 1) = tr.color.y;
      out.image.at(x, y, 2) = tr.color.z;
      out.depth.at(x, y) = tr.depth;
    }
  return out;
}

// ---------------------------------------------------------------------------
// camera rigs

// Cameras on a horizontal ring around the room center, looking outward with a
// slight downward pitch. angle_offset shifts the whole ring, which is how
// held-out views are staggered between training views.
inline std::vector<Pose> make_orbit_rig(const SceneGeometry& scene, int n_views,
                                        double ring_radius, double pitch_deg,
                                        double angle_offset_rad) {
  require(n_views >= 1, "make_orbit_rig: need at least one view");
  require(ring_radius > 0.0, "make_orbit_rig: ring radius must be positive");
  std::vector<Pose> poses;
  const Vec3 c = scene.center();
  const double pitch = pitch_deg * kPi / 180.0;
  for (int i = 0; i < n_views; ++i) {
    const double a = angle_offset_rad + 2.0 * kPi * i / n_views;
    const Vec3 eye = c + Vec3{ring_radius * std::cos(a), ring_radius * std::sin(a), 0.0};
    // Convergent rig: look across the room center (slightly pitched down), so
    // neighboring views share surface and feature points are co-visible.
    const Vec3 dir{-std::cos(a) * std::cos(pitch), -std::sin(a) * std::cos(pitch),
                   -std::sin(pitch)};
    poses.push_back(look_at(eye, eye + dir));
  }
  return poses;
}

// ---------------------------------------------------------------------------
// JSON serialization of the generated geometry

inline nlohmann::json scene_to_json(const SceneGeometry& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["room_min"] = {s.room_min.x, s.room_min.y, s.room_min.z};
  j["room_max"] = {s.room_max.x, s.room_max.y, s.room_max.z};
  for (const Material& m : s.materials)
    j["materials"].push_back({{"base", {m.base.x, m.base.y, m.base.z}},
                              {"accent", {m.accent.x, m.accent.y, m.accent.z}},
                              {"pattern", static_cast<int>(m.pattern)},
                              {"scale", m.scale}});
  j["boxes"] = nlohmann::json::array();
  for (const SceneBox& b : s.boxes)
    j["boxes"].push_back({{"min", {b.min.x, b.min.y, b.min.z}},
                          {"max", {b.max.x, b.max.y, b.max.z}},
                          {"material", b.material}});
  j["spheres"] = nlohmann::json::array();
  for (const SceneSphere& sp : s.spheres)
    j["spheres"].push_back({{"center", {sp.center.x, sp.center.y, sp.center.z}},
                            {"radius", sp.radius},
                            {"material", sp.material}});
  return j;
}

inline SceneGeometry scene_from_json(const nlohmann::json& j) {
  auto vec3 = [](const nlohmann::json& a) {
    require(a.is_array() && a.size() == 3, "scene_from_json: expected 3-vector");
    return Vec3{a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
  };
  SceneGeometry s;
  s.seed = j.at("seed").get<uint64_t>();
  s.room_min = vec3(j.at("room_min"));
  s.room_max = vec3(j.at("room_max"));
  for (const auto& mj : j.at("materials")) {
    Material m;
    m.base = vec3(mj.at("base"));
    m.accent = vec3(mj.at("accent"));
    m.pattern = static_cast<Pattern>(mj.at("pattern").get<int>());
    m.scale = mj.at("scale").get<double>();
    s.materials.push_back(m);
  }
  for (const auto& bj : j.at("boxes"))
    s.boxes.push_back({vec3(bj.at("min")), vec3(bj.at("max")), bj.at("material").get<int>()});
  for (const auto& sj : j.at("spheres"))
    s.spheres.push_back(
        {vec3(sj.at("center")), sj.at("radius").get<double>(), sj.at("material").get<int>()});
  return s;
}

}  // namespace roomnerf
