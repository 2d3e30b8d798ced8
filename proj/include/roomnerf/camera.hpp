#pragma once

// Camera geometry: pinhole intrinsics, rigid poses, pixel rays, and point
// projection. Conventions used throughout:
//
//   - world frame is right-handed with +z up
//   - camera frame is +z forward (optical axis), +x right, +y down
//   - Pose stores camera-to-world rotation and the camera center in world
//   - "depth" always means Euclidean distance along the unit pixel ray, so a
//     point p seen by a camera at c has depth |p - c|
//
// Poses serialize either as full matrices (cameras.txt) or as the compact
// 6-vector [axis-angle rotation, translation] used by the pose text records.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "roomnerf/core.hpp"

namespace roomnerf {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double xx, double yy, double zz) : x(xx), y(yy), z(zz) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    require(n > 0.0, "Vec3: cannot normalize zero vector");
    return {x / n, y / n, z / n};
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Mat3 {
  // row-major
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
    Mat3 a;
    a.m[0] = r0.x; a.m[1] = r0.y; a.m[2] = r0.z;
    a.m[3] = r1.x; a.m[4] = r1.y; a.m[5] = r1.z;
    a.m[6] = r2.x; a.m[7] = r2.y; a.m[8] = r2.z;
    return a;
  }
  static Mat3 from_cols(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
    Mat3 a;
    a.m[0] = c0.x; a.m[1] = c1.x; a.m[2] = c2.x;
    a.m[3] = c0.y; a.m[4] = c1.y; a.m[5] = c2.y;
    a.m[6] = c0.z; a.m[7] = c1.z; a.m[8] = c2.z;
    return a;
  }

  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }

  Vec3 col(int c) const { return {m[c], m[3 + c], m[6 + c]}; }
  Vec3 row(int r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
};

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  const Mat3 rtr = r.transposed() * r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::abs(rtr(i, j) - (i == j ? 1.0 : 0.0)) > tol) return false;
  return std::abs(r.det() - 1.0) <= tol;
}

struct Intrinsics {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int64_t width = 0, height = 0;

  Intrinsics() = default;
  Intrinsics(double fx_, double fy_, double cx_, double cy_, int64_t w, int64_t h)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
    require(fx > 0.0 && fy > 0.0, "Intrinsics: focal lengths must be positive, got fx=", fx,
            " fy=", fy);
    require(cx > 0.0 && cx < static_cast<double>(width), "Intrinsics: cx=", cx,
            " outside (0,", width, ")");
    require(cy > 0.0 && cy < static_cast<double>(height), "Intrinsics: cy=", cy,
            " outside (0,", height, ")");
  }

  // Square-pixel camera with the stated horizontal field of view, principal
  // point at the image center.
  static Intrinsics from_fov(int64_t w, int64_t h, double fov_x_deg) {
    require(fov_x_deg > 0.0 && fov_x_deg < 180.0, "Intrinsics: field of view ", fov_x_deg,
            " degrees out of range");
    const double f = 0.5 * static_cast<double>(w - 1) / std::tan(0.5 * fov_x_deg * kPi / 180.0);
    return Intrinsics(f, f, 0.5 * static_cast<double>(w - 1), 0.5 * static_cast<double>(h - 1),
                      w, h);
  }
};

struct Pose {
  Mat3 rotation;  // camera-to-world
  Vec3 translation;

  Pose() = default;
  Pose(const Mat3& r, const Vec3& t) : rotation(r), translation(t) {
    require(is_rotation(r), "Pose: rotation is not orthonormal with determinant +1");
  }

  Vec3 cam_to_world(const Vec3& p_cam) const { return rotation * p_cam + translation; }
  Vec3 world_to_cam(const Vec3& p_world) const {
    return rotation.transposed() * (p_world - translation);
  }
  Vec3 forward() const { return rotation.col(2); }
};

// Camera at `eye` looking toward `target`; image up is world up (so camera y,
// which points down in our convention, maps to -world_up projected).
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up = {0, 0, 1}) {
  const Vec3 f = (target - eye).normalized();
  const Vec3 side = f.cross(world_up);
  require(side.norm() > 1e-9, "look_at: view direction parallel to up vector");
  const Vec3 right = side.normalized();
  const Vec3 down = f.cross(right);
  return Pose(Mat3::from_cols(right, down, f), eye);
}

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit
  double t_near = 0.0, t_far = 0.0;
};

inline Ray pixel_ray(const Intrinsics& intr, const Pose& pose, double px, double py,
                     double t_near, double t_far) {
  require(px >= 0.0 && px < static_cast<double>(intr.width), "pixel_ray: px=", px,
          " outside [0,", intr.width, ")");
  require(py >= 0.0 && py < static_cast<double>(intr.height), "pixel_ray: py=", py,
          " outside [0,", intr.height, ")");
  require(t_near >= 0.0 && t_near < t_far, "pixel_ray: need 0 <= t_near < t_far, got ",
          t_near, " and ", t_far);
  const Vec3 dir_cam{(px - intr.cx) / intr.fx, (py - intr.cy) / intr.fy, 1.0};
  Ray r;
  r.origin = pose.translation;
  r.direction = (pose.rotation * dir_cam).normalized();
  r.t_near = t_near;
  r.t_far = t_far;
  return r;
}

struct Projection {
  double px = 0.0, py = 0.0;
  double depth = 0.0;  // Euclidean distance camera center -> point
  bool in_image = false;
};

// Projects a world point; nullopt when the point is at or behind the camera
// plane. in_image reports containment in [0,W)x[0,H).
inline std::optional<Projection> project_point(const Intrinsics& intr, const Pose& pose,
                                               const Vec3& p_world) {
  const Vec3 pc = pose.world_to_cam(p_world);
  if (pc.z <= 1e-9) return std::nullopt;
  Projection pr;
  pr.px = intr.fx * pc.x / pc.z + intr.cx;
  pr.py = intr.fy * pc.y / pc.z + intr.cy;
  pr.depth = pc.norm();
  pr.in_image = pr.px >= 0.0 && pr.px < static_cast<double>(intr.width) && pr.py >= 0.0 &&
                pr.py < static_cast<double>(intr.height);
  return pr;
}

// ---------------------------------------------------------------------------
// axis-angle (Rodrigues) conversion for the 6-vector pose form

inline Mat3 axis_angle_to_rotation(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) return Mat3::identity();
  const Vec3 a = w * (1.0 / theta);
  const double c = std::cos(theta), s = std::sin(theta), ic = 1.0 - c;
  Mat3 r;
  r(0, 0) = c + a.x * a.x * ic;
  r(0, 1) = a.x * a.y * ic - a.z * s;
  r(0, 2) = a.x * a.z * ic + a.y * s;
  r(1, 0) = a.y * a.x * ic + a.z * s;
  r(1, 1) = c + a.y * a.y * ic;
  r(1, 2) = a.y * a.z * ic - a.x * s;
  r(2, 0) = a.z * a.x * ic - a.y * s;
  r(2, 1) = a.z * a.y * ic + a.x * s;
  r(2, 2) = c + a.z * a.z * ic;
  return r;
}

inline Vec3 rotation_to_axis_angle(const Mat3& r) {
  const double tr = r(0, 0) + r(1, 1) + r(2, 2);
  const double c = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
  const double theta = std::acos(c);
  if (theta < 1e-12) return {0, 0, 0};
  if (theta > kPi - 1e-6) {
    // near 180 degrees the off-diagonal form degenerates; recover the axis
    // from the dominant diagonal of (R + I)/2
    int k = 0;
    for (int i = 1; i < 3; ++i)
      if (r(i, i) > r(k, k)) k = i;
    Vec3 a{std::sqrt(std::max(0.0, (r(0, 0) + 1.0) / 2.0)),
           std::sqrt(std::max(0.0, (r(1, 1) + 1.0) / 2.0)),
           std::sqrt(std::max(0.0, (r(2, 2) + 1.0) / 2.0))};
    // fix signs relative to the dominant component
    if (k == 0) {
      a.y = std::copysign(a.y, r(0, 1));
      a.z = std::copysign(a.z, r(0, 2));
    } else if (k == 1) {
      a.x = std::copysign(a.x, r(0, 1));
      a.z = std::copysign(a.z, r(1, 2));
    } else {
      a.x = std::copysign(a.x, r(0, 2));
      a.y = std::copysign(a.y, r(1, 2));
    }
    return a.normalized() * theta;
  }
  const double s = 0.5 / std::sin(theta);
  return Vec3{(r(2, 1) - r(1, 2)) * s, (r(0, 2) - r(2, 0)) * s, (r(1, 0) - r(0, 1)) * s} *
         theta;
}

inline std::array<double, 6> pose_to_vec6(const Pose& p) {
  const Vec3 w = rotation_to_axis_angle(p.rotation);
  return {w.x, w.y, w.z, p.translation.x, p.translation.y, p.translation.z};
}

inline Pose vec6_to_pose(const std::array<double, 6>& v) {
  return Pose(axis_angle_to_rotation({v[0], v[1], v[2]}), {v[3], v[4], v[5]});
}

// ---------------------------------------------------------------------------
// plain-text per-view camera records

struct CameraRecord {
  Intrinsics intrinsics;
  Pose pose;
};

inline void save_cameras(const std::vector<CameraRecord>& cams, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "save_cameras: cannot open '", path, "'");
  os.precision(17);
  os << "views " << cams.size() << "\n";
  for (size_t i = 0; i < cams.size(); ++i) {
    const auto& c = cams[i];
    os << "view " << i << "\n";
    os << "intr " << c.intrinsics.fx << " " << c.intrinsics.fy << " " << c.intrinsics.cx
       << " " << c.intrinsics.cy << " " << c.intrinsics.width << " " << c.intrinsics.height
       << "\n";
    os << "rot";
    for (int j = 0; j < 9; ++j) os << " " << c.pose.rotation.m[j];
    os << "\n";
    os << "trans " << c.pose.translation.x << " " << c.pose.translation.y << " "
       << c.pose.translation.z << "\n";
  }
  require(static_cast<bool>(os), "save_cameras: write failed for '", path, "'");
}

inline std::vector<CameraRecord> load_cameras(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "load_cameras: cannot open '", path, "'");
  std::string tok;
  size_t count = 0;
  is >> tok >> count;
  require(static_cast<bool>(is) && tok == "views", "load_cameras: '", path,
          "' missing 'views' header");
  std::vector<CameraRecord> cams;
  for (size_t i = 0; i < count; ++i) {
    size_t idx;
    is >> tok >> idx;
    require(static_cast<bool>(is) && tok == "view" && idx == i, "load_cameras: bad record ", i,
            " in '", path, "'");
    double fx, fy, cx, cy;
    int64_t w, h;
    is >> tok >> fx >> fy >> cx >> cy >> w >> h;
    require(static_cast<bool>(is) && tok == "intr", "load_cameras: bad intrinsics in record ",
            i);
    Mat3 r;
    is >> tok;
    require(static_cast<bool>(is) && tok == "rot", "load_cameras: bad rotation in record ", i);
    for (int j = 0; j < 9; ++j) is >> r.m[j];
    Vec3 t;
    is >> tok >> t.x >> t.y >> t.z;
    require(static_cast<bool>(is) && tok == "trans", "load_cameras: bad translation in record ",
            i);
    cams.push_back({Intrinsics(fx, fy, cx, cy, w, h), Pose(r, t)});
  }
  return cams;
}

}  // namespace roomnerf
