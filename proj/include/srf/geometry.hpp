#pragma once

// Pinhole camera model. Pixel-center convention throughout: integer (u,v)
// addresses a texel center. Cameras store world-to-camera [R|t]; the camera
// looks down +z, so camera-frame depth is the z coordinate.

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "srf/common.hpp"

namespace srf {

struct Vec3 {
  double x = 0, y = 0, z = 0;

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
    double n = norm();
    if (n == 0) throw std::invalid_argument("cannot normalize zero vector");
    return {x / n, y / n, z / n};
  }
};

struct Mat3 {
  // Row-major.
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Vec3 transpose_mul(const Vec3& v) const {
    return {m[0] * v.x + m[3] * v.y + m[6] * v.z, m[1] * v.x + m[4] * v.y + m[7] * v.z,
            m[2] * v.x + m[5] * v.y + m[8] * v.z};
  }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
};

struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  size_t width = 0, height = 0;
  Mat3 rotation;     // world -> camera
  Vec3 translation;  // world -> camera

  // Checked on load and on construction from code.
  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("camera: focal lengths must be > 0");
    if (width == 0 || height == 0) throw std::invalid_argument("camera: empty image size");
    if (!(cx >= 0 && cx < static_cast<double>(width)) ||
        !(cy >= 0 && cy < static_cast<double>(height))) {
      throw std::invalid_argument("camera: principal point outside image");
    }
    // Orthonormality: R R^T = I and det = +1, to 1e-6.
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        double dot = 0;
        for (int k = 0; k < 3; ++k) dot += rotation(r, k) * rotation(c, k);
        double expect = r == c ? 1.0 : 0.0;
        if (std::abs(dot - expect) > 1e-6) {
          throw std::invalid_argument("camera: rotation is not orthonormal");
        }
      }
    }
    if (std::abs(rotation.det() - 1.0) > 1e-6) {
      throw std::invalid_argument("camera: rotation determinant is not +1");
    }
  }

  Vec3 center() const { return -rotation.transpose_mul(translation); }
};

struct Projection {
  double u = 0, v = 0;
  double depth = 0;   // camera-frame z
  bool behind = false;  // depth <= 0; downstream yields zero features
};

inline Projection project(const Camera& cam, const Vec3& world) {
  Vec3 pc = cam.rotation * world + cam.translation;
  Projection p;
  p.depth = pc.z;
  if (pc.z <= 0) {
    p.behind = true;
    return p;
  }
  p.u = cam.fx * pc.x / pc.z + cam.cx;
  p.v = cam.fy * pc.y / pc.z + cam.cy;
  return p;
}

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit norm
  double t_near = 0, t_far = 0;

  Vec3 at(double t) const { return origin + direction * t; }
};

inline Ray pixel_to_ray(const Camera& cam, double u, double v, double t_near, double t_far) {
  if (!(t_near < t_far) || !(t_near > 0)) {
    throw std::invalid_argument("pixel_to_ray: require 0 < t_near < t_far");
  }
  Vec3 dir_cam{(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0};
  Ray ray;
  ray.origin = cam.center();
  ray.direction = cam.rotation.transpose_mul(dir_cam).normalized();
  ray.t_near = t_near;
  ray.t_far = t_far;
  return ray;
}

struct RaySample {
  Vec3 point;
  double t = 0;
  double delta = 0;  // distance to the next sample; last one closes to t_far
};

// One uniform draw per equal-length bin; deterministic mode samples bin
// centers (used for tests and final rendering).
inline std::vector<RaySample> stratified_samples(const Ray& ray, size_t n_bins, Rng* rng) {
  if (n_bins < 1) throw std::invalid_argument("stratified_samples: n_bins must be >= 1");
  double span = ray.t_far - ray.t_near;
  double bin = span / static_cast<double>(n_bins);
  std::vector<RaySample> out(n_bins);
  for (size_t i = 0; i < n_bins; ++i) {
    double frac = rng ? rng->uniform() : 0.5;
    out[i].t = ray.t_near + (static_cast<double>(i) + frac) * bin;
    out[i].point = ray.at(out[i].t);
  }
  for (size_t i = 0; i + 1 < n_bins; ++i) out[i].delta = out[i + 1].t - out[i].t;
  out[n_bins - 1].delta = ray.t_far - out[n_bins - 1].t;
  return out;
}

// ---- camera text format ----
//
// One file per view:
//   fx fy cx cy W H
//   r00 r01 r02 t0
//   r10 r11 r12 t1
//   r20 r21 r22 t2

inline void save_camera(const std::string& path, const Camera& cam) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write camera file: " + path);
  os.precision(17);
  os << cam.fx << " " << cam.fy << " " << cam.cx << " " << cam.cy << " " << cam.width << " "
     << cam.height << "\n";
  const Vec3& t = cam.translation;
  double tv[3] = {t.x, t.y, t.z};
  for (int r = 0; r < 3; ++r) {
    os << cam.rotation(r, 0) << " " << cam.rotation(r, 1) << " " << cam.rotation(r, 2) << " "
       << tv[r] << "\n";
  }
  if (!os) throw std::runtime_error("write failure on camera file: " + path);
}

inline Camera load_camera(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("camera file not found: " + path);
  Camera cam;
  is >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> cam.width >> cam.height;
  double t[3];
  for (int r = 0; r < 3; ++r) {
    is >> cam.rotation(r, 0) >> cam.rotation(r, 1) >> cam.rotation(r, 2) >> t[r];
  }
  if (!is) throw std::runtime_error("malformed camera file: " + path);
  cam.translation = {t[0], t[1], t[2]};
  cam.validate();
  return cam;
}

// Camera at `eye` looking at `target`, +v pointing down-ish in world `up`.
inline Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                             size_t width, size_t height) {
  Vec3 forward = (target - eye).normalized();  // camera +z
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3{1, 0, 0});
  right = right.normalized();                      // camera +x
  Vec3 down = forward.cross(right).normalized();   // camera +y (image v grows downward)
  Camera cam;
  cam.fx = cam.fy = focal;
  cam.cx = (static_cast<double>(width) - 1.0) / 2.0;
  cam.cy = (static_cast<double>(height) - 1.0) / 2.0;
  cam.width = width;
  cam.height = height;
  cam.rotation(0, 0) = right.x;
  cam.rotation(0, 1) = right.y;
  cam.rotation(0, 2) = right.z;
  cam.rotation(1, 0) = down.x;
  cam.rotation(1, 1) = down.y;
  cam.rotation(1, 2) = down.z;
  cam.rotation(2, 0) = forward.x;
  cam.rotation(2, 1) = forward.y;
  cam.rotation(2, 2) = forward.z;
  cam.translation = -(cam.rotation * eye);
  cam.validate();
  return cam;
}

}  // namespace srf
