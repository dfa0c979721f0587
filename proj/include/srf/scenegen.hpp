#pragma once

// Procedural multi-view datasets: Lambertian spheres and axis-aligned boxes,
// analytically ray traced from a ring of cameras with exact intrinsics and
// poses. Stands in for captured data so tests can rely on photo-consistency.
//
// On-disk layout written by generate_scene:
//   <out>/images/view_###.png
//   <out>/cameras/view_###.txt     (geometry-module text format)
//   <out>/manifest.json            (schema below)
//   <out>/truth.json               (scene spec sidecar for oracles)
//
// manifest.json:
//   { "version": 1, "t_near": ..., "t_far": ...,
//     "views": [ {"image": "...", "camera": "...", "split": "reference"|"target"}, ... ] }

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "srf/geometry.hpp"
#include "srf/image.hpp"

namespace srf {

struct PrimitiveSpec {
  enum class Kind { kSphere, kBox };
  Kind kind = Kind::kSphere;
  Vec3 center;
  double radius = 1.0;  // spheres
  Vec3 half_size;       // boxes
  Vec3 albedo{0.8, 0.8, 0.8};
};

struct SceneSpec {
  std::vector<PrimitiveSpec> primitives;
  Vec3 light_direction{-0.4, -0.3, -0.85};  // direction the light travels
  double ambient = 0.25;
  size_t camera_count = 13;
  size_t reference_count = 10;
  double ring_radius = 4.0;
  double elevation_min_deg = 10.0;
  double elevation_max_deg = 40.0;
  Vec3 look_at{0, 0, 0};
  size_t image_size = 64;
  double focal = 72.0;
  double t_near = 2.0;
  double t_far = 7.0;
  uint64_t seed = 1;
};

// ---- scene spec JSON ----

inline Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json vec3_to_json(const Vec3& v) { return nlohmann::json{v.x, v.y, v.z}; }

inline SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  SceneSpec spec;
  for (const auto& p : j.value("primitives", nlohmann::json::array())) {
    PrimitiveSpec prim;
    std::string type = p.at("type").get<std::string>();
    prim.center = vec3_from_json(p.at("center"));
    prim.albedo = vec3_from_json(p.at("albedo"));
    if (type == "sphere") {
      prim.kind = PrimitiveSpec::Kind::kSphere;
      prim.radius = p.at("radius").get<double>();
    } else if (type == "box") {
      prim.kind = PrimitiveSpec::Kind::kBox;
      prim.half_size = vec3_from_json(p.at("half_size"));
    } else {
      throw std::runtime_error("unknown primitive type: " + type);
    }
    spec.primitives.push_back(prim);
  }
  if (j.contains("light")) {
    spec.light_direction = vec3_from_json(j["light"].at("direction"));
    spec.ambient = j["light"].value("ambient", spec.ambient);
  }
  if (j.contains("cameras")) {
    const auto& c = j["cameras"];
    spec.camera_count = c.value("count", spec.camera_count);
    spec.reference_count = c.value("reference", spec.reference_count);
    spec.ring_radius = c.value("radius", spec.ring_radius);
    if (c.contains("elevation_deg")) {
      spec.elevation_min_deg = c["elevation_deg"][0].get<double>();
      spec.elevation_max_deg = c["elevation_deg"][1].get<double>();
    }
    if (c.contains("look_at")) spec.look_at = vec3_from_json(c["look_at"]);
    spec.image_size = c.value("image_size", spec.image_size);
    spec.focal = c.value("focal", spec.focal);
  }
  if (j.contains("bounds")) {
    spec.t_near = j["bounds"].value("near", spec.t_near);
    spec.t_far = j["bounds"].value("far", spec.t_far);
  }
  spec.seed = j.value("seed", spec.seed);
  return spec;
}

inline SceneSpec load_scene_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("scene spec not found: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("scene spec parse error in " + path + ": " + e.what());
  }
  return scene_spec_from_json(j);
}

inline nlohmann::json scene_spec_to_json(const SceneSpec& spec) {
  nlohmann::json j;
  j["primitives"] = nlohmann::json::array();
  for (const auto& p : spec.primitives) {
    nlohmann::json pj;
    pj["type"] = p.kind == PrimitiveSpec::Kind::kSphere ? "sphere" : "box";
    pj["center"] = vec3_to_json(p.center);
    pj["albedo"] = vec3_to_json(p.albedo);
    if (p.kind == PrimitiveSpec::Kind::kSphere) {
      pj["radius"] = p.radius;
    } else {
      pj["half_size"] = vec3_to_json(p.half_size);
    }
    j["primitives"].push_back(pj);
  }
  j["light"] = {{"direction", vec3_to_json(spec.light_direction)}, {"ambient", spec.ambient}};
  j["cameras"] = {{"count", spec.camera_count},
                  {"reference", spec.reference_count},
                  {"radius", spec.ring_radius},
                  {"elevation_deg", {spec.elevation_min_deg, spec.elevation_max_deg}},
                  {"look_at", vec3_to_json(spec.look_at)},
                  {"image_size", spec.image_size},
                  {"focal", spec.focal}};
  j["bounds"] = {{"near", spec.t_near}, {"far", spec.t_far}};
  j["seed"] = spec.seed;
  return j;
}

// ---- analytic ray tracing ----

struct Hit {
  double t = 0;
  Vec3 normal;
  Vec3 albedo;
};

inline std::optional<double> intersect_sphere(const Ray& ray, const Vec3& center, double radius) {
  Vec3 oc = ray.origin - center;
  double b = oc.dot(ray.direction);
  double c = oc.dot(oc) - radius * radius;
  double disc = b * b - c;
  if (disc < 0) return std::nullopt;
  double s = std::sqrt(disc);
  double t = -b - s;
  if (t <= 1e-9) t = -b + s;
  if (t <= 1e-9) return std::nullopt;
  return t;
}

inline std::optional<Hit> intersect_primitive(const Ray& ray, const PrimitiveSpec& prim) {
  if (prim.kind == PrimitiveSpec::Kind::kSphere) {
    auto t = intersect_sphere(ray, prim.center, prim.radius);
    if (!t) return std::nullopt;
    Hit h;
    h.t = *t;
    h.normal = (ray.at(*t) - prim.center).normalized();
    h.albedo = prim.albedo;
    return h;
  }
  // Slab test for the axis-aligned box.
  double tmin = -1e300, tmax = 1e300;
  int axis = -1;
  const double o[3] = {ray.origin.x, ray.origin.y, ray.origin.z};
  const double d[3] = {ray.direction.x, ray.direction.y, ray.direction.z};
  const double c[3] = {prim.center.x, prim.center.y, prim.center.z};
  const double hs[3] = {prim.half_size.x, prim.half_size.y, prim.half_size.z};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < c[a] - hs[a] || o[a] > c[a] + hs[a]) return std::nullopt;
      continue;
    }
    double t0 = (c[a] - hs[a] - o[a]) / d[a];
    double t1 = (c[a] + hs[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      axis = a;
    }
    tmax = std::min(tmax, t1);
  }
  if (tmin > tmax || tmin <= 1e-9 || axis < 0) return std::nullopt;
  Hit h;
  h.t = tmin;
  double sign = d[axis] > 0 ? -1.0 : 1.0;
  h.normal = {axis == 0 ? sign : 0.0, axis == 1 ? sign : 0.0, axis == 2 ? sign : 0.0};
  h.albedo = prim.albedo;
  return h;
}

inline Vec3 shade_ray(const Ray& ray, const SceneSpec& spec) {
  std::optional<Hit> best;
  for (const auto& prim : spec.primitives) {
    auto h = intersect_primitive(ray, prim);
    if (h && (!best || h->t < best->t)) best = h;
  }
  if (!best) return {0, 0, 0};  // black background
  Vec3 to_light = (-spec.light_direction).normalized();
  double diffuse = std::max(0.0, best->normal.dot(to_light));
  double shade = spec.ambient + (1.0 - spec.ambient) * diffuse;
  return best->albedo * shade;
}

inline Image8 trace_view(const Camera& cam, const SceneSpec& spec) {
  Image8 img;
  img.width = cam.width;
  img.height = cam.height;
  img.rgb.resize(img.width * img.height * 3);
  for (size_t y = 0; y < img.height; ++y) {
    for (size_t x = 0; x < img.width; ++x) {
      Ray ray = pixel_to_ray(cam, static_cast<double>(x), static_cast<double>(y), spec.t_near,
                             spec.t_far);
      Vec3 c = shade_ray(ray, spec);
      uint8_t* px = img.pixel(x, y);
      px[0] = quantize_channel(c.x);
      px[1] = quantize_channel(c.y);
      px[2] = quantize_channel(c.z);
    }
  }
  return img;
}

// Bounding sphere of all primitives (loose: centered on the centroid).
inline void bounding_sphere(const SceneSpec& spec, Vec3& center, double& radius) {
  if (spec.primitives.empty()) {
    center = spec.look_at;
    radius = 0;
    return;
  }
  center = {0, 0, 0};
  for (const auto& p : spec.primitives) center = center + p.center;
  center = center * (1.0 / static_cast<double>(spec.primitives.size()));
  radius = 0;
  for (const auto& p : spec.primitives) {
    double pr = p.kind == PrimitiveSpec::Kind::kSphere ? p.radius : p.half_size.norm();
    radius = std::max(radius, (p.center - center).norm() + pr);
  }
}

inline std::vector<Camera> camera_ring(const SceneSpec& spec) {
  if (spec.camera_count < 3 || spec.reference_count < 2 ||
      spec.reference_count >= spec.camera_count) {
    throw std::runtime_error(
        "camera ring needs count >= 3 and 2 <= reference < count (targets must exist)");
  }
  Rng rng(spec.seed);
  std::vector<Camera> cams;
  double phase = rng.uniform(0.0, 2.0 * M_PI);
  for (size_t i = 0; i < spec.camera_count; ++i) {
    double az = phase + 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(spec.camera_count);
    double frac = rng.uniform();
    double elev = (spec.elevation_min_deg +
                   (spec.elevation_max_deg - spec.elevation_min_deg) * frac) *
                  M_PI / 180.0;
    Vec3 eye = spec.look_at + Vec3{std::cos(az) * std::cos(elev), std::sin(az) * std::cos(elev),
                                   std::sin(elev)} *
                                  spec.ring_radius;
    cams.push_back(look_at_camera(eye, spec.look_at, Vec3{0, 0, 1}, spec.focal, spec.image_size,
                                  spec.image_size));
  }

  // Every camera must see the whole primitive set inside the [near, far] shell.
  Vec3 bc;
  double br;
  bounding_sphere(spec, bc, br);
  for (const auto& cam : cams) {
    Vec3 pc = cam.rotation * bc + cam.translation;
    if (!spec.primitives.empty()) {
      if (pc.z - br < spec.t_near || pc.z + br > spec.t_far) {
        throw std::runtime_error("unsatisfiable camera ring: primitives outside depth bounds");
      }
      double pix_r = cam.fx * br / std::max(pc.z - br, 1e-9);
      Projection p = project(cam, bc);
      if (p.behind || p.u - pix_r < 0 || p.u + pix_r >= static_cast<double>(cam.width) ||
          p.v - pix_r < 0 || p.v + pix_r >= static_cast<double>(cam.height)) {
        throw std::runtime_error("unsatisfiable camera ring: primitives outside frustum");
      }
    }
  }
  return cams;
}

// ---- dataset generation ----

inline void generate_scene(const SceneSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<Camera> cams = camera_ring(spec);
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "cameras");

  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["t_near"] = spec.t_near;
  manifest["t_far"] = spec.t_far;
  manifest["views"] = nlohmann::json::array();
  char name[32];
  for (size_t i = 0; i < cams.size(); ++i) {
    std::snprintf(name, sizeof name, "view_%03zu", i);
    std::string img_rel = std::string("images/") + name + ".png";
    std::string cam_rel = std::string("cameras/") + name + ".txt";
    save_png((fs::path(out_dir) / img_rel).string(), trace_view(cams[i], spec));
    save_camera((fs::path(out_dir) / cam_rel).string(), cams[i]);
    manifest["views"].push_back({{"image", img_rel},
                                 {"camera", cam_rel},
                                 {"split", i < spec.reference_count ? "reference" : "target"}});
  }
  {
    std::ofstream os((fs::path(out_dir) / "manifest.json").string());
    os << manifest.dump(2) << "\n";
    if (!os) throw std::runtime_error("cannot write manifest in " + out_dir);
  }
  {
    // Ground-truth sidecar: lets tests evaluate exact geometry (e.g. SDF).
    std::ofstream os((fs::path(out_dir) / "truth.json").string());
    os << scene_spec_to_json(spec).dump(2) << "\n";
    if (!os) throw std::runtime_error("cannot write truth sidecar in " + out_dir);
  }
}

// Signed distance to the union of primitives; used by mesh oracles.
inline double scene_sdf(const SceneSpec& spec, const Vec3& p) {
  double best = 1e300;
  for (const auto& prim : spec.primitives) {
    double d;
    if (prim.kind == PrimitiveSpec::Kind::kSphere) {
      d = (p - prim.center).norm() - prim.radius;
    } else {
      Vec3 q{std::abs(p.x - prim.center.x) - prim.half_size.x,
             std::abs(p.y - prim.center.y) - prim.half_size.y,
             std::abs(p.z - prim.center.z) - prim.half_size.z};
      Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
      d = qp.norm() + std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
    }
    best = std::min(best, d);
  }
  return best;
}

}  // namespace srf
