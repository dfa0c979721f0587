#pragma once

// Scene loading: manifest + images + cameras, with split bookkeeping.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "srf/geometry.hpp"
#include "srf/image.hpp"

namespace srf {

template <class T>
struct Scene {
  std::string root;
  double t_near = 0, t_far = 0;
  std::vector<Tensor<T>> images;  // [3,H,W] in [0,1]
  std::vector<Camera> cameras;
  std::vector<std::string> splits;  // "reference" | "target"

  std::vector<size_t> reference_indices() const { return indices_of("reference"); }
  std::vector<size_t> target_indices() const { return indices_of("target"); }

  // Conditioning inputs only; used by fine-tuning so held-out views are
  // structurally unreachable.
  Scene reference_only() const {
    Scene sub;
    sub.root = root;
    sub.t_near = t_near;
    sub.t_far = t_far;
    for (size_t i : reference_indices()) {
      sub.images.push_back(images[i]);
      sub.cameras.push_back(cameras[i]);
      sub.splits.push_back("reference");
    }
    return sub;
  }

 private:
  std::vector<size_t> indices_of(const std::string& tag) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < splits.size(); ++i)
      if (splits[i] == tag) out.push_back(i);
    return out;
  }
};

template <class T>
Scene<T> load_scene(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("manifest not found: " + manifest_path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest parse error in " + manifest_path + ": " + e.what());
  }
  if (j.value("version", 0) != 1) {
    throw std::runtime_error("unsupported manifest version in " + manifest_path);
  }
  Scene<T> scene;
  scene.root = fs::path(manifest_path).parent_path().string();
  scene.t_near = j.at("t_near").get<double>();
  scene.t_far = j.at("t_far").get<double>();
  if (!(scene.t_near > 0 && scene.t_near < scene.t_far)) {
    throw std::runtime_error("manifest requires 0 < t_near < t_far");
  }
  size_t n_ref = 0;
  for (const auto& view : j.at("views")) {
    std::string img_rel = view.at("image").get<std::string>();
    std::string cam_rel = view.at("camera").get<std::string>();
    std::string split = view.at("split").get<std::string>();
    if (split != "reference" && split != "target") {
      throw std::runtime_error("unknown split tag '" + split + "' in " + manifest_path);
    }
    Image8 img = load_png((fs::path(scene.root) / img_rel).string());
    Camera cam = load_camera((fs::path(scene.root) / cam_rel).string());
    if (img.width != cam.width || img.height != cam.height) {
      throw std::runtime_error("image/camera size mismatch for " + img_rel);
    }
    scene.images.push_back(image_to_tensor<T>(img));
    scene.cameras.push_back(cam);
    scene.splits.push_back(split);
    if (split == "reference") ++n_ref;
  }
  if (n_ref < 2) {
    throw std::runtime_error("scene needs at least 2 reference views, got " +
                             std::to_string(n_ref));
  }
  return scene;
}

// Convenience: accepts either the manifest file or the dataset directory.
template <class T>
Scene<T> open_scene(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) return load_scene<T>((fs::path(path) / "manifest.json").string());
  return load_scene<T>(path);
}

}  // namespace srf
