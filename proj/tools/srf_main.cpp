// srf: single entry point for the pipeline.
//
// Subcommands: synth | train | finetune | render | eval | mesh.
// Exit codes: 0 success, 2 usage, 3 config, 4 not found, 5 bad data,
// 6 runtime failure. Failures print one line: "error: <category>: <message>".

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "srf/mesher.hpp"
#include "srf/scenegen.hpp"
#include "srf/trainer.hpp"

namespace fs = std::filesystem;
using Real = float;  // training precision; the gradient-check suite uses double

namespace {

struct CliError : std::runtime_error {
  std::string category;
  int code;
  CliError(std::string cat, const std::string& msg, int exit_code)
      : std::runtime_error(msg), category(std::move(cat)), code(exit_code) {}
};

CliError not_found(const std::string& msg) { return CliError("not_found", msg, 4); }
CliError bad_config(const std::string& msg) { return CliError("config", msg, 3); }
CliError bad_data(const std::string& msg) { return CliError("data", msg, 5); }

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw not_found(what + " not found: " + path);
}

srf::KVConfig build_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
  srf::KVConfig kv;
  if (!config_path.empty()) {
    require_file(config_path, "config file");
    try {
      kv = srf::KVConfig::from_file(config_path);
    } catch (const std::exception& e) {
      throw bad_config(e.what());
    }
  }
  for (const auto& o : overrides) {
    try {
      kv.set_dotted(o);
    } catch (const std::exception& e) {
      throw bad_config(e.what());
    }
  }
  return kv;
}

// Full reproducible snapshot: model + train keys with all defaults resolved,
// plus whatever extra keys the user set.
std::string effective_config(const srf::KVConfig& user_kv) {
  srf::KVConfig kv = user_kv;
  srf::ModelConfig::from_kv(user_kv).to_kv(kv);
  srf::TrainConfig::from_kv(user_kv).to_kv(kv);
  return kv.serialize();
}

void write_snapshot(const std::string& out_dir, const std::string& echo,
                    const std::string& command) {
  fs::create_directories(fs::path(out_dir) / "logs");
  std::ofstream os((fs::path(out_dir) / "logs" / "effective_config.txt").string());
  os << "# command = " << command << "\n" << echo;
  std::cout << "effective config:\n" << echo;
}

srf::Scene<Real> open_scene_checked(const std::string& path) {
  if (!fs::exists(path)) throw not_found("scene not found: " + path);
  try {
    return srf::open_scene<Real>(path);
  } catch (const std::exception& e) {
    throw bad_data(e.what());
  }
}

srf::Checkpoint<Real> load_ckpt_checked(const std::string& path) {
  if (!fs::exists(path)) throw not_found("checkpoint not found: " + path);
  return srf::load_checkpoint<Real>(path);
}

srf::RefViews<Real> reference_views(const srf::Scene<Real>& scene,
                                    const srf::SrfModel<Real>& model) {
  std::vector<srf::Tensor<Real>> imgs;
  std::vector<srf::Camera> cams;
  for (size_t i : scene.reference_indices()) {
    imgs.push_back(scene.images[i]);
    cams.push_back(scene.cameras[i]);
  }
  return srf::encode_views(imgs, cams, model.encoder);
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              const std::vector<std::string>& overrides) {
  require_file(spec_path, "scene spec");
  srf::SceneSpec spec;
  try {
    spec = srf::load_scene_spec(spec_path);
  } catch (const std::exception& e) {
    throw bad_data(e.what());
  }
  for (const auto& o : overrides) {
    srf::KVConfig kv;
    kv.set_dotted(o);
    spec.seed = static_cast<uint64_t>(kv.get_int("synth.seed", static_cast<long>(spec.seed)));
    spec.image_size = static_cast<size_t>(
        kv.get_int("synth.image_size", static_cast<long>(spec.image_size)));
  }
  srf::generate_scene(spec, out_dir);
  srf::KVConfig kv;
  kv.set("synth.spec", spec_path);
  kv.set("synth.seed", std::to_string(spec.seed));
  write_snapshot(out_dir, kv.serialize(), "synth");
  std::cout << "wrote dataset to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::vector<std::string>& scene_paths, const std::string& out_dir,
              const std::string& config_path, const std::vector<std::string>& overrides) {
  srf::KVConfig kv = build_config(config_path, overrides);
  srf::ModelConfig mc = srf::ModelConfig::from_kv(kv);
  srf::TrainConfig tc = srf::TrainConfig::from_kv(kv);
  tc.out_dir = out_dir;
  std::string echo = effective_config(kv);
  write_snapshot(out_dir, echo, "train");

  std::vector<srf::Scene<Real>> scenes;
  for (const auto& p : scene_paths) scenes.push_back(open_scene_checked(p));

  auto session = srf::TrainSession<Real>::fresh(mc, tc.seed);
  srf::MetricsLog log((fs::path(out_dir) / "logs" / "metrics.log").string());
  srf::TrainResult result = srf::train(scenes, session, tc, echo, &log);
  std::cout << "trained " << result.steps_run << " steps, loss " << result.first_loss << " -> "
            << result.last_loss << ", best val PSNR " << result.best_val_psnr << "\n";
  std::cout << "checkpoint: " << (fs::path(out_dir) / "checkpoints" / "model.srf").string()
            << "\n";
  return 0;
}

int cmd_finetune(const std::string& ckpt_path, const std::string& scene_path,
                 const std::string& out_dir, size_t steps, double seconds,
                 const std::string& config_path, const std::vector<std::string>& overrides) {
  auto ckpt = load_ckpt_checked(ckpt_path);
  srf::KVConfig kv = srf::KVConfig::from_string(ckpt.config_echo);
  for (const auto& [k, v] : build_config(config_path, overrides).entries()) kv.set(k, v);
  srf::TrainConfig tc = srf::TrainConfig::from_kv(kv);
  std::string echo = effective_config(kv);
  write_snapshot(out_dir, echo, "finetune");

  srf::Scene<Real> scene = open_scene_checked(scene_path);
  auto session = srf::TrainSession<Real>::resume(ckpt);
  srf::MetricsLog log((fs::path(out_dir) / "logs" / "metrics.log").string());
  srf::finetune(session, scene, tc, srf::FinetuneBudget{steps, seconds}, &log);
  fs::create_directories(fs::path(out_dir) / "checkpoints");
  std::string out_ckpt = (fs::path(out_dir) / "checkpoints" / "model_ft.srf").string();
  srf::save_checkpoint(out_ckpt, session.to_checkpoint(echo));
  std::cout << "fine-tuned to step " << session.step << ", checkpoint: " << out_ckpt << "\n";
  return 0;
}

int cmd_render(const std::string& ckpt_path, const std::string& scene_path,
               const std::string& out_dir, long view, const std::string& config_path,
               const std::vector<std::string>& overrides) {
  auto ckpt = load_ckpt_checked(ckpt_path);
  srf::KVConfig kv = build_config(config_path, overrides);
  size_t n_bins = static_cast<size_t>(kv.get_int("render.n_bins", 64));
  size_t batch = static_cast<size_t>(kv.get_int("render.batch_size", 256));
  srf::Scene<Real> scene = open_scene_checked(scene_path);
  srf::SrfModel<Real> model = srf::model_from_checkpoint(ckpt);
  write_snapshot(out_dir, effective_config(kv), "render");

  auto views = reference_views(scene, model);
  std::vector<size_t> todo;
  if (view >= 0) {
    if (static_cast<size_t>(view) >= scene.cameras.size()) {
      throw bad_data("view index out of range: " + std::to_string(view));
    }
    todo.push_back(static_cast<size_t>(view));
  } else {
    todo = scene.target_indices();
  }
  fs::create_directories(fs::path(out_dir) / "renders");
  for (size_t v : todo) {
    srf::Tensor<Real> img = srf::render_image(views, scene.cameras[v], model, n_bins,
                                              scene.t_near, scene.t_far, batch);
    char name[32];
    std::snprintf(name, sizeof name, "view_%03zu.png", v);
    std::string path = (fs::path(out_dir) / "renders" / name).string();
    srf::save_png(path, srf::tensor_to_image(img));
    std::cout << "rendered " << path << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& scene_path,
             const std::string& pred_path, const std::string& target_path,
             const std::string& config_path, const std::vector<std::string>& overrides) {
  if (!pred_path.empty() || !target_path.empty()) {
    // Direct image-vs-image mode.
    require_file(pred_path, "prediction image");
    require_file(target_path, "target image");
    auto a = srf::image_to_tensor<Real>(srf::load_png(pred_path));
    auto b = srf::image_to_tensor<Real>(srf::load_png(target_path));
    std::cout << "psnr " << srf::psnr(a, b) << " ssim " << srf::ssim(a, b) << "\n";
    return 0;
  }
  auto ckpt = load_ckpt_checked(ckpt_path);
  srf::KVConfig kv = build_config(config_path, overrides);
  size_t n_bins = static_cast<size_t>(kv.get_int("render.n_bins", 64));
  srf::Scene<Real> scene = open_scene_checked(scene_path);
  srf::SrfModel<Real> model = srf::model_from_checkpoint(ckpt);
  auto targets = scene.target_indices();
  if (targets.empty()) throw bad_data("scene has no target views to evaluate");
  auto results = srf::evaluate(model, scene, targets, n_bins);
  double psum = 0, ssum = 0;
  for (const auto& r : results) {
    std::cout << "view " << r.view_index << " psnr " << r.psnr << " ssim " << r.ssim << "\n";
    psum += r.psnr;
    ssum += r.ssim;
  }
  std::cout << "mean psnr " << psum / results.size() << " ssim " << ssum / results.size() << "\n";
  return 0;
}

int cmd_mesh(const std::string& ckpt_path, const std::string& scene_path,
             const std::string& out_dir, const std::string& config_path,
             const std::vector<std::string>& overrides) {
  auto ckpt = load_ckpt_checked(ckpt_path);
  srf::KVConfig kv = build_config(config_path, overrides);
  size_t resolution = static_cast<size_t>(kv.get_int("mesh.resolution", 64));
  double threshold_frac = kv.get_double("mesh.threshold_frac", 0.5);
  size_t batch = static_cast<size_t>(kv.get_int("mesh.batch_size", 512));
  double extent = kv.get_double("mesh.bbox_extent", 1.5);
  srf::Vec3 bb_min{-extent, -extent, -extent}, bb_max{extent, extent, extent};

  srf::Scene<Real> scene = open_scene_checked(scene_path);
  srf::SrfModel<Real> model = srf::model_from_checkpoint(ckpt);
  write_snapshot(out_dir, effective_config(kv), "mesh");
  auto views = reference_views(scene, model);
  srf::DensityGrid grid = srf::evaluate_grid(views, model, bb_min, bb_max, resolution, batch);
  double threshold = threshold_frac * grid.max_value();
  srf::ColoredMesh mesh = srf::marching_cubes(grid, threshold);
  srf::color_vertices(mesh, views, model);
  fs::create_directories(fs::path(out_dir) / "meshes");
  std::string path = (fs::path(out_dir) / "meshes" / "mesh.ply").string();
  srf::save_ply(path, mesh);
  std::cout << "mesh with " << mesh.vertices.size() << " vertices, " << mesh.triangles.size()
            << " triangles: " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo radiance field pipeline: synthesize data, train, fine-tune, render, "
               "evaluate and mesh"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker thread cap for internal parallel loops");

  std::string spec_path, out_dir, config_path, ckpt_path, scene_path;
  std::string pred_path, target_path;
  std::vector<std::string> scene_paths, overrides;
  long view = -1;
  size_t ft_steps = 0;
  double ft_seconds = 0;

  auto* synth = app.add_subcommand("synth", "generate a synthetic multi-view dataset");
  synth->add_option("--spec", spec_path, "scene spec JSON")->required();
  synth->add_option("--out", out_dir, "output dataset directory")->required();
  synth->add_option("--set", overrides, "dotted config override, e.g. synth.seed=7");

  auto* train = app.add_subcommand("train", "train a model on one or more scenes");
  train->add_option("--scene", scene_paths, "scene directory or manifest (repeatable)")
      ->required();
  train->add_option("--out", out_dir, "output directory (checkpoints/, logs/)")->required();
  train->add_option("--config", config_path, "key-value config file");
  train->add_option("--set", overrides, "dotted config override, e.g. train.lr=1e-3");

  auto* ft = app.add_subcommand("finetune", "continue training on a scene's reference views");
  ft->add_option("--ckpt", ckpt_path, "pretrained checkpoint")->required();
  ft->add_option("--scene", scene_path, "target scene")->required();
  ft->add_option("--out", out_dir, "output directory")->required();
  ft->add_option("--steps", ft_steps, "step budget (0 = unlimited)");
  ft->add_option("--seconds", ft_seconds, "time budget in seconds (0 = unlimited)");
  ft->add_option("--config", config_path, "key-value config file");
  ft->add_option("--set", overrides, "dotted config override");

  auto* render = app.add_subcommand("render", "render novel views from a checkpoint");
  render->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  render->add_option("--scene", scene_path, "scene supplying reference views")->required();
  render->add_option("--out", out_dir, "output directory (renders/)")->required();
  render->add_option("--view", view, "view index (default: every target view)");
  render->add_option("--config", config_path, "key-value config file");
  render->add_option("--set", overrides, "dotted config override, e.g. render.n_bins=32");

  auto* eval = app.add_subcommand("eval", "PSNR/SSIM report");
  eval->add_option("--ckpt", ckpt_path, "checkpoint (render-and-score mode)");
  eval->add_option("--scene", scene_path, "scene with target views");
  eval->add_option("--pred", pred_path, "prediction PNG (image-vs-image mode)");
  eval->add_option("--target", target_path, "target PNG (image-vs-image mode)");
  eval->add_option("--config", config_path, "key-value config file");
  eval->add_option("--set", overrides, "dotted config override");

  auto* mesh = app.add_subcommand("mesh", "extract a colored mesh from the learned density");
  mesh->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  mesh->add_option("--scene", scene_path, "scene supplying reference views")->required();
  mesh->add_option("--out", out_dir, "output directory (meshes/)")->required();
  mesh->add_option("--config", config_path, "key-value config file");
  mesh->add_option("--set", overrides, "dotted config override, e.g. mesh.resolution=48");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    srf::set_num_threads(threads);
    if (synth->parsed()) return cmd_synth(spec_path, out_dir, overrides);
    if (train->parsed()) return cmd_train(scene_paths, out_dir, config_path, overrides);
    if (ft->parsed())
      return cmd_finetune(ckpt_path, scene_path, out_dir, ft_steps, ft_seconds, config_path,
                          overrides);
    if (render->parsed())
      return cmd_render(ckpt_path, scene_path, out_dir, view, config_path, overrides);
    if (eval->parsed())
      return cmd_eval(ckpt_path, scene_path, pred_path, target_path, config_path, overrides);
    if (mesh->parsed()) return cmd_mesh(ckpt_path, scene_path, out_dir, config_path, overrides);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.category << ": " << e.what() << "\n";
    return e.code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return 6;
  }
  return 2;
}
