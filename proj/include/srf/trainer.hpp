#pragma once

// Self-supervised training: sample a target view and a batch of its pixels,
// render them through the full pipeline with stochastic ray sampling, take the
// L2 loss against the target image, backprop, Adam step.
//
// Determinism contract: the per-step RNG is derived from (seed, step), so a
// run resumed from a checkpoint at step s continues the exact trajectory of
// an uninterrupted run.

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "srf/metrics.hpp"
#include "srf/renderer.hpp"
#include "srf/scene.hpp"

namespace srf {

struct TrainConfig {
  std::vector<std::string> scenes;  // manifest paths or dataset directories
  size_t rays_per_batch = 96;
  size_t n_bins = 32;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  size_t max_steps = 2000;
  size_t val_every = 250;          // 0 disables periodic validation
  size_t plateau_patience = 4;     // validation checks without improvement
  double density_noise_std = 0.0;  // pre-ReLU Gaussian on the density logit
  uint64_t seed = 0;
  size_t holdout_targets = 1;  // per scene, trailing target views held out
  double time_budget_sec = 0;  // 0 = unlimited
  std::string out_dir;         // checkpoints/, logs/ created here when set

  static TrainConfig from_kv(const KVConfig& kv) {
    TrainConfig c;
    c.rays_per_batch = static_cast<size_t>(kv.get_int("train.rays_per_batch", 96));
    c.n_bins = static_cast<size_t>(kv.get_int("train.n_bins", 32));
    c.lr = kv.get_double("train.lr", 5e-4);
    c.beta1 = kv.get_double("train.beta1", 0.9);
    c.beta2 = kv.get_double("train.beta2", 0.999);
    c.adam_eps = kv.get_double("train.adam_eps", 1e-8);
    c.max_steps = static_cast<size_t>(kv.get_int("train.max_steps", 2000));
    c.val_every = static_cast<size_t>(kv.get_int("train.val_every", 250));
    c.plateau_patience = static_cast<size_t>(kv.get_int("train.plateau_patience", 4));
    c.density_noise_std = kv.get_double("train.density_noise_std", 0.0);
    c.seed = static_cast<uint64_t>(kv.get_int("train.seed", 0));
    c.holdout_targets = static_cast<size_t>(kv.get_int("train.holdout_targets", 1));
    c.time_budget_sec = kv.get_double("train.time_budget_sec", 0.0);
    if (c.rays_per_batch < 1 || c.n_bins < 1) {
      throw std::runtime_error("train.rays_per_batch and train.n_bins must be >= 1");
    }
    if (!(c.lr > 0) || !(c.adam_eps > 0)) {
      throw std::runtime_error("train.lr and train.adam_eps must be > 0");
    }
    return c;
  }

  void to_kv(KVConfig& kv) const {
    // Doubles need round-trip formatting; std::to_string flattens 1e-8 to 0.
    auto fmt = [](double v) {
      char buf[32];
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      return std::string(buf, res.ptr);
    };
    kv.set("train.rays_per_batch", std::to_string(rays_per_batch));
    kv.set("train.n_bins", std::to_string(n_bins));
    kv.set("train.lr", fmt(lr));
    kv.set("train.beta1", fmt(beta1));
    kv.set("train.beta2", fmt(beta2));
    kv.set("train.adam_eps", fmt(adam_eps));
    kv.set("train.max_steps", std::to_string(max_steps));
    kv.set("train.val_every", std::to_string(val_every));
    kv.set("train.plateau_patience", std::to_string(plateau_patience));
    kv.set("train.density_noise_std", fmt(density_noise_std));
    kv.set("train.seed", std::to_string(seed));
    kv.set("train.holdout_targets", std::to_string(holdout_targets));
    kv.set("train.time_budget_sec", fmt(time_budget_sec));
  }
};

// Per-scene view roles. Target views split into trainable targets and
// trailing held-out validation views; the splits are disjoint by construction.
template <class T>
struct ViewRoles {
  std::vector<size_t> references;
  std::vector<size_t> train_targets;
  std::vector<size_t> holdout_targets;

  static ViewRoles derive(const Scene<T>& scene, size_t holdout) {
    ViewRoles roles;
    roles.references = scene.reference_indices();
    auto targets = scene.target_indices();
    size_t keep = targets.size() > holdout ? targets.size() - holdout : 0;
    roles.train_targets.assign(targets.begin(), targets.begin() + keep);
    roles.holdout_targets.assign(targets.begin() + keep, targets.end());
    return roles;
  }
};

template <class T>
struct TrainSession {
  SrfModel<T> model;
  std::vector<std::string> param_names;
  std::vector<Tensor<T>> params;
  AdamState<T> adam;
  uint64_t step = 0;

  static TrainSession fresh(const ModelConfig& mc, uint64_t seed) {
    TrainSession s;
    s.model = SrfModel<T>::init(mc, seed);
    s.model.named_parameters(s.param_names, s.params);
    return s;
  }

  static TrainSession resume(const Checkpoint<T>& ckpt) {
    TrainSession s;
    s.model = model_from_checkpoint<T>(ckpt);
    s.model.named_parameters(s.param_names, s.params);
    if (ckpt.has_adam) s.adam = ckpt.adam;
    s.step = ckpt.step;
    return s;
  }

  Checkpoint<T> to_checkpoint(const std::string& config_echo) const {
    Checkpoint<T> ckpt;
    ckpt.step = step;
    ckpt.config_echo = config_echo;
    ckpt.names = param_names;
    ckpt.params = params;
    ckpt.has_adam = !adam.m.empty();
    ckpt.adam = adam;
    return ckpt;
  }
};

namespace detail {

inline uint64_t step_seed(uint64_t seed, uint64_t step) {
  // splitmix-style mix; each step gets an independent stream.
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (step + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// One optimization step. When leave_one_out is set (fine-tuning on a
// reference-only scene) the target is one of the reference views and the
// conditioning set is the remaining references; otherwise the target comes
// from the scene's trainable target views.
template <class T>
double train_step(const Scene<T>& scene, const ViewRoles<T>& roles, TrainSession<T>& session,
                  const TrainConfig& cfg, bool leave_one_out = false) {
  Rng rng(detail::step_seed(cfg.seed, session.step));

  size_t target_idx;
  std::vector<size_t> cond;
  if (leave_one_out) {
    if (roles.references.size() < 3) {
      throw std::runtime_error("leave-one-out training needs at least 3 reference views");
    }
    size_t pick = rng.index(roles.references.size());
    target_idx = roles.references[pick];
    for (size_t i = 0; i < roles.references.size(); ++i)
      if (i != pick) cond.push_back(roles.references[i]);
  } else {
    if (roles.train_targets.empty()) {
      throw std::runtime_error("scene has no trainable target views");
    }
    target_idx = roles.train_targets[rng.index(roles.train_targets.size())];
    cond = roles.references;
  }

  std::vector<Tensor<T>> cond_images;
  std::vector<Camera> cond_cams;
  for (size_t i : cond) {
    cond_images.push_back(scene.images[i]);
    cond_cams.push_back(scene.cameras[i]);
  }
  RefViews<T> views = encode_views(cond_images, cond_cams, session.model.encoder);

  const Camera& tcam = scene.cameras[target_idx];
  const Tensor<T>& timg = scene.images[target_idx];
  size_t w = tcam.width, h = tcam.height;

  std::vector<Tensor<T>> predicted;
  std::vector<T> target_colors;
  predicted.reserve(cfg.rays_per_batch);
  for (size_t r = 0; r < cfg.rays_per_batch; ++r) {
    size_t x = rng.index(w), y = rng.index(h);
    Ray ray = pixel_to_ray(tcam, static_cast<double>(x), static_cast<double>(y), scene.t_near,
                           scene.t_far);
    predicted.push_back(
        render_ray(views, ray, session.model, cfg.n_bins, &rng, cfg.density_noise_std));
    size_t plane = h * w;
    for (size_t c = 0; c < 3; ++c) target_colors.push_back(timg.value()[c * plane + y * w + x]);
  }
  Tensor<T> pred = stack_rows(predicted);
  Tensor<T> target = Tensor<T>::from_data({cfg.rays_per_batch, 3}, std::move(target_colors));
  Tensor<T> loss = mean_squared_error(pred, target);

  double loss_val = static_cast<double>(loss.item());
  if (!std::isfinite(loss_val)) {
    throw std::runtime_error("non-finite loss at step " + std::to_string(session.step));
  }
  loss.backward();
  for (size_t p = 0; p < session.params.size(); ++p) {
    for (T g : session.params[p].grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw std::runtime_error("non-finite gradient in " + session.param_names[p] +
                                 " at step " + std::to_string(session.step));
      }
    }
  }

  AdamConfig<T> ac;
  ac.lr = static_cast<T>(cfg.lr);
  ac.beta1 = static_cast<T>(cfg.beta1);
  ac.beta2 = static_cast<T>(cfg.beta2);
  ac.eps = static_cast<T>(cfg.adam_eps);
  adam_step(session.params, session.adam, ac);
  for (auto& p : session.params) p.zero_grad();
  session.step += 1;
  return loss_val;
}

struct EvalResult {
  size_t view_index = 0;
  double psnr = 0;
  double ssim = 0;
};

// Renders each listed view deterministically and scores it against the stored
// image. Views must be disjoint from the conditioning references.
template <class T>
std::vector<EvalResult> evaluate(const SrfModel<T>& model, const Scene<T>& scene,
                                 const std::vector<size_t>& view_indices, size_t n_bins) {
  if (view_indices.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
  auto refs = scene.reference_indices();
  for (size_t v : view_indices) {
    for (size_t r : refs) {
      if (v == r) throw std::invalid_argument("evaluate: view is in the reference set");
    }
  }
  std::vector<Tensor<T>> ref_images;
  std::vector<Camera> ref_cams;
  for (size_t i : refs) {
    ref_images.push_back(scene.images[i]);
    ref_cams.push_back(scene.cameras[i]);
  }
  NoGradGuard no_grad;
  RefViews<T> views = encode_views(ref_images, ref_cams, model.encoder);
  std::vector<EvalResult> results;
  for (size_t v : view_indices) {
    Tensor<T> rendered = render_image(views, scene.cameras[v], model, n_bins, scene.t_near,
                                      scene.t_far);
    results.push_back({v, psnr(rendered, scene.images[v]), ssim(rendered, scene.images[v])});
  }
  return results;
}

// Append-only structured metrics log: "step loss psnr wall_sec" per line.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(const std::string& path) {
    if (!path.empty()) {
      std::filesystem::create_directories(std::filesystem::path(path).parent_path());
      os_.open(path, std::ios::app);
      if (!os_) throw std::runtime_error("cannot open metrics log: " + path);
    }
  }

  void record(uint64_t step, double loss, double val_psnr, double wall_sec) {
    if (!os_.is_open()) return;
    os_ << step << " " << loss << " " << val_psnr << " " << wall_sec << "\n";
    os_.flush();
  }

 private:
  std::ofstream os_;
};

struct TrainResult {
  double first_loss = 0;
  double last_loss = 0;
  double best_val_psnr = -1;
  uint64_t steps_run = 0;
};

// Round-robin multi-scene training loop with periodic held-out validation and
// plateau early stopping.
template <class T>
TrainResult train(const std::vector<Scene<T>>& scenes, TrainSession<T>& session,
                  const TrainConfig& cfg, const std::string& config_echo,
                  MetricsLog* log = nullptr) {
  if (scenes.empty()) throw std::invalid_argument("train: no scenes");
  std::vector<ViewRoles<T>> roles;
  for (const auto& s : scenes) {
    roles.push_back(ViewRoles<T>::derive(s, cfg.holdout_targets));
    if (roles.back().train_targets.empty()) {
      throw std::runtime_error("train: a scene has no trainable target views");
    }
  }

  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  TrainResult result;
  size_t checks_without_improvement = 0;
  std::string ckpt_path;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(std::filesystem::path(cfg.out_dir) / "checkpoints");
    ckpt_path = (std::filesystem::path(cfg.out_dir) / "checkpoints" / "model.srf").string();
  }

  uint64_t start_step = session.step;
  while (session.step < start_step + cfg.max_steps) {
    if (cfg.time_budget_sec > 0 && elapsed() >= cfg.time_budget_sec) break;
    size_t scene_idx = static_cast<size_t>(session.step % scenes.size());
    double loss = train_step(scenes[scene_idx], roles[scene_idx], session, cfg);
    if (result.steps_run == 0) result.first_loss = loss;
    result.last_loss = loss;
    result.steps_run += 1;

    bool validate = cfg.val_every > 0 && session.step % cfg.val_every == 0;
    double val_psnr = -1;
    if (validate) {
      double acc = 0;
      size_t n = 0;
      for (size_t s = 0; s < scenes.size(); ++s) {
        if (roles[s].holdout_targets.empty()) continue;
        auto evals = evaluate(session.model, scenes[s], {roles[s].holdout_targets.front()},
                              cfg.n_bins);
        acc += evals.front().psnr;
        ++n;
      }
      if (n > 0) {
        val_psnr = acc / static_cast<double>(n);
        if (val_psnr > result.best_val_psnr + 1e-6) {
          result.best_val_psnr = val_psnr;
          checks_without_improvement = 0;
          if (!ckpt_path.empty()) save_checkpoint(ckpt_path, session.to_checkpoint(config_echo));
        } else {
          checks_without_improvement += 1;
        }
      }
    }
    if (log) log->record(session.step, loss, val_psnr, elapsed());
    if (checks_without_improvement >= cfg.plateau_patience && cfg.plateau_patience > 0) break;
  }
  if (!ckpt_path.empty()) {
    // Final state always persisted; the best-validation snapshot above may
    // already be newer-scored but the resume contract needs the last step.
    save_checkpoint(ckpt_path, session.to_checkpoint(config_echo));
  }
  return result;
}

struct FinetuneBudget {
  size_t max_steps = 0;        // 0 allowed (no-op)
  double max_seconds = 0;      // 0 = unlimited
};

// Continues training on the target scene's reference views only (leave-one-out
// supervision); held-out evaluation views are never passed in.
template <class T>
void finetune(TrainSession<T>& session, const Scene<T>& scene, const TrainConfig& cfg,
              const FinetuneBudget& budget, MetricsLog* log = nullptr) {
  if (budget.max_steps == 0 && budget.max_seconds == 0) return;
  if (budget.max_seconds < 0) throw std::invalid_argument("finetune: negative time budget");
  Scene<T> refs_only = scene.reference_only();
  ViewRoles<T> roles = ViewRoles<T>::derive(refs_only, 0);
  auto t0 = std::chrono::steady_clock::now();
  uint64_t start_step = session.step;
  while (true) {
    if (budget.max_steps > 0 && session.step - start_step >= budget.max_steps) break;
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget.max_seconds > 0 && secs >= budget.max_seconds) break;
    double loss = train_step(refs_only, roles, session, cfg, /*leave_one_out=*/true);
    if (log) log->record(session.step, loss, -1, secs);
  }
}

}  // namespace srf
