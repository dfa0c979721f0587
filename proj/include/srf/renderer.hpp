#pragma once

// Radiance decoding and emission-absorption compositing along rays, plus the
// batched whole-image driver.

#include <vector>

#include "srf/geometry.hpp"
#include "srf/image.hpp"
#include "srf/model.hpp"

namespace srf {

// Conditioning state for one scene: cameras plus cached feature pyramids.
template <class T>
struct RefViews {
  std::vector<Camera> cameras;
  std::vector<FeaturePyramid<T>> pyramids;

  size_t count() const { return cameras.size(); }
};

template <class T>
RefViews<T> encode_views(const std::vector<Tensor<T>>& images, const std::vector<Camera>& cameras,
                         const EncoderParams<T>& enc) {
  if (images.size() != cameras.size() || images.size() < 2) {
    throw std::invalid_argument("encode_views: need >= 2 posed images");
  }
  RefViews<T> views;
  views.cameras = cameras;
  for (const auto& img : images) views.pyramids.push_back(encode_image(img, enc));
  return views;
}

template <class T>
struct Radiance {
  Tensor<T> color;    // [3], sigmoid range
  Tensor<T> density;  // [1], ReLU range
};

// MLP decode of a stereo code. Optional zero-mean noise is added to the
// density logit pre-ReLU during training (off by default).
template <class T>
Radiance<T> decode(const Tensor<T>& code, const DecoderParams<T>& params,
                   T density_noise = T(0)) {
  Tensor<T> h = code;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    h = linear(h, params.weights[l], params.biases[l]);
    if (l + 1 < params.weights.size()) h = relu(h);
  }
  Radiance<T> out;
  out.color = sigmoid(slice_last(h, 0, 3));
  Tensor<T> logit = slice_last(h, 3, 1);
  if (density_noise != T(0)) logit = affine(logit, T(1), density_noise);
  out.density = relu(logit);
  return out;
}

// Emission-absorption quadrature:
//   T_i = exp(-sum_{j<i} sigma_j delta_j),  w_i = T_i (1 - exp(-sigma_i delta_i)),
//   pixel = sum_i w_i c_i.
// colors: [n,3], densities: [n], deltas: per-sample segment lengths.
template <class T>
Tensor<T> composite(const Tensor<T>& colors, const Tensor<T>& densities,
                    const std::vector<T>& deltas) {
  if (colors.shape().size() != 2 || colors.shape()[1] != 3 || densities.shape().size() != 1 ||
      colors.shape()[0] != densities.shape()[0] || deltas.size() != densities.size()) {
    throw std::invalid_argument("composite: expected colors [n,3], densities [n], n deltas");
  }
  for (T d : deltas) {
    if (d < T(0)) throw std::invalid_argument("composite: negative segment length");
  }
  Tensor<T> delta_t = Tensor<T>::from_data({deltas.size()}, std::vector<T>(deltas));
  Tensor<T> sd = mul(densities, delta_t);
  Tensor<T> transmittance = vexp(affine(cumsum_exclusive(sd), T(-1), T(0)));
  Tensor<T> alpha = affine(vexp(affine(sd, T(-1), T(0))), T(-1), T(1));
  Tensor<T> weights = mul(transmittance, alpha);
  return weighted_sum_rows(colors, weights);
}

// Full point pipeline: project into every reference view, build descriptors,
// run the stereo module, decode.
template <class T>
Radiance<T> point_radiance(const RefViews<T>& views, const Vec3& point, const SrfModel<T>& model,
                           T density_noise = T(0)) {
  std::vector<Tensor<T>> descriptors;
  descriptors.reserve(views.count());
  for (size_t i = 0; i < views.count(); ++i) {
    Projection p = project(views.cameras[i], point);
    descriptors.push_back(extract_descriptor(views.pyramids[i], p.u, p.v, p.behind));
  }
  Tensor<T> code = g_stereo(descriptors, model.stereo);
  return decode(code, model.decoder, density_noise);
}

// Renders one ray. rng == nullptr selects deterministic bin-center sampling.
template <class T>
Tensor<T> render_ray(const RefViews<T>& views, const Ray& ray, const SrfModel<T>& model,
                     size_t n_bins, Rng* rng, double density_noise_std = 0.0) {
  auto samples = stratified_samples(ray, n_bins, rng);
  std::vector<Tensor<T>> colors;
  std::vector<Tensor<T>> densities;
  std::vector<T> deltas;
  colors.reserve(samples.size());
  for (const auto& s : samples) {
    T noise = (density_noise_std > 0.0 && rng)
                  ? static_cast<T>(rng->normal() * density_noise_std)
                  : T(0);
    Radiance<T> r = point_radiance(views, s.point, model, noise);
    colors.push_back(r.color);
    densities.push_back(r.density);
    deltas.push_back(static_cast<T>(s.delta));
  }
  return composite(stack_rows(colors), concat_last(densities), deltas);
}

// Deterministic whole-image render; rays are processed in batches, and
// batching is pure partitioning (it never changes values). Output [3,H,W]
// in [0,1].
template <class T>
Tensor<T> render_image(const RefViews<T>& views, const Camera& target, const SrfModel<T>& model,
                       size_t n_bins, double t_near, double t_far, size_t batch_size = 256) {
  if (batch_size == 0) throw std::invalid_argument("render_image: batch size must be >= 1");
  size_t w = target.width, h = target.height;
  std::vector<T> out(3 * h * w, T(0));
  size_t total = h * w;
  for (size_t start = 0; start < total; start += batch_size) {
    size_t count = std::min(batch_size, total - start);
    parallel_for(count, [&](size_t k) {
      NoGradGuard no_grad;  // inference only; threads carry their own tape flag
      size_t idx = start + k;
      size_t y = idx / w, x = idx % w;
      Ray ray = pixel_to_ray(target, static_cast<double>(x), static_cast<double>(y), t_near, t_far);
      Tensor<T> pixel = render_ray(views, ray, model, n_bins, nullptr);
      for (size_t c = 0; c < 3; ++c) out[c * h * w + idx] = pixel.value()[c];
    });
  }
  return Tensor<T>::from_data({3, h, w}, std::move(out));
}

}  // namespace srf
