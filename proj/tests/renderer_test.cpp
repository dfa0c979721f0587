// Radiance decoding and emission-absorption compositing, plus the whole-image
// driver's batching invariance.

#include <gtest/gtest.h>

#include "srf/renderer.hpp"

using namespace srf;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.encoder_channels = {4, 6};
  cfg.encoder_strides = {1, 2};
  cfg.stereo_k = 6;
  cfg.decoder_hidden = {16};
  return cfg;
}

template <class T>
Tensor<T> random_image(size_t h, size_t w, uint64_t seed) {
  Rng rng(seed);
  std::vector<T> data(3 * h * w);
  for (auto& v : data) v = static_cast<T>(rng.uniform());
  return Tensor<T>::from_data({3, h, w}, std::move(data));
}

template <class T>
RefViews<T> make_views(const SrfModel<T>& model, size_t n, size_t img = 16) {
  std::vector<Tensor<T>> images;
  std::vector<Camera> cams;
  for (size_t i = 0; i < n; ++i) {
    images.push_back(random_image<T>(img, img, 40 + i));
    double az = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
    Vec3 eye{4.0 * std::cos(az), 4.0 * std::sin(az), 1.5};
    cams.push_back(look_at_camera(eye, {0, 0, 0}, {0, 0, 1}, 20.0, img, img));
  }
  return encode_views(images, cams, model.encoder);
}

}  // namespace

TEST(Decode, ZeroParametersGiveGrayAndZeroDensity) {
  // All-zero decoder: logits are zero -> sigmoid = 0.5 per channel, density
  // relu(0) = 0.
  ModelConfig cfg = small_config();
  Rng rng(1);
  auto dec = DecoderParams<double>::init(cfg, rng);
  for (auto& w : dec.weights) std::fill(w.raw_value().begin(), w.raw_value().end(), 0.0);
  auto code = Tensor<double>::from_data({cfg.stereo_k}, std::vector<double>(cfg.stereo_k, 0.3));
  Radiance<double> r = decode(code, dec);
  EXPECT_EQ(r.color.shape(), (std::vector<size_t>{3}));
  for (double c : r.color.value()) EXPECT_DOUBLE_EQ(c, 0.5);
  EXPECT_DOUBLE_EQ(r.density.value()[0], 0.0);
}

TEST(Decode, DensityNoiseShiftsLogitPreRelu) {
  ModelConfig cfg = small_config();
  Rng rng(2);
  auto dec = DecoderParams<double>::init(cfg, rng);
  for (auto& w : dec.weights) std::fill(w.raw_value().begin(), w.raw_value().end(), 0.0);
  auto code = Tensor<double>::zeros({cfg.stereo_k});
  EXPECT_DOUBLE_EQ(decode(code, dec, 2.5).density.value()[0], 2.5);
  EXPECT_DOUBLE_EQ(decode(code, dec, -2.5).density.value()[0], 0.0);  // clipped by relu
}

TEST(Composite, WeightsSumIdentity) {
  // sum_i w_i == 1 - exp(-sum_i sigma_i delta_i), checked to 1e-12 over
  // random inputs by compositing an all-ones color matrix.
  Rng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    size_t n = 1 + rng.index(40);
    std::vector<double> dens(n), deltas(n);
    double sum_sd = 0;
    for (size_t i = 0; i < n; ++i) {
      dens[i] = rng.uniform(0.0, 5.0);
      deltas[i] = rng.uniform(0.0, 0.5);
      sum_sd += dens[i] * deltas[i];
    }
    auto colors = Tensor<double>::filled({n, 3}, 1.0);
    auto densities = Tensor<double>::from_data({n}, dens);
    auto pixel = composite(colors, densities, deltas);
    double expect = 1.0 - std::exp(-sum_sd);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(pixel.value()[c], expect, 1e-12);
  }
}

TEST(Composite, ZeroDensityGivesBlack) {
  size_t n = 8;
  auto colors = Tensor<double>::filled({n, 3}, 0.7);
  auto densities = Tensor<double>::zeros({n});
  auto pixel = composite(colors, densities, std::vector<double>(n, 0.25));
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(pixel.value()[c], 0.0);
}

TEST(Composite, OpaqueFirstSampleDominates) {
  size_t n = 5;
  std::vector<double> cols(n * 3, 0.9);
  cols[0] = 0.1;
  cols[1] = 0.2;
  cols[2] = 0.3;  // first sample's color
  auto colors = Tensor<double>::from_data({n, 3}, cols);
  std::vector<double> dens(n, 1.0);
  dens[0] = 1e4;  // effectively opaque
  auto densities = Tensor<double>::from_data({n}, dens);
  auto pixel = composite(colors, densities, std::vector<double>(n, 0.5));
  EXPECT_NEAR(pixel.value()[0], 0.1, 1e-9);
  EXPECT_NEAR(pixel.value()[1], 0.2, 1e-9);
  EXPECT_NEAR(pixel.value()[2], 0.3, 1e-9);
}

TEST(Composite, TransmittanceDecreasesAlongRay) {
  // With uniform density, per-sample weights must decay monotonically.
  size_t n = 10;
  auto colors = Tensor<double>::filled({n, 3}, 1.0);
  std::vector<double> dens(n, 2.0);
  std::vector<double> deltas(n, 0.3);
  // Weight of sample i alone: composite with a one-hot color.
  double prev = 1e9;
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> onehot(n * 3, 0.0);
    onehot[i * 3] = 1.0;
    auto pix = composite(Tensor<double>::from_data({n, 3}, onehot),
                         Tensor<double>::from_data({n}, dens), deltas);
    EXPECT_LT(pix.value()[0], prev);
    prev = pix.value()[0];
  }
}

TEST(Composite, RejectsMalformedInput) {
  auto colors = Tensor<double>::filled({4, 3}, 0.5);
  auto densities = Tensor<double>::zeros({4});
  EXPECT_THROW(composite(colors, densities, std::vector<double>(3, 0.1)),
               std::invalid_argument);
  EXPECT_THROW(composite(colors, densities, {0.1, 0.1, -0.1, 0.1}), std::invalid_argument);
  EXPECT_THROW(composite(colors, Tensor<double>::zeros({5}), std::vector<double>(5, 0.1)),
               std::invalid_argument);
}

TEST(RenderRay, UntrainedModelProducesFinitePixels) {
  using F = float;
  auto model = SrfModel<F>::init(small_config(), 5);
  auto views = make_views(model, 3);
  Ray ray = pixel_to_ray(views.cameras[0], 8.0, 8.0, 2.0, 7.0);
  auto pixel = render_ray(views, ray, model, 12, nullptr);
  ASSERT_EQ(pixel.shape(), (std::vector<size_t>{3}));
  for (F v : pixel.value()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(RenderRay, DeterministicWithoutRng) {
  using F = float;
  auto model = SrfModel<F>::init(small_config(), 6);
  auto views = make_views(model, 3);
  Ray ray = pixel_to_ray(views.cameras[1], 4.0, 9.0, 2.0, 7.0);
  auto a = render_ray(views, ray, model, 8, nullptr);
  auto b = render_ray(views, ray, model, 8, nullptr);
  EXPECT_EQ(a.value(), b.value());
}

TEST(RenderImage, BatchSizeDoesNotChangePixels) {
  using F = float;
  auto model = SrfModel<F>::init(small_config(), 7);
  auto views = make_views(model, 2, 12);
  Camera target = look_at_camera({0, -4, 2}, {0, 0, 0}, {0, 0, 1}, 15.0, 12, 12);
  auto full = render_image(views, target, model, 6, 2.0, 7.0, 12 * 12);
  auto tiny = render_image(views, target, model, 6, 2.0, 7.0, 7);
  EXPECT_EQ(full.shape(), (std::vector<size_t>{3, 12, 12}));
  EXPECT_EQ(full.value(), tiny.value());  // bit-identical partitioning
}

TEST(RenderImage, LeavesNoGradientGraphBehind) {
  using F = float;
  auto model = SrfModel<F>::init(small_config(), 8);
  auto views = make_views(model, 2, 12);
  Camera target = look_at_camera({3, 0, 2}, {0, 0, 0}, {0, 0, 1}, 15.0, 12, 12);
  auto img = render_image(views, target, model, 4, 2.0, 7.0);
  EXPECT_FALSE(img.requires_grad());
}
