#pragma once

// Shared 2D CNN over each reference image. The per-view feature pyramid is
// computed once per scene state and queried per point; a point's descriptor is
// the raw RGB sample concatenated with a bilinear sample from every layer.

#include <vector>

#include "srf/config.hpp"
#include "srf/geometry.hpp"
#include "srf/tensor_nn.hpp"

namespace srf {

template <class T>
struct EncoderParams {
  std::vector<Tensor<T>> kernels;  // layer l: [C_l, C_{l-1}, k, k]
  std::vector<Tensor<T>> biases;   // layer l: [C_l]
  std::vector<size_t> strides;
  std::vector<size_t> factors;  // cumulative stride per layer

  static EncoderParams init(const ModelConfig& cfg, Rng& rng) {
    EncoderParams p;
    p.strides = cfg.encoder_strides;
    size_t c_in = 3;
    size_t factor = 1;
    for (size_t l = 0; l < cfg.encoder_channels.size(); ++l) {
      size_t c_out = cfg.encoder_channels[l];
      size_t k = cfg.encoder_kernel;
      size_t fan_in = c_in * k * k;
      T bound = static_cast<T>(std::sqrt(2.0 / static_cast<double>(fan_in)));
      std::vector<T> kv(c_out * c_in * k * k);
      for (auto& w : kv) w = static_cast<T>(rng.uniform(-1.0, 1.0)) * bound;
      p.kernels.push_back(Tensor<T>::from_data({c_out, c_in, k, k}, std::move(kv), true));
      p.biases.push_back(Tensor<T>::zeros({c_out}, true));
      factor *= cfg.encoder_strides[l];
      p.factors.push_back(factor);
      c_in = c_out;
    }
    return p;
  }

  void collect(std::vector<std::string>& names, std::vector<Tensor<T>>& params,
               const std::string& prefix) const {
    for (size_t l = 0; l < kernels.size(); ++l) {
      names.push_back(prefix + ".conv" + std::to_string(l) + ".kernel");
      params.push_back(kernels[l]);
      names.push_back(prefix + ".conv" + std::to_string(l) + ".bias");
      params.push_back(biases[l]);
    }
  }
};

template <class T>
struct FeaturePyramid {
  Tensor<T> image;               // raw [3,H,W], downsample factor 1
  std::vector<Tensor<T>> maps;   // CNN layer outputs
  std::vector<size_t> factors;   // per layer, cumulative stride
};

template <class T>
FeaturePyramid<T> encode_image(const Tensor<T>& image, const EncoderParams<T>& enc) {
  if (image.shape().size() != 3 || image.shape()[0] != 3) {
    throw std::invalid_argument("encode_image: expected [3,H,W], got " + shape_str(image.shape()));
  }
  size_t min_extent = 1;
  for (size_t s : enc.strides) min_extent *= s;
  if (image.shape()[1] < min_extent || image.shape()[2] < min_extent) {
    throw std::invalid_argument("encode_image: image smaller than the encoder's minimum size " +
                                std::to_string(min_extent));
  }
  FeaturePyramid<T> pyr;
  pyr.image = image;
  pyr.factors = enc.factors;
  Tensor<T> x = image;
  for (size_t l = 0; l < enc.kernels.size(); ++l) {
    x = relu(conv2d(x, enc.kernels[l], enc.biases[l], enc.strides[l], enc.strides[l],
                    Padding::kSameZero));
    pyr.maps.push_back(x);
  }
  return pyr;
}

// Descriptor at a continuous pixel location. Behind-camera and out-of-image
// projections yield zeros (zero padding inside bilinear_sample covers the
// latter). Coordinates scale into layer l by its cumulative stride.
template <class T>
Tensor<T> extract_descriptor(const FeaturePyramid<T>& pyr, double u, double v, bool behind) {
  if (behind) {
    size_t d = 3;
    for (const auto& m : pyr.maps) d += m.shape()[0];
    return Tensor<T>::zeros({d});
  }
  std::vector<Tensor<T>> parts;
  parts.push_back(bilinear_sample(pyr.image, u, v));
  for (size_t l = 0; l < pyr.maps.size(); ++l) {
    double f = static_cast<double>(pyr.factors[l]);
    parts.push_back(bilinear_sample(pyr.maps[l], u / f, v / f));
  }
  return concat_last(parts);
}

}  // namespace srf
