#pragma once

// Full SRF parameter set: shared image encoder, stereo module and radiance
// decoder. The decoder maps the pooled stereo code to 3 color logits plus one
// density logit; view direction is deliberately not an input.

#include <string>
#include <vector>

#include "srf/checkpoint.hpp"
#include "srf/encoder.hpp"
#include "srf/stereo.hpp"

namespace srf {

template <class T>
struct DecoderParams {
  std::vector<Tensor<T>> weights;  // layer l: [D_out, D_in]
  std::vector<Tensor<T>> biases;

  static DecoderParams init(const ModelConfig& cfg, Rng& rng) {
    DecoderParams p;
    std::vector<size_t> sizes;
    sizes.push_back(cfg.stereo_k);
    for (size_t h : cfg.decoder_hidden) sizes.push_back(h);
    sizes.push_back(4);
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
      size_t d_in = sizes[l], d_out = sizes[l + 1];
      T bound = static_cast<T>(std::sqrt(2.0 / static_cast<double>(d_in)));
      std::vector<T> w(d_out * d_in);
      for (auto& x : w) x = static_cast<T>(rng.uniform(-1.0, 1.0)) * bound;
      p.weights.push_back(Tensor<T>::from_data({d_out, d_in}, std::move(w), true));
      p.biases.push_back(Tensor<T>::zeros({d_out}, true));
    }
    return p;
  }

  void collect(std::vector<std::string>& names, std::vector<Tensor<T>>& params,
               const std::string& prefix) const {
    for (size_t l = 0; l < weights.size(); ++l) {
      names.push_back(prefix + ".fc" + std::to_string(l) + ".weight");
      params.push_back(weights[l]);
      names.push_back(prefix + ".fc" + std::to_string(l) + ".bias");
      params.push_back(biases[l]);
    }
  }
};

template <class T>
struct SrfModel {
  ModelConfig config;
  EncoderParams<T> encoder;
  StereoParams<T> stereo;
  DecoderParams<T> decoder;

  static SrfModel init(const ModelConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    SrfModel m;
    m.config = cfg;
    m.encoder = EncoderParams<T>::init(cfg, rng);
    m.stereo = StereoParams<T>::init(cfg, rng);
    m.decoder = DecoderParams<T>::init(cfg, rng);
    return m;
  }

  void named_parameters(std::vector<std::string>& names, std::vector<Tensor<T>>& params) const {
    encoder.collect(names, params, "encoder");
    stereo.collect(names, params, "stereo");
    decoder.collect(names, params, "decoder");
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<std::string> names;
    std::vector<Tensor<T>> params;
    named_parameters(names, params);
    return params;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.zero_grad();
  }

  // Replaces parameter values with those from a checkpoint (by name).
  void load_parameters(const Checkpoint<T>& ckpt) {
    std::vector<std::string> names;
    std::vector<Tensor<T>> params;
    named_parameters(names, params);
    if (names.size() != ckpt.names.size()) {
      throw std::runtime_error("checkpoint has " + std::to_string(ckpt.names.size()) +
                               " parameters, model expects " + std::to_string(names.size()));
    }
    for (size_t i = 0; i < names.size(); ++i) {
      if (names[i] != ckpt.names[i] || params[i].shape() != ckpt.params[i].shape()) {
        throw std::runtime_error("checkpoint parameter mismatch at " + names[i]);
      }
      params[i].raw_value() = ckpt.params[i].value();
    }
  }
};

// Builds a model from a checkpoint's embedded config echo.
template <class T>
SrfModel<T> model_from_checkpoint(const Checkpoint<T>& ckpt) {
  KVConfig kv = KVConfig::from_string(ckpt.config_echo);
  SrfModel<T> model = SrfModel<T>::init(ModelConfig::from_kv(kv), /*seed=*/0);
  model.load_parameters(ckpt);
  return model;
}

}  // namespace srf
