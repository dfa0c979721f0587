#pragma once

// Unsupervised stereo module: a neuron bank scores every ordered pair of view
// descriptors, the resulting Stereo Feature matrix is aggregated by
// convolution along the pair axis and max-pooled into a fixed-size code.

#include <vector>

#include "srf/config.hpp"
#include "srf/tensor_nn.hpp"

namespace srf {

template <class T>
struct StereoParams {
  Tensor<T> bank_weight;  // [K, 2D]; left half acts on f_i, right half on f_j
  Tensor<T> bank_bias;    // [K]
  std::vector<Tensor<T>> agg_kernels;  // layer 0: [K,1,4,K]; deeper: [K,K,4,1]
  std::vector<Tensor<T>> agg_biases;   // [K] each

  static StereoParams init(const ModelConfig& cfg, Rng& rng) {
    StereoParams p;
    size_t k = cfg.stereo_k;
    size_t d = cfg.descriptor_dim();
    p.bank_weight = he_uniform(rng, {k, 2 * d}, 2 * d);
    p.bank_bias = Tensor<T>::zeros({k}, true);
    for (size_t l = 0; l < cfg.agg_depth; ++l) {
      std::vector<size_t> shape =
          l == 0 ? std::vector<size_t>{k, 1, 4, k} : std::vector<size_t>{k, k, 4, 1};
      p.agg_kernels.push_back(he_uniform(rng, shape, 4 * k));
      p.agg_biases.push_back(Tensor<T>::zeros({k}, true));
    }
    return p;
  }

  size_t code_dim() const { return bank_bias.size(); }

  void collect(std::vector<std::string>& names, std::vector<Tensor<T>>& params,
               const std::string& prefix) const {
    names.push_back(prefix + ".bank.weight");
    params.push_back(bank_weight);
    names.push_back(prefix + ".bank.bias");
    params.push_back(bank_bias);
    for (size_t l = 0; l < agg_kernels.size(); ++l) {
      names.push_back(prefix + ".agg" + std::to_string(l) + ".kernel");
      params.push_back(agg_kernels[l]);
      names.push_back(prefix + ".agg" + std::to_string(l) + ".bias");
      params.push_back(agg_biases[l]);
    }
  }

 private:
  static Tensor<T> he_uniform(Rng& rng, std::vector<size_t> shape, size_t fan_in) {
    T bound = static_cast<T>(std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<T> data(Tensor<T>::numel(shape));
    for (auto& w : data) w = static_cast<T>(rng.uniform(-1.0, 1.0)) * bound;
    return Tensor<T>::from_data(std::move(shape), std::move(data), true);
  }
};

// Row order of the Stereo Feature matrix: lexicographic over ordered pairs
// (i, j), i != j, both orders present -> S = N^2 - N rows.
inline std::vector<std::pair<size_t, size_t>> ordered_pairs(size_t n) {
  std::vector<std::pair<size_t, size_t>> pairs;
  pairs.reserve(n * n - n);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      if (i != j) pairs.emplace_back(i, j);
  return pairs;
}

// Row (i,j) = ReLU(W [f_i; f_j] + b) for an [N, D] descriptor matrix. Fused:
// with W split as [W_l | W_r] this is ReLU(A_i + B_j + b) where A = F W_l^T
// and B = F W_r^T, so each view is transformed once instead of once per pair.
template <class T>
Tensor<T> pairwise_bank_matrix(const Tensor<T>& descriptors, const StereoParams<T>& params) {
  if (descriptors.shape().size() != 2) {
    throw std::invalid_argument("pairwise_bank: expected [N,D] descriptors, got " +
                                shape_str(descriptors.shape()));
  }
  size_t n = descriptors.shape()[0], d = descriptors.shape()[1];
  if (n < 2) throw std::invalid_argument("pairwise_bank: need at least 2 views");
  size_t k = params.bank_bias.size();
  if (params.bank_weight.shape()[1] != 2 * d) {
    throw std::invalid_argument("pairwise_bank: descriptor dim " + std::to_string(d) +
                                " does not match bank input width " +
                                std::to_string(params.bank_weight.shape()[1] / 2));
  }
  size_t s = n * n - n;
  const T* fv = descriptors.value().data();
  const T* wv = params.bank_weight.value().data();
  const T* bv = params.bank_bias.value().data();

  std::vector<T> a(n * k, T(0)), b(n * k, T(0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t kk = 0; kk < k; ++kk) {
      const T* wl = wv + kk * 2 * d;
      const T* wr = wl + d;
      T accl = 0, accr = 0;
      for (size_t c = 0; c < d; ++c) {
        accl += wl[c] * fv[i * d + c];
        accr += wr[c] * fv[i * d + c];
      }
      a[i * k + kk] = accl;
      b[i * k + kk] = accr;
    }
  }

  auto pairs = ordered_pairs(n);
  std::vector<T> x(s * k);
  for (size_t r = 0; r < s; ++r) {
    auto [i, j] = pairs[r];
    for (size_t kk = 0; kk < k; ++kk) {
      T v = a[i * k + kk] + b[j * k + kk] + bv[kk];
      x[r * k + kk] = v > T(0) ? v : T(0);
    }
  }

  auto pf = descriptors.node();
  auto pw = params.bank_weight.node();
  auto pb = params.bank_bias.node();
  return detail::make_op<T>(
      {s, k}, std::move(x), {pf, pw, pb}, [pf, pw, pb, n, d, k, s](Node<T>& self) {
        auto pairs = ordered_pairs(n);
        // Masked upstream gradient folded per view.
        std::vector<T> da(n * k, T(0)), db(n * k, T(0));
        std::vector<T> dbias(k, T(0));
        for (size_t r = 0; r < s; ++r) {
          auto [i, j] = pairs[r];
          for (size_t kk = 0; kk < k; ++kk) {
            if (self.value[r * k + kk] <= T(0)) continue;
            T g = self.grad[r * k + kk];
            da[i * k + kk] += g;
            db[j * k + kk] += g;
            dbias[kk] += g;
          }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t kk = 0; kk < k; ++kk) pb->grad[kk] += dbias[kk];
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          for (size_t kk = 0; kk < k; ++kk) {
            T* wl = pw->grad.data() + kk * 2 * d;
            T* wr = wl + d;
            for (size_t i = 0; i < n; ++i) {
              T ga = da[i * k + kk], gb = db[i * k + kk];
              if (ga == T(0) && gb == T(0)) continue;
              const T* f = pf->value.data() + i * d;
              for (size_t c = 0; c < d; ++c) {
                wl[c] += ga * f[c];
                wr[c] += gb * f[c];
              }
            }
          }
        }
        if (pf->requires_grad) {
          pf->ensure_grad();
          for (size_t i = 0; i < n; ++i) {
            T* fg = pf->grad.data() + i * d;
            for (size_t kk = 0; kk < k; ++kk) {
              T ga = da[i * k + kk], gb = db[i * k + kk];
              if (ga == T(0) && gb == T(0)) continue;
              const T* wl = pw->value.data() + kk * 2 * d;
              const T* wr = wl + d;
              for (size_t c = 0; c < d; ++c) fg[c] += ga * wl[c] + gb * wr[c];
            }
          }
        }
      });
}

template <class T>
Tensor<T> pairwise_bank(const std::vector<Tensor<T>>& descriptors, const StereoParams<T>& params) {
  if (descriptors.size() < 2) throw std::invalid_argument("pairwise_bank: need at least 2 views");
  return pairwise_bank_matrix(stack_rows(descriptors), params);
}

// Aggregation conv (window of 4 along the pair axis, full width, valid) +
// ReLU, then column-wise max over the remaining pair axis. N=2 gives only
// S=2 rows, which are zero-padded up to the window size.
template <class T>
Tensor<T> aggregate(const Tensor<T>& stereo_matrix, const StereoParams<T>& params) {
  if (stereo_matrix.shape().size() != 2) {
    throw std::invalid_argument("aggregate: expected [S,K], got " +
                                shape_str(stereo_matrix.shape()));
  }
  size_t k = params.code_dim();
  if (stereo_matrix.shape()[1] != k) {
    throw std::invalid_argument("aggregate: matrix width " +
                                std::to_string(stereo_matrix.shape()[1]) + " != K " +
                                std::to_string(k));
  }
  Tensor<T> x = stereo_matrix;
  if (x.shape()[0] < 4) x = pad_rows(x, 4);
  // [S,K] viewed as a one-channel image.
  Tensor<T> h = reshape(x, {size_t(1), x.shape()[0], k});
  for (size_t l = 0; l < params.agg_kernels.size(); ++l) {
    if (h.shape()[1] < 4) {
      throw std::invalid_argument(
          "aggregate: too few pair rows for aggregation depth " +
          std::to_string(params.agg_kernels.size()) + " (need more views)");
    }
    h = relu(conv2d(h, params.agg_kernels[l], params.agg_biases[l], 1, 1, Padding::kValid));
    // [K, S', 1]
  }
  Tensor<T> mv = transpose2d(reshape(h, {k, h.shape()[1]}));  // [S', K]
  return max_pool_rows(mv);
}

template <class T>
Tensor<T> g_stereo(const std::vector<Tensor<T>>& descriptors, const StereoParams<T>& params) {
  return aggregate(pairwise_bank(descriptors, params), params);
}

}  // namespace srf
